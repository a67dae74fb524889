import json
import math

import numpy as np
import pytest
from scipy.stats import norm

from spbn.bn import NodeType
from spbn.data import Dataset
from spbn.errors import DataError
from spbn.synthetic import (
    Expr,
    builtin_net,
    load_net,
    net_from_dict,
    truth_logpdf,
    truth_logpdf_per_row,
    truth_sample,
)

FIVE = ["X1", "X2", "X3", "X4", "X5"]


def row(values):
    return Dataset(FIVE, [values])


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


def test_expr_arithmetic():
    e = Expr("0.5 * x1**2 + abs(x2) - 1 / (1 + exp(-x1))", ("x1", "x2"))
    got = e({"x1": np.array([2.0]), "x2": np.array([-3.0])})
    expected = 0.5 * 4.0 + 3.0 - 1.0 / (1.0 + math.exp(-2.0))
    assert got[0] == pytest.approx(expected, rel=1e-12)


def test_expr_logistic():
    e = Expr("logistic(x1)", ("x1",))
    assert e({"x1": np.array([0.0])})[0] == pytest.approx(0.5)


def test_expr_rejects_calls_outside_whitelist():
    with pytest.raises(DataError):
        Expr("__import__('os')", ())
    with pytest.raises(DataError):
        Expr("min(x1, 0)", ("x1",))
    with pytest.raises(DataError):
        Expr("x9 + 1", ("x1",))


# ---------------------------------------------------------------------------
# Built-in networks
# ---------------------------------------------------------------------------


def test_smooth5_probe_point():
    net = builtin_net("smooth5")
    assert truth_logpdf(net, row([0.0, 0.0, 0.0, 10.0, 0.5])) == pytest.approx(
        -4.9014, abs=5e-4
    )


def test_smooth5_factorization_matches_independent_terms():
    net = builtin_net("smooth5")
    rng = np.random.default_rng(0)
    pts = truth_sample(net, 50, seed=1).values
    x1, x2, x3, x4, x5 = (pts[:, k] for k in range(5))

    def mix2(x, w, means, sds):
        return np.log(
            w[0] * norm.pdf(x, means[0], sds[0]) + w[1] * norm.pdf(x, means[1], sds[1])
        )

    expected = (
        norm.logpdf(x1)
        + mix2(x2, (0.5, 0.5), (-2.0, 2.0), (2.0, 2.0))
        + norm.logpdf(x3, loc=x1 * x2)
        + norm.logpdf(x4, loc=10.0 + 0.8 * x3, scale=0.5)
        + norm.logpdf(x5, loc=1.0 / (1.0 + np.exp(-x4)), scale=0.5)
    )
    got = truth_logpdf_per_row(net, Dataset(FIVE, pts))
    np.testing.assert_allclose(got, expected, rtol=1e-10)
    assert truth_logpdf(net, Dataset(FIVE, pts)) == pytest.approx(
        float(expected.sum()), rel=1e-12
    )


def test_medium5_factor_logpdf_matches_independent_terms():
    net = builtin_net("medium5")
    pts = truth_sample(net, 50, seed=2).values
    x1, x2 = pts[:, 0], pts[:, 1]
    x3 = pts[:, 2]
    denom = x1**2 + x2**2 + 2.0 * np.abs(x1 * x2)
    w1, w2 = x1**2 / denom, x2**2 / denom
    w3 = 2.0 * np.abs(x1 * x2) / denom
    expected = np.log(
        w1 * norm.pdf(x3, -0.5 * x1, 1.0)
        + w2 * norm.pdf(x3, 0.5 * x2, 1.0)
        + w3 * norm.pdf(x3, 0.0, 1.0)
    )
    env = {"x1": x1, "x2": x2}
    got = net.factors["X3"].logpdf(x3, env)
    np.testing.assert_allclose(got, expected, rtol=1e-10)


def test_smooth5_first_column_moments():
    net = builtin_net("smooth5")
    n = 20_000
    sample = truth_sample(net, n, seed=3)
    assert abs(sample.column("X1").mean()) < 4.0 / math.sqrt(n)
    assert abs(sample.column("X1").var() - 1.0) < 0.05


def test_smooth5_second_column_mixture_variance():
    # Var = sum w (sigma^2 + mu^2) - (sum w mu)^2 = 0.5(4+4) + 0.5(4+4) = 8.
    net = builtin_net("smooth5")
    sample = truth_sample(net, 40_000, seed=4)
    assert abs(sample.column("X2").var() - 8.0) < 0.25


def test_truth_sample_deterministic():
    net = builtin_net("rough5")
    np.testing.assert_array_equal(
        truth_sample(net, 64, seed=5).values, truth_sample(net, 64, seed=5).values
    )


def test_rough5_equal_weights_at_unit_point():
    net = builtin_net("rough5")
    weights = net.factors["X3"].weights_at(
        {"x1": np.array([1.0]), "x2": np.array([1.0])}, 1
    )
    np.testing.assert_allclose(weights[0], [0.25, 0.25, 0.25, 0.25], rtol=1e-12)


def test_weight_normalization_including_origin():
    for name in ("medium5", "rough5"):
        net = builtin_net(name)
        factor = net.factors["X3"]
        rng = np.random.default_rng(6)
        x1 = np.concatenate([[0.0], rng.standard_normal(250) * 3.0])
        x2 = np.concatenate([[0.0], rng.standard_normal(251)[1:] * 3.0, [0.0]])[:251]
        weights = factor.weights_at({"x1": x1, "x2": x2}, x1.size)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(weights >= 0.0)
    # The degenerate origin point falls back to uniform weights.
    w0 = builtin_net("medium5").factors["X3"].weights_at(
        {"x1": np.array([0.0]), "x2": np.array([0.0])}, 1
    )
    np.testing.assert_allclose(w0[0], [1 / 3, 1 / 3, 1 / 3], rtol=1e-12)


@pytest.mark.parametrize("name", ["smooth5", "medium5", "rough5"])
def test_conditionals_integrate_to_one(name):
    net = builtin_net(name)
    rng = np.random.default_rng(7)
    parents_sample = truth_sample(net, 100, seed=8)
    for node in net.dag.nodes:
        parents = net.dag.parents(node)
        factor = net.factors[node]
        grid = np.linspace(-40.0, 40.0, 8001)
        for r in range(0, 100, 20):
            env = {
                p.lower(): np.full(grid.size, parents_sample.column(p)[r])
                for p in parents
            }
            density = np.exp(factor.logpdf(grid, env))
            assert abs(np.trapezoid(density, grid) - 1.0) < 1e-4


def test_rough5_x5_weights_positive_and_normalized():
    net = builtin_net("rough5")
    factor = net.factors["X5"]
    x4 = np.linspace(-30.0, 30.0, 101)
    weights = factor.weights_at({"x4": x4}, x4.size)
    np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(weights > 0.0)


# ---------------------------------------------------------------------------
# JSON specs
# ---------------------------------------------------------------------------


def spec_payload():
    return {
        "name": "toy",
        "nodes": ["A", "B"],
        "arcs": [["A", "B"]],
        "types": {"A": "LG", "B": "CKDE"},
        "factors": {
            "A": {"kind": "gaussian", "mean": "0", "variance": 4.0},
            "B": {
                "kind": "input_weighted_mixture",
                "weights": ["abs(a)", "1"],
                "means": ["a", "-a"],
                "variances": [1.0, 1.0],
            },
        },
    }


def test_net_from_dict_round_trip(tmp_path):
    payload = spec_payload()
    path = tmp_path / "net.json"
    path.write_text(json.dumps(payload))
    net = load_net(path)
    assert net.name == "toy"
    assert net.node_types["A"] is NodeType.LG
    sample = truth_sample(net, 500, seed=9)
    direct = net_from_dict(payload)
    assert truth_logpdf(net, sample) == truth_logpdf(direct, sample)


def test_net_from_dict_missing_factor():
    payload = spec_payload()
    del payload["factors"]["B"]
    with pytest.raises(DataError):
        net_from_dict(payload)


def test_unknown_builtin():
    with pytest.raises(DataError):
        builtin_net("nosuch")
