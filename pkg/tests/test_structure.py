import math

import numpy as np
import pytest

from oracles import all_dags, compelled_arcs_bruteforce, markov_equivalent_bruteforce
from spbn.bn import NodeType
from spbn.data import Dataset
from spbn.errors import FitFailed, NodeSetMismatch
from spbn.graph import Dag
from spbn.structure import (
    HcConfig,
    best_of_two_starts,
    cpdag_of,
    cv_score,
    fold_indices,
    hill_climb,
    shd,
)


def linear_pair(rng, n=1000, noise=0.1):
    a = rng.standard_normal(n)
    b = 2.0 * a + noise * rng.standard_normal(n)
    return Dataset(["A", "B"], np.column_stack([a, b]))


def all_lg(nodes):
    return {n: NodeType.LG for n in nodes}


# ---------------------------------------------------------------------------
# Folds and scores
# ---------------------------------------------------------------------------


def test_fold_partition_arithmetic():
    folds = fold_indices(10, 5, seed=0)
    assert [len(f) for f in folds] == [2, 2, 2, 2, 2]
    assert sorted(np.concatenate(folds).tolist()) == list(range(10))


def test_fold_assignment_depends_only_on_seed_and_n():
    a = fold_indices(23, 5, seed=9)
    b = fold_indices(23, 5, seed=9)
    for f1, f2 in zip(a, b):
        np.testing.assert_array_equal(f1, f2)


def test_cv_score_deterministic():
    rng = np.random.default_rng(0)
    data = linear_pair(rng, n=60)
    dag = Dag(["A", "B"], [("A", "B")])
    config = HcConfig(seed=4)
    first = cv_score(data, dag, all_lg(["A", "B"]), config)
    second = cv_score(data, dag, all_lg(["A", "B"]), config)
    assert first == second


def test_cv_score_gaussian_entropy_anchor():
    # Held-out log-likelihood of a fitted univariate Gaussian concentrates
    # at -N/2 * log(2 pi e).
    rng = np.random.default_rng(1)
    n = 4000
    data = Dataset(["x"], rng.standard_normal(n))
    score = cv_score(data, Dag(["x"]), all_lg(["x"]), HcConfig(seed=0))
    expected = -n / 2.0 * math.log(2.0 * math.pi * math.e)
    assert abs(score - expected) < 3.0 * math.sqrt(n)


def test_node_score_invariant_under_matched_permutation():
    # Permuting rows and applying the inverse permutation to the fold
    # index sets leaves every per-node fold score unchanged.
    from spbn.structure import node_cv_score

    rng = np.random.default_rng(9)
    data = linear_pair(rng, n=40)
    config = HcConfig(seed=6)
    folds = fold_indices(40, 5, config.seed)
    perm = rng.permutation(40)
    inverse = np.argsort(perm)
    permuted = data.take_rows(perm)
    mapped_folds = [np.sort(inverse[f]) for f in folds]
    base = node_cv_score(data, "B", ("A",), NodeType.LG, folds, config)
    moved = node_cv_score(permuted, "B", ("A",), NodeType.LG, mapped_folds, config)
    assert moved == pytest.approx(base, rel=1e-12)


def test_cv_score_fit_failure_identifies_node_and_fold():
    data = Dataset(["A", "B"], [[1.0, 1.0]] * 10)  # constant: CKDE cannot fit
    dag = Dag(["A", "B"])
    with pytest.raises(FitFailed) as info:
        cv_score(data, dag, {"A": NodeType.CKDE, "B": NodeType.LG}, HcConfig())
    assert info.value.node == "A"
    assert info.value.fold == 0


# ---------------------------------------------------------------------------
# Hill climbing
# ---------------------------------------------------------------------------


def test_hill_climb_recovers_single_arc():
    rng = np.random.default_rng(2)
    data = linear_pair(rng)
    config = HcConfig(seed=1)
    start = (Dag(["A", "B"]), all_lg(["A", "B"]))
    result = hill_climb(data, start, config)
    assert len(result.model.dag.arcs) == 1

    # Exhaustive check: the chosen structure's CV score beats the others.
    scores = {
        "empty": cv_score(data, Dag(["A", "B"]), all_lg(["A", "B"]), config),
        "ab": cv_score(data, Dag(["A", "B"], [("A", "B")]), all_lg(["A", "B"]), config),
        "ba": cv_score(data, Dag(["A", "B"], [("B", "A")]), all_lg(["A", "B"]), config),
    }
    assert result.score == pytest.approx(max(scores.values()), rel=1e-9)
    assert scores["empty"] < max(scores["ab"], scores["ba"])


def test_hill_climb_infinite_epsilon_returns_start():
    rng = np.random.default_rng(3)
    data = linear_pair(rng, n=200)
    start = (Dag(["A", "B"]), all_lg(["A", "B"]))
    result = hill_climb(data, start, HcConfig(epsilon=math.inf, seed=0))
    assert result.model.dag.arcs == frozenset()
    assert result.iterations == 0


def test_hill_climb_score_improves_by_epsilon_steps():
    rng = np.random.default_rng(4)
    n = 500
    a = rng.standard_normal(n)
    b = 1.5 * a + 0.3 * rng.standard_normal(n)
    c = -b + 0.3 * rng.standard_normal(n)
    data = Dataset(["A", "B", "C"], np.column_stack([a, b, c]))
    config = HcConfig(seed=2, epsilon=0.01)
    start = (Dag(["A", "B", "C"]), all_lg(["A", "B", "C"]))
    result = hill_climb(data, start, config)
    empty_score = cv_score(data, Dag(["A", "B", "C"]), all_lg(["A", "B", "C"]), config)
    threshold = config.epsilon * n  # per-row improvement scale by default
    assert result.score >= empty_score + threshold * result.iterations - 1e-9


def test_hill_climb_absolute_epsilon_mode_accepts_weaker_moves():
    rng = np.random.default_rng(12)
    n = 400
    a = rng.standard_normal(n)
    b = 1.5 * a + 0.3 * rng.standard_normal(n)
    data = Dataset(["A", "B"], np.column_stack([a, b]))
    start = (Dag(["A", "B"]), all_lg(["A", "B"]))
    relaxed = hill_climb(data, start, HcConfig(seed=2, per_instance_epsilon=False))
    strict = hill_climb(data, start, HcConfig(seed=2))
    assert len(relaxed.model.dag.arcs) >= len(strict.model.dag.arcs)
    assert relaxed.score >= strict.score - 1e-9


def test_candidate_moves_never_create_cycles():
    from spbn.structure import _apply_move, _candidate_moves

    dag = Dag(["A", "B", "C"], [("A", "B"), ("B", "C")])
    types = all_lg(["A", "B", "C"])
    moves = _candidate_moves(dag, types)
    assert ("add", "C", "A") not in moves  # would close the cycle
    for move in moves:
        new_dag, _ = _apply_move(dag, types, move)
        assert new_dag.topological_order() is not None


def test_hill_climb_deterministic():
    rng = np.random.default_rng(5)
    data = linear_pair(rng, n=300)
    start = (Dag(["A", "B"]), all_lg(["A", "B"]))
    first = hill_climb(data, start, HcConfig(seed=11))
    second = hill_climb(data, start, HcConfig(seed=11))
    assert first.score == second.score
    assert first.model.dag == second.model.dag


# ---------------------------------------------------------------------------
# Two starts
# ---------------------------------------------------------------------------


def test_best_of_two_starts_tie_prefers_lg():
    # With moves gated by a huge epsilon both runs return their (empty)
    # starts; scores differ in general, so force the comparison to a tie by
    # an LG-friendly dataset where both searches land on the same structure
    # and the LG start must win ties.
    rng = np.random.default_rng(6)
    data = linear_pair(rng, n=400)
    result = best_of_two_starts(data, HcConfig(seed=3))
    assert result.start in ("lg", "ckde")
    lg_only = best_of_two_starts(data, HcConfig(seed=3, starts="lg_only"))
    ckde_only = best_of_two_starts(data, HcConfig(seed=3, starts="ckde_only"))
    if lg_only.score >= ckde_only.score:
        assert result.start == "lg"
    else:
        assert result.start == "ckde"


def test_best_of_two_starts_bimodal_column_goes_ckde():
    rng = np.random.default_rng(7)
    n = 2000
    component = rng.random(n) < 0.5
    x = np.where(component, rng.normal(-3.0, 0.4, n), rng.normal(3.0, 0.4, n))
    data = Dataset(["X"], x)
    result = best_of_two_starts(data, HcConfig(seed=1))
    assert result.model.types["X"] is NodeType.CKDE

    # Direct score comparison backs the typing decision.
    config = HcConfig(seed=1)
    lg_score = cv_score(data, Dag(["X"]), {"X": NodeType.LG}, config)
    ckde_score = cv_score(data, Dag(["X"]), {"X": NodeType.CKDE}, config)
    assert ckde_score > lg_score


def test_best_of_two_starts_deterministic():
    rng = np.random.default_rng(8)
    data = linear_pair(rng, n=300)
    a = best_of_two_starts(data, HcConfig(seed=2))
    b = best_of_two_starts(data, HcConfig(seed=2))
    assert a.score == b.score and a.model.dag == b.model.dag


# ---------------------------------------------------------------------------
# CPDAGs and structural distance
# ---------------------------------------------------------------------------


def test_cpdag_two_node_chain_is_undirected():
    cpdag = cpdag_of(Dag(["A", "B"], [("A", "B")]))
    assert cpdag.directed == frozenset()
    assert cpdag.undirected == frozenset({frozenset(("A", "B"))})


def test_cpdag_collider_fully_compelled():
    cpdag = cpdag_of(Dag(["A", "B", "C"], [("A", "C"), ("B", "C")]))
    assert cpdag.directed == frozenset({("A", "C"), ("B", "C")})
    assert cpdag.undirected == frozenset()


def test_cpdag_three_chain_undirected():
    cpdag = cpdag_of(Dag(["A", "B", "C"], [("A", "B"), ("B", "C")]))
    assert cpdag.directed == frozenset()
    assert len(cpdag.undirected) == 2


def test_cpdag_matches_bruteforce_on_all_four_node_dags():
    nodes = ("A", "B", "C", "D")
    for arcs in all_dags(nodes):
        cpdag = cpdag_of(Dag(nodes, arcs))
        directed, undirected = compelled_arcs_bruteforce(nodes, arcs)
        assert cpdag.directed == frozenset(directed), arcs
        assert cpdag.undirected == frozenset(undirected), arcs


def test_shd_identical_zero():
    dag = Dag(["A", "B", "C"], [("A", "B")])
    assert shd(dag, dag) == 0


def test_shd_markov_equivalent_zero():
    assert shd(Dag(["A", "B"], [("A", "B")]), Dag(["A", "B"], [("B", "A")])) == 0


def test_shd_empty_vs_five_node_truth():
    nodes = ["X1", "X2", "X3", "X4", "X5"]
    truth = Dag(nodes, [("X1", "X3"), ("X2", "X3"), ("X3", "X4"), ("X4", "X5")])
    assert shd(Dag(nodes), truth) == 4


def test_shd_symmetric_and_zero_iff_equivalent():
    nodes = ("A", "B", "C")
    graphs = all_dags(nodes)
    for arcs_a in graphs:
        for arcs_b in graphs:
            a, b = Dag(nodes, arcs_a), Dag(nodes, arcs_b)
            d_ab, d_ba = shd(a, b), shd(b, a)
            assert d_ab == d_ba
            assert (d_ab == 0) == markov_equivalent_bruteforce(arcs_a, arcs_b, nodes)


def test_shd_node_set_mismatch():
    with pytest.raises(NodeSetMismatch):
        shd(Dag(["A", "B"]), Dag(["A", "C"]))
