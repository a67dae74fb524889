"""Ground-truth generative densities with exact log-density evaluation.

Each network is a DAG whose nodes carry one of three conditional forms:

* ``gaussian``: Normal(mean-expression(parents), variance).
* ``fixed_mixture``: Gaussian mixture with constant weights.
* ``input_weighted_mixture``: Gaussian mixture whose weights (and means) are
  expressions of the parent values. Raw weights are normalized by their sum,
  so the form is a density by construction; when every raw weight vanishes
  the weights fall back to uniform (the zero point of the weight formulas is
  a measure-zero event, but grid evaluation must still be total there).

Mean and weight expressions use a small grammar over the lower-cased parent
names: numbers, + - * /, ** with numeric exponent, unary minus, abs(x),
exp(x) and logistic(x) = 1 / (1 + exp(-x)).

The built-in five-node trio (smooth5, medium5, rough5) shares the DAG
X1 -> X3 <- X2, X3 -> X4 -> X5 at increasing roughness. Networks can also be
declared in JSON ({nodes, arcs, types, factors}) and loaded from a file.
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass

import numpy as np

from .bn import NodeType
from .data import Dataset
from .errors import DataError, DimensionMismatch
from .graph import Dag

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

_ALLOWED_FUNCS = {
    "abs": np.abs,
    "exp": np.exp,
    "logistic": lambda t: 1.0 / (1.0 + np.exp(-t)),
}

_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
    ast.Call,
    ast.Name,
    ast.Constant,
    ast.Load,
)


class Expr:
    """Compiled arithmetic expression over named parent values."""

    __slots__ = ("source", "_code")

    def __init__(self, source, variables):
        if isinstance(source, (int, float)):
            source = repr(float(source))
        self.source = str(source)
        tree = ast.parse(self.source, mode="eval")
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED_NODES):
                raise DataError(
                    f"disallowed syntax {type(node).__name__!r} in {self.source!r}"
                )
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_FUNCS:
                    raise DataError(f"unknown function call in {self.source!r}")
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise DataError(f"non-numeric constant in {self.source!r}")
            if (
                isinstance(node, ast.Name)
                and node.id not in _ALLOWED_FUNCS
                and node.id not in variables
            ):
                raise DataError(f"unknown name {node.id!r} in {self.source!r}")
        self._code = compile(tree, "<factor>", "eval")

    def __call__(self, env: dict) -> np.ndarray:
        scope = {"__builtins__": {}}
        scope.update(_ALLOWED_FUNCS)
        scope.update(env)
        return np.asarray(eval(self._code, scope), dtype=np.float64)

    def __repr__(self):
        return f"Expr({self.source!r})"


def _normal_logpdf(x, mean, variance):
    return -_LOG_SQRT_2PI - 0.5 * math.log(variance) - (x - mean) ** 2 / (2.0 * variance)


@dataclass(frozen=True)
class GaussianFactor:
    mean: Expr
    variance: float

    def logpdf(self, child, env):
        return _normal_logpdf(child, self.mean(env), self.variance)

    def sample(self, env, n, rng):
        mean = np.broadcast_to(self.mean(env), (n,))
        return mean + math.sqrt(self.variance) * rng.standard_normal(n)


@dataclass(frozen=True)
class FixedMixtureFactor:
    weights: tuple
    means: tuple
    variances: tuple

    def __post_init__(self):
        if not math.isclose(sum(self.weights), 1.0, abs_tol=1e-12):
            raise DataError("fixed mixture weights must sum to one")
        if any(w <= 0 for w in self.weights):
            raise DataError("fixed mixture weights must be positive")

    def logpdf(self, child, env):
        parts = [
            math.log(w) + _normal_logpdf(child, m, v)
            for w, m, v in zip(self.weights, self.means, self.variances)
        ]
        stacked = np.stack(parts)
        peak = stacked.max(axis=0)
        return peak + np.log(np.exp(stacked - peak).sum(axis=0))

    def sample(self, env, n, rng):
        cum = np.cumsum(self.weights)
        component = np.searchsorted(cum, rng.random(n) * cum[-1])
        means = np.asarray(self.means)[component]
        sds = np.sqrt(np.asarray(self.variances))[component]
        return means + sds * rng.standard_normal(n)


@dataclass(frozen=True)
class InputWeightedMixtureFactor:
    weight_exprs: tuple
    mean_exprs: tuple
    variances: tuple

    def weights_at(self, env, n):
        """Normalized weights per row; uniform where every raw weight is 0."""
        raw = np.column_stack(
            [np.broadcast_to(w(env), (n,)) for w in self.weight_exprs]
        )
        if np.any(raw < 0):
            raise DataError("mixture weight expression produced a negative value")
        total = raw.sum(axis=1, keepdims=True)
        k = raw.shape[1]
        safe_total = np.where(total > 0, total, 1.0)
        return np.where(total > 0, raw / safe_total, np.full(k, 1.0 / k))

    def _means(self, env, n):
        return np.column_stack(
            [np.broadcast_to(m(env), (n,)) for m in self.mean_exprs]
        )

    def logpdf(self, child, env):
        n = child.shape[0]
        weights = self.weights_at(env, n)
        means = self._means(env, n)
        parts = np.stack(
            [
                _normal_logpdf(child, means[:, k], self.variances[k])
                for k in range(len(self.variances))
            ],
            axis=1,
        )
        with np.errstate(divide="ignore"):
            parts = parts + np.log(weights)
        peak = parts.max(axis=1)
        return peak + np.log(np.exp(parts - peak[:, None]).sum(axis=1))

    def sample(self, env, n, rng):
        weights = self.weights_at(env, n)
        means = self._means(env, n)
        cum = np.cumsum(weights, axis=1)
        u = rng.random(n) * cum[:, -1]
        component = (cum < u[:, None]).sum(axis=1)
        rows = np.arange(n)
        sds = np.sqrt(np.asarray(self.variances))[component]
        return means[rows, component] + sds * rng.standard_normal(n)


@dataclass(frozen=True)
class GroundTruthNet:
    name: str
    dag: Dag
    factors: dict
    node_types: dict  # natural LG/CKDE typing of each conditional


def _env(columns: dict, parents) -> dict:
    """Expression environment: parent columns keyed by lower-cased name."""
    return {p.lower(): columns[p] for p in parents}


def truth_sample(net: GroundTruthNet, n: int, seed: int) -> Dataset:
    """Ancestral sample from the ground-truth factors, deterministic per seed."""
    if n < 1:
        raise ValueError("sample count must be positive")
    rng = np.random.default_rng(seed)
    columns = {}
    for node in net.dag.topological_order():
        env = _env(columns, net.dag.parents(node))
        columns[node] = net.factors[node].sample(env, n, rng)
    return Dataset(net.dag.nodes, np.column_stack([columns[c] for c in net.dag.nodes]))


def truth_logpdf_per_row(net: GroundTruthNet, data: Dataset) -> np.ndarray:
    missing = set(net.dag.nodes) - set(data.columns)
    if missing:
        raise DimensionMismatch(f"data lacks columns {sorted(missing)}")
    columns = {name: data.column(name) for name in net.dag.nodes}
    total = np.zeros(data.n)
    for node in net.dag.nodes:
        env = _env(columns, net.dag.parents(node))
        total += net.factors[node].logpdf(columns[node], env)
    return total


def truth_logpdf(net: GroundTruthNet, data: Dataset) -> float:
    """Exact total log-density of the rows under the ground truth."""
    return float(np.sum(truth_logpdf_per_row(net, data)))


def loglik_abs_error(net: GroundTruthNet, model, validation: Dataset) -> float:
    """Absolute gap between a model's total log-likelihood and the truth's."""
    return abs(model.total_logpdf(validation) - truth_logpdf(net, validation))


# ---------------------------------------------------------------------------
# Built-in five-node networks.
# ---------------------------------------------------------------------------

_FIVE_NODE_ARCS = [("X1", "X3"), ("X2", "X3"), ("X3", "X4"), ("X4", "X5")]
_FIVE_NODE_TYPES = {
    "X1": NodeType.LG,
    "X2": NodeType.CKDE,
    "X3": NodeType.CKDE,
    "X4": NodeType.LG,
    "X5": NodeType.CKDE,
}


def _five_node_dag() -> Dag:
    return Dag(["X1", "X2", "X3", "X4", "X5"], _FIVE_NODE_ARCS)


def _smooth5() -> GroundTruthNet:
    factors = {
        "X1": GaussianFactor(Expr("0", ()), 1.0),
        "X2": FixedMixtureFactor((0.5, 0.5), (-2.0, 2.0), (4.0, 4.0)),
        "X3": GaussianFactor(Expr("x1 * x2", ("x1", "x2")), 1.0),
        "X4": GaussianFactor(Expr("10 + 0.8 * x3", ("x3",)), 0.25),
        "X5": GaussianFactor(Expr("logistic(x4)", ("x4",)), 0.25),
    }
    return GroundTruthNet("smooth5", _five_node_dag(), factors, dict(_FIVE_NODE_TYPES))


def _medium5() -> GroundTruthNet:
    factors = {
        "X1": GaussianFactor(Expr("0", ()), 9.0),
        "X2": FixedMixtureFactor(
            (0.25, 0.25, 0.25, 0.25), (-8.0, 8.0, -4.0, 4.0), (1.0, 1.0, 0.25, 0.25)
        ),
        "X3": InputWeightedMixtureFactor(
            tuple(
                Expr(w, ("x1", "x2"))
                for w in ("x1**2", "x2**2", "2 * abs(x1 * x2)")
            ),
            tuple(Expr(m, ("x1", "x2")) for m in ("-0.5 * x1", "0.5 * x2", "0")),
            (1.0, 1.0, 1.0),
        ),
        "X4": GaussianFactor(Expr("0.5 * x3", ("x3",)), 0.25),
        "X5": InputWeightedMixtureFactor(
            (Expr("logistic(x4 / 3)", ("x4",)), Expr("1 - logistic(x4 / 3)", ("x4",))),
            (Expr("-2", ("x4",)), Expr("2", ("x4",))),
            (0.25, 0.25),
        ),
    }
    return GroundTruthNet("medium5", _five_node_dag(), factors, dict(_FIVE_NODE_TYPES))


def _rough5() -> GroundTruthNet:
    factors = {
        "X1": GaussianFactor(Expr("0", ()), 9.0),
        "X2": FixedMixtureFactor(
            (0.2, 0.2, 0.2, 0.2, 0.2),
            (-8.0, 8.0, -4.0, 0.0, 4.0),
            (1.0, 1.0, 0.25, 0.25, 0.25),
        ),
        "X3": InputWeightedMixtureFactor(
            tuple(
                Expr(w, ("x1", "x2"))
                for w in ("x1**2", "x2**2", "abs(x1)", "abs(x2)")
            ),
            tuple(
                Expr(m, ("x1", "x2"))
                for m in ("-0.5 * x1**2", "0.5 * x2**2", "0.5 * x1", "-0.5 * x2")
            ),
            (1.0, 1.0, 1.0, 1.0),
        ),
        "X4": GaussianFactor(Expr("0.5 * x3", ("x3",)), 0.25),
        "X5": InputWeightedMixtureFactor(
            tuple(
                Expr(w, ("x4",))
                for w in (
                    "1 / (1 + exp(-x4 / 3) / 2)",
                    "1 / (1 + exp(-x4 / 3))",
                    "1 - 1 / (1 + exp(-x4 / 3))",
                )
            ),
            (Expr("-2", ("x4",)), Expr("0", ("x4",)), Expr("2", ("x4",))),
            (0.25, 0.25, 0.25),
        ),
    }
    return GroundTruthNet("rough5", _five_node_dag(), factors, dict(_FIVE_NODE_TYPES))


BUILTIN_NETS = {
    "smooth5": _smooth5,
    "medium5": _medium5,
    "rough5": _rough5,
}


def builtin_net(name: str) -> GroundTruthNet:
    try:
        return BUILTIN_NETS[name]()
    except KeyError:
        raise DataError(
            f"unknown network {name!r}; built-ins: {sorted(BUILTIN_NETS)}"
        ) from None


# ---------------------------------------------------------------------------
# JSON density specs.
# ---------------------------------------------------------------------------


def _factor_from_dict(node: str, parents, payload: dict):
    kind = payload.get("kind")
    names = tuple(p.lower() for p in parents)
    if kind == "gaussian":
        return GaussianFactor(Expr(payload["mean"], names), float(payload["variance"]))
    if kind == "fixed_mixture":
        return FixedMixtureFactor(
            tuple(float(w) for w in payload["weights"]),
            tuple(float(m) for m in payload["means"]),
            tuple(float(v) for v in payload["variances"]),
        )
    if kind == "input_weighted_mixture":
        return InputWeightedMixtureFactor(
            tuple(Expr(w, names) for w in payload["weights"]),
            tuple(Expr(m, names) for m in payload["means"]),
            tuple(float(v) for v in payload["variances"]),
        )
    raise DataError(f"unknown factor kind {kind!r} for node {node!r}")


def net_from_dict(payload: dict) -> GroundTruthNet:
    dag = Dag(payload["nodes"], [tuple(a) for a in payload.get("arcs", [])])
    factors = {}
    for node in dag.nodes:
        try:
            factors[node] = _factor_from_dict(
                node, dag.parents(node), payload["factors"][node]
            )
        except KeyError as exc:
            raise DataError(f"missing factor for node {node!r}") from exc
    types_payload = payload.get("types", {})
    types = {node: NodeType(types_payload.get(node, "CKDE")) for node in dag.nodes}
    return GroundTruthNet(str(payload.get("name", "custom")), dag, factors, types)


def load_net(path) -> GroundTruthNet:
    with open(path, "r", encoding="utf-8") as fh:
        return net_from_dict(json.load(fh))
