"""Score-based structure learning and structural comparison.

Hill climbing over DAGs with arc insertion/removal/reversal and node-type
switching, scored by k-fold cross-validated held-out log-likelihood. The
search stops when the best single-move improvement falls below a tolerance.
Structural comparison works on completed partially directed graphs so that
Markov-equivalent networks count as identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bn import NodeType, Spbn, fit_ckde, fit_lg
from .data import Dataset
from .errors import (
    FitFailed,
    InsufficientSamples,
    NodeSetMismatch,
    NotPositiveDefinite,
    OptimizerFailed,
    RankDeficient,
    SingularCovariance,
    SpbnError,
)
from .graph import Dag
from .optimize import NmConfig
from .selectors import SelectorKind

_FITTING_ERRORS = (
    RankDeficient,
    SingularCovariance,
    InsufficientSamples,
    OptimizerFailed,
    NotPositiveDefinite,
)


@dataclass(frozen=True)
class HcConfig:
    """Hill-climbing settings.

    epsilon is compared against the per-row score improvement by default
    (threshold epsilon * N): with summed cross-validated log-likelihoods an
    absolute 0.01 is far below fold noise at realistic N and lets spurious
    arcs accumulate. Set per_instance_epsilon=False for the absolute reading.
    """

    folds: int = 5
    epsilon: float = 0.01
    seed: int = 0
    selector: SelectorKind = SelectorKind.NR
    max_iterations: int | None = None  # None means 10 * d**2
    starts: str = "both"  # both | lg_only | ckde_only
    per_instance_epsilon: bool = True
    restarts: int = 1
    nm: NmConfig = field(default_factory=NmConfig)

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.starts not in ("both", "lg_only", "ckde_only"):
            raise ValueError(f"unknown starts mode {self.starts!r}")


@dataclass
class HcResult:
    model: Spbn
    score: float
    iterations: int
    start: str = ""


def fold_indices(n: int, folds: int, seed: int):
    """Deterministic fold assignment; depends only on (n, folds, seed)."""
    if n < folds:
        raise InsufficientSamples(f"{n} rows cannot be split into {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, folds)]


def _fit_node(data: Dataset, node: str, parents, ntype: NodeType, config: HcConfig):
    if ntype is NodeType.LG:
        return fit_lg(data, node, parents)
    return fit_ckde(
        data, node, parents, config.selector, config=config.nm, restarts=config.restarts
    )


def node_cv_score(
    data: Dataset, node: str, parents, ntype: NodeType, folds, config: HcConfig
) -> float:
    """Summed held-out log-likelihood contribution of one node's CPD."""
    total = 0.0
    all_idx = np.arange(data.n)
    for fold_id, held_out in enumerate(folds):
        train_idx = np.setdiff1d(all_idx, held_out, assume_unique=False)
        train = data.take_rows(train_idx)
        test = data.take_rows(held_out)
        try:
            cpd = _fit_node(train, node, parents, ntype, config)
        except _FITTING_ERRORS as exc:
            raise FitFailed(node, fold_id, exc) from exc
        total += float(np.sum(cpd.logpdf(test)))
    return total


def cv_score(data: Dataset, dag: Dag, types: dict, config: HcConfig) -> float:
    """Cross-validated log-likelihood of a structure: higher is better."""
    folds = fold_indices(data.n, config.folds, config.seed)
    return sum(
        node_cv_score(
            data, node, dag.parents(node), NodeType(types[node]), folds, config
        )
        for node in dag.nodes
    )


class _ScoreCache:
    """Per-(node, parents, type) fold-score cache; fit failures score -inf."""

    def __init__(self, data: Dataset, folds, config: HcConfig):
        self.data = data
        self.folds = folds
        self.config = config
        self._cache: dict = {}

    def node_score(self, node: str, parents, ntype: NodeType) -> float:
        key = (node, tuple(parents), ntype.value)
        if key not in self._cache:
            try:
                value = node_cv_score(
                    self.data, node, parents, ntype, self.folds, self.config
                )
            except FitFailed:
                value = -math.inf
            self._cache[key] = value
        return self._cache[key]


def _candidate_moves(dag: Dag, types: dict):
    """All legal moves, sorted by (kind, node names) for deterministic ties."""
    moves = []
    for u in dag.nodes:
        for v in dag.nodes:
            if u == v:
                continue
            if (u, v) in dag.arcs:
                moves.append(("remove", u, v))
                if not dag.has_path(u, v, skip_arc=(u, v)):
                    moves.append(("flip", u, v))
            elif (v, u) not in dag.arcs and not dag.has_path(v, u):
                moves.append(("add", u, v))
    for v in dag.nodes:
        moves.append(("switch", v, v))
    return sorted(moves)


def _apply_move(dag: Dag, types: dict, move):
    kind, u, v = move
    types = dict(types)
    if kind == "add":
        return dag.with_arc(u, v), types
    if kind == "remove":
        return dag.without_arc(u, v), types
    if kind == "flip":
        return dag.with_flipped_arc(u, v), types
    types[v] = NodeType.LG if NodeType(types[v]) is NodeType.CKDE else NodeType.CKDE
    return dag, types


def _move_delta(dag: Dag, types: dict, move, cache: _ScoreCache) -> float:
    kind, u, v = move
    if kind == "switch":
        old = cache.node_score(v, dag.parents(v), NodeType(types[v]))
        flipped = NodeType.LG if NodeType(types[v]) is NodeType.CKDE else NodeType.CKDE
        new = cache.node_score(v, dag.parents(v), flipped)
        return new - old
    new_dag, _ = _apply_move(dag, types, move)
    affected = (v,) if kind in ("add", "remove") else (u, v)
    delta = 0.0
    for node in affected:
        delta += cache.node_score(node, new_dag.parents(node), NodeType(types[node]))
        delta -= cache.node_score(node, dag.parents(node), NodeType(types[node]))
    return delta


def hill_climb(data: Dataset, start, config: HcConfig) -> HcResult:
    """Greedy best-improvement search from (dag, types).

    Candidate moves that fail to fit score -inf and simply lose; the search
    stops once the best improvement is below epsilon (optionally measured
    per instance) or the iteration cap is hit. The returned model is refit
    on all rows; the returned score is the final cross-validated total.
    """
    dag, types = start
    types = {n: NodeType(types[n]) for n in dag.nodes}
    folds = fold_indices(data.n, config.folds, config.seed)
    cache = _ScoreCache(data, folds, config)
    d = len(dag.nodes)
    max_iterations = (
        config.max_iterations if config.max_iterations is not None else 10 * d * d
    )
    threshold = config.epsilon * (data.n if config.per_instance_epsilon else 1.0)

    current = sum(
        cache.node_score(node, dag.parents(node), types[node]) for node in dag.nodes
    )
    iterations = 0
    while iterations < max_iterations:
        best_move = None
        best_delta = -math.inf
        for move in _candidate_moves(dag, types):
            delta = _move_delta(dag, types, move, cache)
            if delta > best_delta:
                best_delta = delta
                best_move = move
        if best_move is None or not (best_delta >= threshold):
            break
        dag, types = _apply_move(dag, types, best_move)
        current += best_delta
        iterations += 1

    model = Spbn.fit(
        data,
        dag,
        types,
        selector=config.selector,
        config=config.nm,
        restarts=config.restarts,
    )
    return HcResult(model=model, score=current, iterations=iterations)


def best_of_two_starts(data: Dataset, config: HcConfig, nodes=None) -> HcResult:
    """Hill climb from an empty all-LG start and an empty all-CKDE start,
    keeping the higher cross-validated score (ties go to the LG start)."""
    node_names = tuple(nodes) if nodes is not None else data.columns
    empty = Dag(node_names)
    runs = []
    if config.starts in ("both", "lg_only"):
        runs.append(("lg", {n: NodeType.LG for n in node_names}))
    if config.starts in ("both", "ckde_only"):
        runs.append(("ckde", {n: NodeType.CKDE for n in node_names}))
    best = None
    for label, types in runs:
        result = hill_climb(data, (empty, types), config)
        result.start = label
        if best is None or result.score > best.score:
            best = result
    if best is None:
        raise SpbnError("no starting structure was enabled")
    return best


# ---------------------------------------------------------------------------
# Equivalence classes: completed partially directed graphs and edit distance.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cpdag:
    """Skeleton plus compelled arcs of a Markov equivalence class."""

    nodes: tuple
    directed: frozenset  # (u, v) compelled arcs
    undirected: frozenset  # frozenset({u, v}) reversible edges


def cpdag_of(dag: Dag) -> Cpdag:
    """Compelled-edge computation: orient unshielded colliders, then close
    under the orientation propagation rules."""
    undirected = {frozenset((u, v)) for u, v in dag.arcs}
    directed: set = set()

    for v in dag.nodes:
        parents = dag.parents(v)
        for i in range(len(parents)):
            for j in range(i + 1, len(parents)):
                p, q = parents[i], parents[j]
                if not dag.adjacent(p, q):
                    directed.add((p, v))
                    directed.add((q, v))
                    undirected.discard(frozenset((p, v)))
                    undirected.discard(frozenset((q, v)))

    def adjacent(a, b):
        return (
            frozenset((a, b)) in undirected or (a, b) in directed or (b, a) in directed
        )

    changed = True
    while changed:
        changed = False
        for edge in sorted(undirected, key=sorted):
            x, y = sorted(edge)
            for a, b in ((x, y), (y, x)):
                oriented = False
                # chain a <- z with z, b non-adjacent forces a -> b
                for z, t in directed:
                    if t == a and z != b and not adjacent(z, b):
                        oriented = True
                        break
                # directed path a -> w -> b alongside edge a - b forces a -> b
                if not oriented:
                    for a2, w in directed:
                        if a2 == a and (w, b) in directed:
                            oriented = True
                            break
                # two nonadjacent parents of b both joined to a by edges
                if not oriented:
                    candidates = [
                        z
                        for z, t in directed
                        if t == b and frozenset((a, z)) in undirected
                    ]
                    for i in range(len(candidates)):
                        for j in range(i + 1, len(candidates)):
                            if not adjacent(candidates[i], candidates[j]):
                                oriented = True
                                break
                        if oriented:
                            break
                if oriented:
                    directed.add((a, b))
                    undirected.discard(edge)
                    changed = True
                    break
            if changed:
                break

    return Cpdag(
        nodes=dag.nodes, directed=frozenset(directed), undirected=frozenset(undirected)
    )


def _edge_state(cpdag: Cpdag, a: str, b: str):
    if frozenset((a, b)) in cpdag.undirected:
        return "undirected"
    if (a, b) in cpdag.directed:
        return "forward"
    if (b, a) in cpdag.directed:
        return "backward"
    return "absent"


def shd(a: Dag, b: Dag) -> int:
    """Structural Hamming distance between the equivalence classes of two
    DAGs: one unit per missing, extra, or differently oriented edge."""
    if set(a.nodes) != set(b.nodes):
        raise NodeSetMismatch("graphs must share one node set")
    ca, cb = cpdag_of(a), cpdag_of(b)
    names = sorted(a.nodes)
    distance = 0
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            if _edge_state(ca, names[i], names[j]) != _edge_state(cb, names[i], names[j]):
                distance += 1
    return distance
