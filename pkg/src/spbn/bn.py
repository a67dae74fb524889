"""Semiparametric Bayesian network: DAG plus per-node LG or CKDE conditionals.

Linear Gaussian (LG) nodes model the child as an affine function of its
parents with Gaussian noise, fitted by least squares with the maximum
likelihood variance (divisor N). Conditional KDE (CKDE) nodes model the
conditional as the ratio of a joint Gaussian KDE over (child, parents) to a
marginal KDE over the parents, where the marginal bandwidth is exactly the
principal submatrix of the joint bandwidth; only the joint bandwidth is ever
selected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .data import Dataset
from .errors import DimensionMismatch, RankDeficient
from .graph import Dag, structure_from_dict, structure_to_dict
from .kde import KdeModel
from .optimize import NmConfig
from .selectors import SelectorKind, select_bandwidth
from .spd import SpdMatrix, principal_submatrix

SIGMA_FLOOR_REL = 1e-6
SIGMA_FLOOR_ABS = 1e-12

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class NodeType(str, Enum):
    LG = "LG"
    CKDE = "CKDE"


@dataclass
class LinearGaussianCpd:
    child: str
    parents: tuple[str, ...]
    beta0: float
    betas: np.ndarray
    sigma: float

    def mean_given(self, parent_values: np.ndarray) -> np.ndarray:
        if len(self.parents) == 0:
            return np.full(parent_values.shape[0], self.beta0)
        return self.beta0 + parent_values @ self.betas

    def logpdf(self, data: Dataset) -> np.ndarray:
        child = data.column(self.child)
        parent_values = (
            data.project(self.parents).values
            if self.parents
            else np.empty((data.n, 0))
        )
        resid = child - self.mean_given(parent_values)
        return (
            -_LOG_SQRT_2PI
            - math.log(self.sigma)
            - 0.5 * (resid / self.sigma) ** 2
        )

    def sample_given(self, parent_values: np.ndarray, rng) -> np.ndarray:
        n = parent_values.shape[0]
        return self.mean_given(parent_values) + self.sigma * rng.standard_normal(n)


def fit_lg(data: Dataset, child: str, parents) -> LinearGaussianCpd:
    """Least-squares coefficients with the maximum likelihood residual scale."""
    parents = tuple(parents)
    y = data.column(child)
    n = data.n
    p = len(parents)
    if n < p + 2:
        raise RankDeficient(f"need at least {p + 2} rows to fit {child!r}|{parents}")
    design = np.column_stack(
        [np.ones(n)] + [data.column(name) for name in parents]
    )
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < p + 1:
        raise RankDeficient(f"design matrix for {child!r}|{parents} is rank deficient")
    resid = y - design @ coef
    sigma2 = float(np.mean(resid**2))
    floor = max(SIGMA_FLOOR_REL * float(np.std(y)), SIGMA_FLOOR_ABS)
    sigma = max(math.sqrt(sigma2), floor)
    return LinearGaussianCpd(
        child=child,
        parents=parents,
        beta0=float(coef[0]),
        betas=np.asarray(coef[1:], dtype=np.float64),
        sigma=sigma,
    )


@dataclass
class CkdeCpd:
    child: str
    parents: tuple[str, ...]
    joint: KdeModel  # columns are (child, *parents)
    marginal_bandwidth: SpdMatrix | None  # principal submatrix; None for roots
    marginal: KdeModel | None  # parent-column KDE with the submatrix bandwidth

    def logpdf(self, data: Dataset) -> np.ndarray:
        points = data.project((self.child,) + self.parents)
        joint_ld = self.joint.logpdf(points)
        if self.marginal is None:
            return joint_ld
        return joint_ld - self.marginal.logpdf(data.project(self.parents))

    def sample_given(self, parent_values: np.ndarray, rng) -> np.ndarray:
        """Draw the child given parent rows: pick a kernel with weight
        proportional to the marginal kernel at the parents, then draw from
        that kernel's conditional Gaussian."""
        n = parent_values.shape[0]
        train = self.joint.train.values
        if self.marginal is None:
            idx = rng.integers(0, train.shape[0], size=n)
            h = float(self.joint.bandwidth.values[0, 0])
            return train[idx, 0] + math.sqrt(h) * rng.standard_normal(n)

        h = self.joint.bandwidth.values
        alpha = h[0, 0]
        v = h[1:, 0]
        m_chol = self.marginal.chol.lower
        m_inv_v = np.linalg.solve(self.marginal_bandwidth.values, v)
        cond_var = float(alpha - v @ m_inv_v)
        cond_var = max(cond_var, 1e-300)

        linv = np.linalg.solve(m_chol, np.eye(m_chol.shape[0]))
        log_w = -0.5 * kernels.cross_sqdist(
            parent_values, train[:, 1:], linv
        )
        log_w -= log_w.max(axis=1, keepdims=True)
        weights = np.exp(log_w)
        cum = np.cumsum(weights, axis=1)
        u = rng.random(n) * cum[:, -1]
        idx = (cum < u[:, None]).sum(axis=1)

        mean = train[idx, 0] + (parent_values - train[idx, 1:]) @ m_inv_v
        return mean + math.sqrt(cond_var) * rng.standard_normal(n)


def fit_ckde(
    data: Dataset,
    child: str,
    parents,
    kind: SelectorKind,
    config: NmConfig | None = None,
    restarts: int = 1,
) -> CkdeCpd:
    """Select the joint bandwidth over (child, parents) and derive the
    marginal bandwidth as its principal submatrix."""
    parents = tuple(parents)
    joint_data = data.project((child,) + parents)
    result = select_bandwidth(
        joint_data, kind, config=config, parent_count=len(parents), restarts=restarts
    )
    joint = KdeModel(joint_data, result.bandwidth)
    if not parents:
        return CkdeCpd(child, parents, joint, None, None)
    marginal_bw = principal_submatrix(result.bandwidth)
    marginal = KdeModel(data.project(parents), marginal_bw)
    return CkdeCpd(child, parents, joint, marginal_bw, marginal)


class Spbn:
    """Fitted semiparametric Bayesian network."""

    def __init__(self, dag: Dag, types: dict, cpds: dict):
        self.dag = dag
        self.types = {n: NodeType(types[n]) for n in dag.nodes}
        self.cpds = cpds
        for node in dag.nodes:
            cpd = cpds[node]
            if cpd.child != node or tuple(cpd.parents) != dag.parents(node):
                raise DimensionMismatch(f"CPD for {node!r} does not match the DAG")

    @classmethod
    def fit(
        cls,
        data: Dataset,
        dag: Dag,
        types: dict,
        selector: SelectorKind = SelectorKind.NR,
        config: NmConfig | None = None,
        restarts: int = 1,
    ) -> "Spbn":
        cpds = {}
        for node in dag.nodes:
            parents = dag.parents(node)
            if NodeType(types[node]) is NodeType.LG:
                cpds[node] = fit_lg(data, node, parents)
            else:
                cpds[node] = fit_ckde(
                    data, node, parents, selector, config=config, restarts=restarts
                )
        return cls(dag, types, cpds)

    def logpdf(self, data: Dataset) -> np.ndarray:
        """Per-row joint log-density: sum of the per-node conditionals."""
        missing = set(self.dag.nodes) - set(data.columns)
        if missing:
            raise DimensionMismatch(f"data lacks columns {sorted(missing)}")
        total = np.zeros(data.n)
        for node in self.dag.nodes:
            total += self.cpds[node].logpdf(data)
        return total

    def total_logpdf(self, data: Dataset) -> float:
        return float(np.sum(self.logpdf(data)))

    def sample(self, n: int, seed: int) -> Dataset:
        """Ancestral sampling in topological order, deterministic per seed."""
        rng = np.random.default_rng(seed)
        columns = {}
        for node in self.dag.topological_order():
            parents = self.dag.parents(node)
            parent_values = (
                np.column_stack([columns[p] for p in parents])
                if parents
                else np.empty((n, 0))
            )
            columns[node] = self.cpds[node].sample_given(parent_values, rng)
        return Dataset(self.dag.nodes, np.column_stack([columns[c] for c in self.dag.nodes]))

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        payload = structure_to_dict(self.dag, {n: t.value for n, t in self.types.items()})
        payload["cpds"] = {}
        for node in self.dag.nodes:
            cpd = self.cpds[node]
            if isinstance(cpd, LinearGaussianCpd):
                payload["cpds"][node] = {
                    "beta0": cpd.beta0,
                    "betas": list(map(float, cpd.betas)),
                    "sigma": cpd.sigma,
                }
            else:
                payload["cpds"][node] = {
                    "bandwidth": [list(map(float, row)) for row in cpd.joint.bandwidth.values],
                    "train": [list(map(float, row)) for row in cpd.joint.train.values],
                }
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "Spbn":
        dag, types = structure_from_dict(payload)
        if types is None:
            raise DimensionMismatch("model payload lacks node types")
        cpds = {}
        for node in dag.nodes:
            parents = dag.parents(node)
            entry = payload["cpds"][node]
            if NodeType(types[node]) is NodeType.LG:
                cpds[node] = LinearGaussianCpd(
                    child=node,
                    parents=parents,
                    beta0=float(entry["beta0"]),
                    betas=np.asarray(entry["betas"], dtype=np.float64),
                    sigma=float(entry["sigma"]),
                )
            else:
                bandwidth = SpdMatrix(entry["bandwidth"])
                train = Dataset((node,) + parents, entry["train"])
                joint = KdeModel(train, bandwidth)
                if parents:
                    marginal_bw = principal_submatrix(bandwidth)
                    marginal = KdeModel(train.project(parents), marginal_bw)
                else:
                    marginal_bw = marginal = None
                cpds[node] = CkdeCpd(node, parents, joint, marginal_bw, marginal)
        return cls(dag, types, cpds)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Spbn":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
