"""Multivariate Gaussian kernel density estimation.

A fitted model keeps its training rows, the SPD bandwidth matrix, and the
bandwidth's Cholesky factor. Densities are always produced in log space via
log-sum-exp so the tiny-bandwidth regimes explored by cross-validation do not
underflow, and quadratic forms go through triangular solves of the Cholesky
factor rather than an explicit inverse.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .data import Dataset
from .errors import DimensionMismatch, InsufficientSamples
from .spd import SpdMatrix, cholesky


def _inverse_lower(chol_lower: np.ndarray) -> np.ndarray:
    return np.linalg.solve(chol_lower, np.eye(chol_lower.shape[0]))


def gaussian_kernel_logpdf(h: SpdMatrix, delta) -> float:
    """Log of the centered Gaussian density with covariance h at offset delta."""
    delta = np.atleast_1d(np.asarray(delta, dtype=np.float64))
    if delta.shape != (h.dim,):
        raise DimensionMismatch(f"offset of length {delta.shape} for dim {h.dim}")
    factor = cholesky(h)
    z = np.linalg.solve(factor.lower, delta)
    return kernels.gaussian_log_norm(h.dim, factor.log_det) - 0.5 * float(z @ z)


class KdeModel:
    """Gaussian KDE: uniform mixture of N(X_i, H) over the training rows."""

    __slots__ = ("train", "bandwidth", "chol", "_linv")

    def __init__(self, train: Dataset, bandwidth: SpdMatrix):
        if bandwidth.dim != train.d:
            raise DimensionMismatch(
                f"bandwidth dim {bandwidth.dim} != data dim {train.d}"
            )
        self.train = train
        self.bandwidth = bandwidth
        self.chol = cholesky(bandwidth)
        self._linv = _inverse_lower(self.chol.lower)

    @property
    def n(self) -> int:
        return self.train.n

    @property
    def d(self) -> int:
        return self.train.d

    def _align(self, points: Dataset) -> np.ndarray:
        if points.columns == self.train.columns:
            return points.values
        if set(self.train.columns) <= set(points.columns):
            return points.project(self.train.columns).values
        if points.d != self.d:
            raise DimensionMismatch(
                f"query dim {points.d} != model dim {self.d}"
            )
        return points.values

    def logpdf(self, points: Dataset) -> np.ndarray:
        """Log-density of each query row under the KDE."""
        queries = self._align(points)
        shift = kernels.gaussian_log_norm(self.d, self.chol.log_det) - math.log(self.n)
        return kernels.logdens_cross(queries, self.train.values, self._linv, shift)

    def loo_logpdf(self) -> np.ndarray:
        """Entry i is the log-density at row i of the KDE on the other rows."""
        if self.n < 2:
            raise InsufficientSamples("leave-one-out needs at least two rows")
        shift = kernels.gaussian_log_norm(self.d, self.chol.log_det) - math.log(
            self.n - 1
        )
        return kernels.logdens_loo(self.train.values, self._linv, shift)

    def sample(self, n: int, seed: int) -> Dataset:
        """Draw n rows: a uniformly chosen training row plus N(0, H) noise."""
        if n < 1:
            raise ValueError("sample count must be positive")
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, self.n, size=n)
        noise = rng.standard_normal((n, self.d))
        rows = self.train.values[idx] + noise @ self.chol.lower.T
        return Dataset(self.train.columns, rows)
