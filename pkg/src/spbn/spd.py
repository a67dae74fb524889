"""Dense symmetric positive definite matrix utilities.

Everything the bandwidth machinery needs from linear algebra lives here:
Cholesky factorization, principal submatrices, symmetric eigenvalues, and
the log-Cholesky parametrization that maps the SPD cone bijectively onto
an unconstrained real vector (so derivative-free search never has to worry
about staying positive definite).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionTooSmall, NonFinite, NotPositiveDefinite

# Inputs whose relative asymmetry exceeds this are rejected instead of
# silently averaged.
ASYMMETRY_TOL = 1e-9


class SpdMatrix:
    """Symmetric positive definite matrix, stored exactly symmetric.

    Construction symmetrizes via (m + m.T) / 2 and rejects inputs whose
    asymmetry is above ``ASYMMETRY_TOL`` relative to the largest entry.
    Positive definiteness is verified lazily, by the first factorization.
    """

    __slots__ = ("values",)

    def __init__(self, values):
        m = np.array(values, dtype=np.float64, copy=True)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NonFinite("matrix entries must be finite")
        scale = max(float(np.abs(m).max()), 1.0)
        if float(np.abs(m - m.T).max()) > ASYMMETRY_TOL * scale:
            raise ValueError("matrix is not symmetric")
        sym = (m + m.T) / 2.0
        sym.setflags(write=False)
        self.values = sym

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "SpdMatrix":
        return cls(np.eye(dim))

    @classmethod
    def from_diagonal(cls, diag) -> "SpdMatrix":
        return cls(np.diag(np.asarray(diag, dtype=np.float64)))

    def scaled(self, factor: float) -> "SpdMatrix":
        return SpdMatrix(self.values * float(factor))

    def __repr__(self):
        return f"SpdMatrix({self.values.tolist()!r})"


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with L @ L.T equal to the source matrix."""

    lower: np.ndarray
    log_det: float  # log-determinant of the source matrix, 2 * sum(log diag L)


def cholesky(m: SpdMatrix) -> CholeskyFactor:
    """Factor an SPD matrix; raises NotPositiveDefinite when a pivot fails."""
    try:
        lower = np.linalg.cholesky(m.values)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    diag = np.diag(lower)
    if not np.all(diag > 0.0) or not np.all(np.isfinite(lower)):
        raise NotPositiveDefinite("nonpositive pivot in Cholesky factorization")
    lower = lower.copy()
    lower.setflags(write=False)
    return CholeskyFactor(lower=lower, log_det=2.0 * float(np.sum(np.log(diag))))


def principal_submatrix(m: SpdMatrix) -> SpdMatrix:
    """Drop the first row and column, keeping the trailing principal block.

    By convention the conditioned variable occupies coordinate 0 of a joint
    bandwidth matrix, so this returns the bandwidth block of the remaining
    coordinates.
    """
    if m.dim < 2:
        raise DimensionTooSmall("cannot take a principal submatrix of a 1x1 matrix")
    return SpdMatrix(m.values[1:, 1:])


def eigenvalues_sorted(m) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix (SpdMatrix or ndarray)."""
    values = m.values if isinstance(m, SpdMatrix) else np.asarray(m, dtype=np.float64)
    return np.linalg.eigvalsh(values)


def param_length(dim: int) -> int:
    return dim * (dim + 1) // 2


def dim_from_param_length(length: int) -> int:
    dim = int(round((np.sqrt(8.0 * length + 1.0) - 1.0) / 2.0))
    if param_length(dim) != length:
        raise ValueError(f"{length} is not a triangular number")
    return dim


def encode_spd(m: SpdMatrix) -> np.ndarray:
    """Log-Cholesky coordinates: lower triangle of L, diagonal as logs.

    The packing order is row-major over the lower triangle, so the identity
    encodes to the zero vector.
    """
    lower = cholesky(m).lower
    d = m.dim
    theta = np.empty(param_length(d))
    k = 0
    for i in range(d):
        for j in range(i + 1):
            theta[k] = np.log(lower[i, i]) if i == j else lower[i, j]
            k += 1
    return theta


def decode_spd(theta) -> SpdMatrix:
    """Inverse of encode_spd; yields an SPD matrix for any finite vector."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1:
        raise ValueError("parameter vector must be one-dimensional")
    if not np.all(np.isfinite(theta)):
        raise NonFinite("parameter vector must be finite")
    d = dim_from_param_length(theta.shape[0])
    lower = np.zeros((d, d))
    k = 0
    for i in range(d):
        for j in range(i + 1):
            lower[i, j] = np.exp(theta[k]) if i == j else theta[k]
            k += 1
    values = lower @ lower.T
    if not np.all(np.isfinite(values)):
        raise NonFinite("decoded matrix overflowed to non-finite entries")
    return SpdMatrix(values)
