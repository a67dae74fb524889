"""Bandwidth selection for Gaussian KDEs over unconstrained SPD matrices.

Four selectors are provided:

* ``nr``  - normal (reference) rule, closed form: a scalar multiple of the
  sample covariance. Fast and robust but oversmooths away from normality.
* ``ucv`` - unbiased (least-squares) cross-validation. The criterion is the
  exact Gaussian-convolution form of the integrated-squared-error estimate,
    UCV(H) = N^-2 sum_{i,j} phi_{2H}(Xi - Xj)
             - 2 [N (N-1)]^-1 sum_{i != j} phi_H(Xi - Xj).
* ``scv`` - smooth cross-validation with pilot bandwidth G:
    SCV(H; G) = N^-1 |H|^-1/2 R(K)
                + N^-2 sum_{i,j} (phi_{2H+2G} - 2 phi_{H+2G} + phi_{2G})(Xi - Xj),
  with R(K) = (4 pi)^{-d/2} for the Gaussian kernel.
* ``pi``  - plug-in minimization of the asymptotic integrated squared error,
    PI(H; G) = N^-1 |H|^-1/2 R(K) + 1/4 (vec H)' Psi4_hat(G) (vec H),
  where Psi4_hat(G) collects the pairwise plug-in estimates of the integrated
  fourth-order density-derivative functionals.

The data-driven criteria are minimized with Nelder-Mead over log-Cholesky
coordinates, started at the normal-rule matrix; candidates outside the SPD
cone evaluate to +inf. SCV and PI first fix G through a two-stage pilot
scheme (normal-scale start, then a full-matrix refinement of the pilot
criterion).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize_scalar

from . import kernels
from .data import Dataset
from .errors import (
    DimensionMismatch,
    InsufficientSamples,
    NonFinite,
    NotPositiveDefinite,
    OptimizerFailed,
    SingularCovariance,
)
from .optimize import NmConfig, NmResult, nelder_mead
from .spd import SpdMatrix, cholesky, decode_spd, encode_spd

_RESTART_SALT = 9235017


class SelectorKind(str, Enum):
    NR = "nr"
    UCV = "ucv"
    SCV = "scv"
    PI = "pi"


DATA_DRIVEN = (SelectorKind.UCV, SelectorKind.SCV, SelectorKind.PI)


@dataclass
class SelectorResult:
    bandwidth: SpdMatrix
    objective: float  # criterion value at the bandwidth; NaN for the normal rule
    pilot: SpdMatrix | None = None
    diagnostics: NmResult | None = None


def sample_covariance(data: Dataset) -> np.ndarray:
    if data.n < 2:
        raise SingularCovariance("covariance undefined for fewer than two rows")
    cov = np.atleast_2d(np.cov(data.values, rowvar=False, ddof=1))
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    return cov


def nr_scale_factor(d: int, n: int, parent_count: int) -> float:
    """Scalar in front of the sample covariance for the normal rule.

    The constant carries exponent 1/(d+4) and the sample size carries
    exponent -2/(parent_count+5); both are kept exactly in this form so the
    convention can be tested against alternatives.
    """
    return (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * float(n) ** (
        -2.0 / (parent_count + 5.0)
    )


def nr_bandwidth(data: Dataset, parent_count: int) -> SpdMatrix:
    """Normal-rule bandwidth: nr_scale_factor times the sample covariance.

    For a conditional-density joint over (variable, parents), parent_count is
    the number of conditioning columns, i.e. data.d - 1.
    """
    cov = sample_covariance(data)
    return SpdMatrix(nr_scale_factor(data.d, data.n, parent_count) * cov)


def _chol_linv(matrix: SpdMatrix):
    factor = cholesky(matrix)
    linv = np.linalg.solve(factor.lower, np.eye(matrix.dim))
    norm = kernels.gaussian_log_norm(matrix.dim, factor.log_det)
    return linv, norm


def ucv_objective(data: Dataset, h: SpdMatrix) -> float:
    """Least-squares cross-validation criterion; smaller is better."""
    if data.n < 2:
        raise InsufficientSamples("cross-validation needs at least two rows")
    if h.dim != data.d:
        raise DimensionMismatch(f"bandwidth dim {h.dim} != data dim {data.d}")
    n = data.n
    linv, log_norm = _chol_linv(h)
    c_h = math.exp(log_norm)
    c_2h = c_h * 2.0 ** (-0.5 * data.d)
    s_half, s_quarter = kernels.ucv_pair_sums(data.values, linv)
    squared_term = c_2h * (n + 2.0 * s_quarter) / (n * n)
    loo_term = 4.0 * c_h * s_half / (n * (n - 1.0))
    return squared_term - loo_term


def _gaussian_roughness(d: int) -> float:
    return (4.0 * math.pi) ** (-0.5 * d)


def scv_objective(data: Dataset, h: SpdMatrix, g: SpdMatrix) -> float:
    """Smooth cross-validation criterion with pilot bandwidth g."""
    if h.dim != data.d or g.dim != data.d:
        raise DimensionMismatch("bandwidth dimensions must match the data")
    n = data.n
    h_factor = cholesky(h)
    iv = _gaussian_roughness(data.d) * math.exp(-0.5 * h_factor.log_det) / n

    hv, gv = h.values, g.values
    linv1, log1 = _chol_linv(SpdMatrix(2.0 * hv + 2.0 * gv))
    linv2, log2 = _chol_linv(SpdMatrix(hv + 2.0 * gv))
    linv3, log3 = _chol_linv(SpdMatrix(2.0 * gv))
    c1, c2, c3 = math.exp(log1), math.exp(log2), math.exp(log3)
    s1, s2, s3 = kernels.triple_pair_sums(data.values, linv1, linv2, linv3)
    diagonal = n * (c1 - 2.0 * c2 + c3)
    offdiag = 2.0 * (c1 * s1 - 2.0 * c2 * s2 + c3 * s3)
    return iv + (diagonal + offdiag) / (n * n)


# ---------------------------------------------------------------------------
# Fourth- and sixth-order Gaussian derivative tensors.
#
# With u = A delta and A the inverse covariance, the fourth derivative of the
# Gaussian density is phi(delta) * (u x u x u x u - sym6(u u', A) + sym3(A, A))
# where sym6 pairs two indices on u u' and two on A in all six ways, and sym3
# pairs all four indices on A in the three perfect matchings.
# ---------------------------------------------------------------------------


def _sym3_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (
        np.einsum("ij,kl->ijkl", a, b)
        + np.einsum("ik,jl->ijkl", a, b)
        + np.einsum("il,jk->ijkl", a, b)
    )


def _sym6_outer(s2: np.ndarray, a: np.ndarray) -> np.ndarray:
    return (
        np.einsum("ij,kl->ijkl", s2, a)
        + np.einsum("ik,jl->ijkl", s2, a)
        + np.einsum("il,jk->ijkl", s2, a)
        + np.einsum("jk,il->ijkl", s2, a)
        + np.einsum("jl,ik->ijkl", s2, a)
        + np.einsum("kl,ij->ijkl", s2, a)
    )


def _deriv4_at_zero(inv_cov: np.ndarray, density_at_zero: float) -> np.ndarray:
    return density_at_zero * _sym3_outer(inv_cov, inv_cov)


def psi4_estimate(data: Dataset, g: SpdMatrix) -> np.ndarray:
    """Pairwise plug-in estimate of the integrated fourth-order
    density-derivative functionals, as a (d, d, d, d) tensor.

    Equals the average over rows of the fourth derivative tensor of the
    pilot KDE with bandwidth g, including the self terms.
    """
    if g.dim != data.d:
        raise DimensionMismatch("pilot dimension must match the data")
    values = data.values
    n, d = values.shape
    linv, log_norm = _chol_linv(g)
    inv_cov = linv.T @ linv
    c = math.exp(log_norm)

    total = float(n) * _deriv4_at_zero(inv_cov, c)
    if n > 1:
        rows, cols = np.triu_indices(n, k=1)
        pair_sum = np.zeros((d, d, d, d))
        chunk = 200_000
        for start in range(0, rows.shape[0], chunk):
            delta = values[rows[start : start + chunk]] - values[cols[start : start + chunk]]
            u = delta @ inv_cov.T
            q = np.einsum("pd,pd->p", delta, u)
            w = c * np.exp(-0.5 * q)
            s4 = np.einsum("p,pi,pj,pk,pl->ijkl", w, u, u, u, u)
            s2 = np.einsum("p,pi,pj->ij", w, u, u)
            s0 = float(w.sum())
            pair_sum += s4 - _sym6_outer(s2, inv_cov) + s0 * _sym3_outer(inv_cov, inv_cov)
        total += 2.0 * pair_sum
    return total / float(n * n)


def pi_objective(data: Dataset, h: SpdMatrix, g: SpdMatrix) -> float:
    """Plug-in criterion: integrated-variance term plus the pilot-estimated
    squared-bias quadratic form in vec H."""
    h_factor = cholesky(h)
    iv = _gaussian_roughness(data.d) * math.exp(-0.5 * h_factor.log_det) / data.n
    psi = psi4_estimate(data, g)
    isb = 0.25 * float(np.einsum("ij,kl,ijkl->", h.values, h.values, psi))
    return iv + isb


def _perfect_matchings(items: tuple[int, ...]):
    if not items:
        yield ()
        return
    first = items[0]
    for k in range(1, len(items)):
        partner = items[k]
        rest = items[1:k] + items[k + 1 :]
        for sub in _perfect_matchings(rest):
            yield ((first, partner),) + sub


def psi6_normal_scale(cov: np.ndarray) -> np.ndarray:
    """Sixth-order functional tensor under a normal-scale assumption.

    For Gaussian data with covariance S the functionals equal the sixth
    derivative of the centered Gaussian with covariance 2S at zero; at zero
    the derivative is -phi(0) times the sum over the 15 perfect matchings of
    the six indices of products of inverse-covariance entries.
    """
    d = cov.shape[0]
    two_sigma = SpdMatrix(2.0 * cov)
    factor = cholesky(two_sigma)
    linv = np.linalg.solve(factor.lower, np.eye(d))
    inv_cov = linv.T @ linv
    c = math.exp(kernels.gaussian_log_norm(d, factor.log_det))
    letters = "abcdef"
    tensor = np.zeros((d,) * 6)
    for matching in _perfect_matchings(tuple(range(6))):
        spec = ",".join(letters[p] + letters[q] for p, q in matching)
        tensor += np.einsum(f"{spec}->abcdef", inv_cov, inv_cov, inv_cov)
    return -c * tensor


def _pilot_bias_norm(g: SpdMatrix, n: int, psi6: np.ndarray) -> float:
    """Squared norm of the leading bias of the pairwise fourth-order
    functional estimate under pilot g: the self-term part plus half the
    smoothing contraction of the sixth-order functionals with g."""
    linv, log_norm = _chol_linv(g)
    inv_cov = linv.T @ linv
    t4 = _deriv4_at_zero(inv_cov, math.exp(log_norm))
    contraction = np.tensordot(g.values, psi6, axes=([0, 1], [0, 1]))
    bias = t4 / float(n) + 0.5 * contraction
    return float(np.sum(bias * bias))


def pilot_bandwidth(data: Dataset, kind: SelectorKind) -> SpdMatrix:
    """Two-stage pilot bandwidth G for the smoothed criteria.

    Stage 0 fixes the required sixth-order functionals at their normal-scale
    values and minimizes the pilot bias criterion over scalar multiples of
    the sample covariance. Stage 1 refines that start over the full SPD cone
    with Nelder-Mead.
    """
    kind = SelectorKind(kind)
    if kind not in (SelectorKind.SCV, SelectorKind.PI):
        raise ValueError(f"no pilot stage for selector {kind.value!r}")
    if data.n < 2:
        raise InsufficientSamples("pilot selection needs at least two rows")
    cov = sample_covariance(data)
    psi6 = psi6_normal_scale(cov)
    n = data.n

    def scalar_criterion(log_c: float) -> float:
        try:
            return _pilot_bias_norm(SpdMatrix(math.exp(log_c) * cov), n, psi6)
        except (NotPositiveDefinite, NonFinite, OverflowError):
            return math.inf

    bracket = minimize_scalar(
        scalar_criterion,
        bounds=(math.log(1e-8), math.log(1e8)),
        method="bounded",
        options={"xatol": 1e-10},
    )
    stage0 = SpdMatrix(math.exp(float(bracket.x)) * cov)

    def criterion(theta: np.ndarray) -> float:
        try:
            return _pilot_bias_norm(decode_spd(theta), n, psi6)
        except (NotPositiveDefinite, NonFinite, OverflowError):
            return math.inf

    result = nelder_mead(criterion, encode_spd(stage0), NmConfig())
    if not math.isfinite(result.f_min):
        raise OptimizerFailed("pilot criterion never reached a finite value")
    return decode_spd(result.x_min)


def _guarded(objective):
    def wrapped(theta: np.ndarray) -> float:
        try:
            with np.errstate(over="ignore", under="ignore", invalid="ignore"):
                value = objective(decode_spd(theta))
        except (NotPositiveDefinite, NonFinite, OverflowError):
            return math.inf
        return value if not math.isnan(value) else math.inf

    return wrapped


def select_bandwidth(
    data: Dataset,
    kind: SelectorKind,
    config: NmConfig | None = None,
    parent_count: int | None = None,
    restarts: int = 1,
    seed: int = 0,
) -> SelectorResult:
    """Run one bandwidth selector on the dataset.

    parent_count feeds the normal rule (and the start point of the
    data-driven criteria); it defaults to data.d - 1, the conditional-joint
    convention. restarts > 1 reruns the search from deterministically
    perturbed starts and keeps the best criterion value, which helps with
    the multiple local optima of cross-validation surfaces.
    """
    kind = SelectorKind(kind)
    if parent_count is None:
        parent_count = data.d - 1
    if kind is SelectorKind.NR:
        return SelectorResult(bandwidth=nr_bandwidth(data, parent_count), objective=math.nan)

    if data.n < 4:
        raise InsufficientSamples("data-driven selectors need at least four rows")
    if restarts < 1:
        raise ValueError("restarts must be at least one")
    config = config or NmConfig()

    start = nr_bandwidth(data, parent_count)
    theta0 = encode_spd(start)

    pilot = None
    if kind is SelectorKind.UCV:
        objective = _guarded(lambda h: ucv_objective(data, h))
    else:
        pilot = pilot_bandwidth(data, kind)
        if kind is SelectorKind.SCV:
            objective = _guarded(lambda h: scv_objective(data, h, pilot))
        else:
            objective = _guarded(lambda h: pi_objective(data, h, pilot))

    best: NmResult | None = None
    for attempt in range(restarts):
        if attempt == 0:
            theta = theta0
        else:
            rng = np.random.default_rng([_RESTART_SALT, seed, attempt])
            theta = theta0 + rng.normal(0.0, 0.5, size=theta0.shape)
        result = nelder_mead(objective, theta, config)
        if best is None or result.f_min < best.f_min:
            best = result
    assert best is not None
    if not math.isfinite(best.f_min):
        raise OptimizerFailed(f"{kind.value} criterion never reached a finite value")
    return SelectorResult(
        bandwidth=decode_spd(best.x_min),
        objective=best.f_min,
        pilot=pilot,
        diagnostics=best,
    )
