"""Hot numeric kernels: pairwise Gaussian sums and log-density reductions.

These inner loops dominate runtime for cross-validated bandwidth selection
and for scoring, so they are compiled with numba. A pure-numpy path exists
for every kernel; set SPBN_BACKEND=numpy to force it (SPBN_BACKEND=numba
forces compilation). Both paths use the same summation structure, so their
results agree to floating-point roundoff.

All kernels take the inverse Cholesky factor ``linv`` of the relevant
covariance, i.e. quadratic forms are computed as ||linv @ delta||^2.
"""

from __future__ import annotations

import math
import os

import numpy as np

BACKEND_ENV = "SPBN_BACKEND"

# Skip the TBB probe (this platform's TBB is too old and the probe warns);
# OpenMP is what ends up selected anyway. Respects an explicit override.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
# Idle workers must sleep, not spin: busy-waiting between parallel regions
# starves the interleaved serial work on small machines.
os.environ.setdefault("OMP_WAIT_POLICY", "PASSIVE")

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]

    prange = range

_CHUNK = 2048  # query-block size for the numpy fallbacks


def active_backend() -> str:
    """Resolve the kernel backend from the environment, once per call."""
    choice = os.environ.get(BACKEND_ENV, "").strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("SPBN_BACKEND=numba but numba is not importable")
        return "numba"
    return "numba" if HAVE_NUMBA else "numpy"


def _use_numba() -> bool:
    return active_backend() == "numba"


def _c(a: np.ndarray) -> np.ndarray:
    """Writable C-contiguous array (copying when needed) so every kernel
    compiles exactly one specialization: linear-algebra results arrive in
    Fortran order and Dataset values are read-only, and each distinct
    layout/mutability combination would otherwise JIT separately."""
    out = np.ascontiguousarray(a)
    if not out.flags.writeable:
        out = out.copy()
    return out


# ---------------------------------------------------------------------------
# log-density evaluation: log mean_i exp(-0.5 ||linv (x - X_i)||^2) + shift
# ---------------------------------------------------------------------------


def _logdens_cross_impl(queries, train, linv, shift):
    m_rows, d = queries.shape
    n = train.shape[0]
    out = np.empty(m_rows)
    for m in prange(m_rows):
        running_max = -np.inf
        running_sum = 0.0
        for i in range(n):
            q = 0.0
            for a in range(d):
                acc = 0.0
                for b in range(a + 1):
                    acc += linv[a, b] * (queries[m, b] - train[i, b])
                q += acc * acc
            val = -0.5 * q
            if val > running_max:
                running_sum = running_sum * np.exp(running_max - val) + 1.0
                running_max = val
            else:
                running_sum += np.exp(val - running_max)
        out[m] = running_max + np.log(running_sum) + shift
    return out


_logdens_cross_numba = njit(cache=True, parallel=True)(_logdens_cross_impl)
_logdens_cross_serial = njit(cache=True)(_logdens_cross_impl)


def _logdens_cross_numpy(queries, train, linv, shift):
    m_rows = queries.shape[0]
    out = np.empty(m_rows)
    for start in range(0, m_rows, _CHUNK):
        block = queries[start : start + _CHUNK]
        diff = block[:, None, :] - train[None, :, :]
        z = diff @ linv.T
        val = -0.5 * np.einsum("mnd,mnd->mn", z, z)
        peak = val.max(axis=1, keepdims=True)
        out[start : start + _CHUNK] = (
            peak[:, 0] + np.log(np.exp(val - peak).sum(axis=1)) + shift
        )
    return out


_PARALLEL_THRESHOLD = 32768  # scalar kernel evaluations


def logdens_cross(queries, train, linv, shift):
    """Per-query log of the mean Gaussian kernel over the training rows."""
    queries, train, linv = _c(queries), _c(train), _c(linv)
    if _use_numba():
        if queries.shape[0] * train.shape[0] < _PARALLEL_THRESHOLD:
            return _logdens_cross_serial(queries, train, linv, shift)
        return _logdens_cross_numba(queries, train, linv, shift)
    return _logdens_cross_numpy(queries, train, linv, shift)


def _logdens_loo_impl(train, linv, shift):
    n, d = train.shape
    out = np.empty(n)
    for m in prange(n):
        running_max = -np.inf
        running_sum = 0.0
        for i in range(n):
            if i == m:
                continue
            q = 0.0
            for a in range(d):
                acc = 0.0
                for b in range(a + 1):
                    acc += linv[a, b] * (train[m, b] - train[i, b])
                q += acc * acc
            val = -0.5 * q
            if val > running_max:
                running_sum = running_sum * np.exp(running_max - val) + 1.0
                running_max = val
            else:
                running_sum += np.exp(val - running_max)
        out[m] = running_max + np.log(running_sum) + shift
    return out


_logdens_loo_numba = njit(cache=True, parallel=True)(_logdens_loo_impl)
_logdens_loo_serial = njit(cache=True)(_logdens_loo_impl)


def _logdens_loo_numpy(train, linv, shift):
    n = train.shape[0]
    diff = train[:, None, :] - train[None, :, :]
    z = diff @ linv.T
    val = -0.5 * np.einsum("mnd,mnd->mn", z, z)
    np.fill_diagonal(val, -np.inf)
    peak = val.max(axis=1, keepdims=True)
    return peak[:, 0] + np.log(np.exp(val - peak).sum(axis=1)) + shift


def logdens_loo(train, linv, shift):
    """Leave-one-out variant of logdens_cross, evaluated at the training rows."""
    train, linv = _c(train), _c(linv)
    if _use_numba():
        if train.shape[0] ** 2 < _PARALLEL_THRESHOLD:
            return _logdens_loo_serial(train, linv, shift)
        return _logdens_loo_numba(train, linv, shift)
    return _logdens_loo_numpy(train, linv, shift)


# ---------------------------------------------------------------------------
# Pairwise exponential sums over unordered pairs i < j.
#
# The parallel kernels write one partial per row into an array that the
# caller reduces with np.sum, so the reduction order is fixed and results
# are reproducible run to run. Rows are interleaved (first, last, second,
# second-to-last, ...) to balance the triangular work across threads.
# ---------------------------------------------------------------------------


def _ucv_pair_partials_impl(x, linv):
    n, d = x.shape
    rows = n - 1
    s_half = np.zeros(rows)
    s_quarter = np.zeros(rows)
    for m in prange(rows):
        i = m // 2 if m % 2 == 0 else rows - 1 - m // 2
        acc_half = 0.0
        acc_quarter = 0.0
        for j in range(i + 1, n):
            q = 0.0
            for a in range(d):
                acc = 0.0
                for b in range(a + 1):
                    acc += linv[a, b] * (x[i, b] - x[j, b])
                q += acc * acc
            e = np.exp(-0.5 * q)
            acc_half += e
            acc_quarter += np.sqrt(e)
        s_half[m] = acc_half
        s_quarter[m] = acc_quarter
    return s_half, s_quarter


_ucv_pair_partials_numba = njit(cache=True, parallel=True)(_ucv_pair_partials_impl)
_ucv_pair_partials_serial = njit(cache=True)(_ucv_pair_partials_impl)


def _ucv_pair_partials_numpy(x, linv):
    n = x.shape[0]
    s_half = np.zeros(max(n - 1, 0))
    s_quarter = np.zeros(max(n - 1, 0))
    for i in range(n - 1):
        z = (x[i] - x[i + 1 :]) @ linv.T
        e = np.exp(-0.5 * np.einsum("nd,nd->n", z, z))
        s_half[i] = e.sum()
        s_quarter[i] = np.sqrt(e).sum()
    return s_half, s_quarter


def ucv_pair_sums(x, linv):
    """Sums over pairs i<j of exp(-q/2) and exp(-q/4), q the H quadratic form.

    exp(-q/4) is the kernel term of the doubled bandwidth 2H, computed as
    sqrt(exp(-q/2)) so one exponential serves both sums.
    """
    x, linv = _c(x), _c(linv)
    if _use_numba():
        if x.shape[0] ** 2 < _PARALLEL_THRESHOLD:
            s_half, s_quarter = _ucv_pair_partials_serial(x, linv)
        else:
            s_half, s_quarter = _ucv_pair_partials_numba(x, linv)
    else:
        s_half, s_quarter = _ucv_pair_partials_numpy(x, linv)
    return float(np.sum(s_half)), float(np.sum(s_quarter))


def _triple_pair_partials_impl(x, linv1, linv2, linv3):
    n, d = x.shape
    rows = n - 1
    out = np.zeros((3, max(rows, 0)))
    for m in prange(rows):
        i = m // 2 if m % 2 == 0 else rows - 1 - m // 2
        acc1 = 0.0
        acc2 = 0.0
        acc3 = 0.0
        for j in range(i + 1, n):
            q1 = 0.0
            q2 = 0.0
            q3 = 0.0
            for a in range(d):
                z1 = 0.0
                z2 = 0.0
                z3 = 0.0
                for b in range(a + 1):
                    delta = x[i, b] - x[j, b]
                    z1 += linv1[a, b] * delta
                    z2 += linv2[a, b] * delta
                    z3 += linv3[a, b] * delta
                q1 += z1 * z1
                q2 += z2 * z2
                q3 += z3 * z3
            acc1 += np.exp(-0.5 * q1)
            acc2 += np.exp(-0.5 * q2)
            acc3 += np.exp(-0.5 * q3)
        out[0, m] = acc1
        out[1, m] = acc2
        out[2, m] = acc3
    return out


_triple_pair_partials_numba = njit(cache=True, parallel=True)(_triple_pair_partials_impl)
_triple_pair_partials_serial = njit(cache=True)(_triple_pair_partials_impl)


def _triple_pair_partials_numpy(x, linv1, linv2, linv3):
    n = x.shape[0]
    out = np.zeros((3, max(n - 1, 0)))
    for i in range(n - 1):
        delta = x[i] - x[i + 1 :]
        for k, linv in enumerate((linv1, linv2, linv3)):
            z = delta @ linv.T
            out[k, i] = np.exp(-0.5 * np.einsum("nd,nd->n", z, z)).sum()
    return out


def triple_pair_sums(x, linv1, linv2, linv3):
    """Sums over pairs i<j of exp(-q_k/2) for three covariance factors."""
    x, linv1, linv2, linv3 = _c(x), _c(linv1), _c(linv2), _c(linv3)
    if _use_numba():
        if x.shape[0] ** 2 < _PARALLEL_THRESHOLD:
            partials = _triple_pair_partials_serial(x, linv1, linv2, linv3)
        else:
            partials = _triple_pair_partials_numba(x, linv1, linv2, linv3)
    else:
        partials = _triple_pair_partials_numpy(x, linv1, linv2, linv3)
    totals = np.sum(partials, axis=1)
    return float(totals[0]), float(totals[1]), float(totals[2])


# ---------------------------------------------------------------------------
# Dense cross quadratic forms (small problems: sampling weights, oracles).
# ---------------------------------------------------------------------------


def cross_sqdist(queries, train, linv):
    """Full (M, N) matrix of quadratic forms ||linv (x_m - X_i)||^2."""
    diff = queries[:, None, :] - train[None, :, :]
    z = diff @ linv.T
    return np.einsum("mnd,mnd->mn", z, z)


def gaussian_log_norm(dim: int, log_det: float) -> float:
    """log of the Gaussian normalizing constant (2 pi)^{-d/2} |H|^{-1/2}."""
    return -0.5 * dim * math.log(2.0 * math.pi) - 0.5 * log_det


def warm_up():
    """Trigger numba compilation of every kernel on tiny inputs."""
    if not HAVE_NUMBA:
        return
    x = np.array([[0.0, 0.0], [1.0, 0.5], [0.2, -0.3]])
    eye = np.eye(2)
    _logdens_cross_numba(x, x, eye, 0.0)
    _logdens_cross_serial(x, x, eye, 0.0)
    _logdens_loo_numba(x, eye, 0.0)
    _logdens_loo_serial(x, eye, 0.0)
    _ucv_pair_partials_numba(x, eye)
    _ucv_pair_partials_serial(x, eye)
    _triple_pair_partials_numba(x, eye, eye, eye)
    _triple_pair_partials_serial(x, eye, eye, eye)
