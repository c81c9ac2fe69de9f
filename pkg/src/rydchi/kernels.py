"""Hot numerical kernels: fixed-step RK4 propagation of sparse generators.

The trajectory inner loop (millions of short RK4 steps on a CSR matrix)
dominates runtime, so it is compiled with numba when available.  Setting the
environment variable ``RYDCHI_NO_NUMBA=1`` (or failing to import numba)
selects a pure-numpy/scipy fallback with identical semantics.  Both
implementations are kept importable so the benchmark in
``benchmarks/bench_kernels.py`` can compare them directly.

The generator convention is ``dpsi/dt = A psi`` with ``A = -i * H_eff``
already folded into the CSR data.
"""

import os

import numpy as np
import scipy.sparse as sp

__all__ = [
    "NUMBA_ENABLED",
    "BACKEND",
    "csr_from_dense",
    "rk4_jump_scan",
    "rk4_jump_scan_numpy",
    "rk4_jump_scan_numba",
]

_NO_NUMBA_ENV = os.environ.get("RYDCHI_NO_NUMBA", "").strip().lower()
_NUMBA_REQUESTED = _NO_NUMBA_ENV not in {"1", "true", "yes", "on"}

# Scan status codes.
COMPLETED = 0
JUMPED = 1
NONFINITE = -1


def csr_from_dense(a):
    """Convert a dense matrix to pruned, index-sorted CSR arrays.

    Returns ``(data, indices, indptr)`` suitable for the scan kernels.
    """
    m = sp.csr_matrix(a)
    m.eliminate_zeros()
    m.sort_indices()
    return (
        np.ascontiguousarray(m.data, dtype=np.complex128),
        np.ascontiguousarray(m.indices, dtype=np.int64),
        np.ascontiguousarray(m.indptr, dtype=np.int64),
    )


def _scan_python(data, indices, indptr, psi, dt, n_steps, r_threshold, bisect_tol):
    n = psi.size
    k1 = np.empty(n, np.complex128)
    k2 = np.empty(n, np.complex128)
    k3 = np.empty(n, np.complex128)
    k4 = np.empty(n, np.complex128)
    tmp = np.empty(n, np.complex128)
    start = np.empty(n, np.complex128)

    norm2 = 0.0
    for i in range(n):
        a = psi[i]
        norm2 += a.real * a.real + a.imag * a.imag

    for s in range(n_steps):
        for i in range(n):
            start[i] = psi[i]
        _rk4_step(data, indices, indptr, psi, dt, k1, k2, k3, k4, tmp)
        norm2 = 0.0
        for i in range(n):
            a = psi[i]
            norm2 += a.real * a.real + a.imag * a.imag
        if not np.isfinite(norm2):
            return NONFINITE, s, 0.0, norm2
        if norm2 < r_threshold:
            # Bisect the first-passage time of ||psi||^2 through r within
            # this step; invariant: norm2(lo) >= r > norm2(hi).
            lo = 0.0
            hi = dt
            while hi - lo > bisect_tol * dt:
                mid = 0.5 * (lo + hi)
                for i in range(n):
                    psi[i] = start[i]
                _rk4_step(data, indices, indptr, psi, mid, k1, k2, k3, k4, tmp)
                m2 = 0.0
                for i in range(n):
                    a = psi[i]
                    m2 += a.real * a.real + a.imag * a.imag
                if m2 < r_threshold:
                    hi = mid
                else:
                    lo = mid
            for i in range(n):
                psi[i] = start[i]
            _rk4_step(data, indices, indptr, psi, hi, k1, k2, k3, k4, tmp)
            norm2 = 0.0
            for i in range(n):
                a = psi[i]
                norm2 += a.real * a.real + a.imag * a.imag
            return JUMPED, s, hi, norm2
    return COMPLETED, n_steps, 0.0, norm2


def _rk4_step(data, indices, indptr, psi, dt, k1, k2, k3, k4, tmp):
    n = psi.size
    _csr_matvec(data, indices, indptr, psi, k1)
    for i in range(n):
        tmp[i] = psi[i] + (0.5 * dt) * k1[i]
    _csr_matvec(data, indices, indptr, tmp, k2)
    for i in range(n):
        tmp[i] = psi[i] + (0.5 * dt) * k2[i]
    _csr_matvec(data, indices, indptr, tmp, k3)
    for i in range(n):
        tmp[i] = psi[i] + dt * k3[i]
    _csr_matvec(data, indices, indptr, tmp, k4)
    for i in range(n):
        psi[i] = psi[i] + (dt / 6.0) * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])


def _csr_matvec(data, indices, indptr, x, out):
    n = indptr.size - 1
    for i in range(n):
        acc = 0.0 + 0.0j
        for jj in range(indptr[i], indptr[i + 1]):
            acc += data[jj] * x[indices[jj]]
        out[i] = acc


def rk4_jump_scan_numpy(data, indices, indptr, psi, dt, n_steps, r_threshold,
                        bisect_tol):
    """Vectorized fallback scan; same contract as the compiled kernel.

    Integrates ``psi`` in place for up to ``n_steps`` steps of size ``dt``,
    watching for the squared norm to cross ``r_threshold``.  Returns
    ``(status, steps_done, tau, norm_sq)`` where on a jump ``tau`` is the
    bisected first-passage offset inside step ``steps_done`` and ``psi``
    holds the pre-jump state at that instant.
    """
    n = psi.size
    a = sp.csr_matrix((data, indices, indptr), shape=(n, n))

    def step(v, h):
        k1 = a @ v
        k2 = a @ (v + (0.5 * h) * k1)
        k3 = a @ (v + (0.5 * h) * k2)
        k4 = a @ (v + h * k3)
        return v + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)

    norm2 = float(np.vdot(psi, psi).real)
    for s in range(n_steps):
        start = psi.copy()
        out = step(start, dt)
        norm2 = float(np.vdot(out, out).real)
        if not np.isfinite(norm2):
            psi[:] = out
            return NONFINITE, s, 0.0, norm2
        if norm2 < r_threshold:
            lo, hi = 0.0, dt
            while hi - lo > bisect_tol * dt:
                mid = 0.5 * (lo + hi)
                trial = step(start, mid)
                if float(np.vdot(trial, trial).real) < r_threshold:
                    hi = mid
                else:
                    lo = mid
            out = step(start, hi)
            psi[:] = out
            norm2 = float(np.vdot(out, out).real)
            return JUMPED, s, hi, norm2
        psi[:] = out
    return COMPLETED, n_steps, 0.0, norm2


NUMBA_ENABLED = False
rk4_jump_scan_numba = None

if _NUMBA_REQUESTED:
    try:
        from numba import njit
    except ImportError:
        pass
    else:
        _csr_matvec = njit(cache=True)(_csr_matvec)
        _rk4_step = njit(cache=True)(_rk4_step)
        rk4_jump_scan_numba = njit(cache=True)(_scan_python)
        NUMBA_ENABLED = True

if NUMBA_ENABLED:
    rk4_jump_scan = rk4_jump_scan_numba
    BACKEND = "numba"
else:
    rk4_jump_scan = rk4_jump_scan_numpy
    BACKEND = "numpy"
