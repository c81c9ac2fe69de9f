"""Dense complex linear algebra over tensor-product Hilbert spaces.

Operators are plain ``numpy.ndarray`` of complex128.  Multi-part systems use
row-major ordering: subsystem 0 is the most significant index, matching
``numpy.kron`` factor order.
"""

import math

import numpy as np

from .errors import DimensionCapError, NumericalAbortError
from . import kernels

__all__ = [
    "MAX_DIM",
    "kron",
    "kron_many",
    "permute_subsystems",
    "partial_trace",
    "trace_norm",
    "propagate_segment",
    "is_hermitian",
    "dagger",
    "expm_hermitian",
]

# Largest operator dimension the dense paths are sized for: the doubled
# (system + ancilla) space of three four-level atoms, 64**2.
MAX_DIM = 4096

_HERMITIAN_RTOL = 1e-12


def dagger(m):
    """Conjugate transpose."""
    return m.conj().T


def is_hermitian(m, rtol=_HERMITIAN_RTOL):
    """Whether ``max|M - M^dag|`` is below ``rtol * max|M|``."""
    scale = np.abs(m).max()
    if scale == 0.0:
        return True
    return np.abs(m - m.conj().T).max() <= rtol * scale


def kron(a, b, max_dim=MAX_DIM):
    """Kronecker product with a guard against runaway register sizes."""
    dim = a.shape[0] * b.shape[0]
    if max_dim is not None and dim > max_dim:
        raise DimensionCapError(
            f"kron would produce dimension {dim} > cap {max_dim}")
    return np.kron(a, b)


def kron_many(ops, max_dim=MAX_DIM):
    """Left fold of :func:`kron` over a sequence of operators."""
    out = None
    for op in ops:
        out = np.asarray(op, dtype=complex) if out is None else kron(out, op, max_dim)
    if out is None:
        raise ValueError("kron_many needs at least one operator")
    return out


def _check_dims(m, dims):
    dims = tuple(int(d) for d in dims)
    d_total = math.prod(dims)
    if m.shape != (d_total, d_total):
        raise ValueError(
            f"matrix shape {m.shape} does not match subsystem dims {dims}")
    return dims


def permute_subsystems(m, dims, perm):
    """Conjugate ``m`` by the unitary that reorders tensor factors.

    ``perm`` follows ``numpy.transpose`` semantics: subsystem ``k`` of the
    result is subsystem ``perm[k]`` of the input.  Applying the inverse
    permutation afterwards restores the input exactly.
    """
    dims = _check_dims(m, dims)
    n = len(dims)
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of 0..{n - 1}")
    new_dims = tuple(dims[p] for p in perm)
    t = m.reshape(dims + dims)
    t = t.transpose(perm + tuple(n + p for p in perm))
    d_total = math.prod(dims)
    return np.ascontiguousarray(t.reshape(d_total, d_total)), new_dims


def partial_trace(m, dims, keep):
    """Trace out every subsystem not listed in ``keep``.

    ``keep`` is treated as a set; kept subsystems stay in register order.
    The full trace is not expressible here (use ``numpy.trace``), so an
    empty ``keep`` is rejected.
    """
    dims = _check_dims(m, dims)
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep must name at least one subsystem")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"keep {keep} out of range for {n} subsystems")

    t = m.reshape(dims + dims)
    # Contract bra/ket legs of traced subsystems pairwise, highest first so
    # remaining axis numbers stay valid.
    traced = [k for k in range(n) if k not in keep]
    n_left = n
    for k in sorted(traced, reverse=True):
        t = np.trace(t, axis1=k, axis2=k + n_left)
        n_left -= 1
    d_keep = math.prod(dims[k] for k in keep)
    return t.reshape(d_keep, d_keep)


def trace_norm(m, hermitian=None):
    """Sum of singular values; for Hermitian input, sum of |eigenvalues|."""
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"trace_norm needs a square matrix, got {m.shape}")
    if hermitian is None:
        hermitian = is_hermitian(m, rtol=1e-10)
    if hermitian:
        return float(np.abs(np.linalg.eigvalsh(m)).sum())
    return float(np.linalg.svd(m, compute_uv=False).sum())


def expm_hermitian(h, t):
    """``exp(-i h t)`` for Hermitian ``h`` via spectral decomposition."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def default_step_count(duration, t_min=None, steps_per_min_pulse=200):
    """Step count for a segment: ``ceil(duration / (t_min / steps))``.

    ``t_min`` defaults to the segment's own duration.  A small slack guards
    against spurious extra steps from floating-point division.
    """
    if t_min is None:
        t_min = duration
    dt_target = t_min / steps_per_min_pulse
    return max(1, math.ceil(duration / dt_target - 1e-9))


def propagate_segment(h, psi, dt, n_steps=None):
    """Integrate ``dpsi/dt = -i h psi`` over ``dt`` with fixed-step RK4.

    ``h`` is constant over the segment and may be non-Hermitian (complex
    diagonal drift).  When ``n_steps`` is omitted the segment is treated as
    its own shortest pulse, giving 200 steps.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps is None:
        n_steps = default_step_count(dt)
    data, indices, indptr = kernels.csr_from_dense(-1j * np.asarray(h, dtype=complex))
    out = np.array(psi, dtype=np.complex128, copy=True)
    status, _, _, _ = kernels.rk4_jump_scan(
        data, indices, indptr, out, dt / n_steps, n_steps, -1.0, 1e-3)
    if status == kernels.NONFINITE:
        raise NumericalAbortError(
            "propagation produced non-finite amplitudes (step size too large?)")
    return out
