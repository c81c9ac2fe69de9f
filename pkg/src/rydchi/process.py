"""Process matrices: construction, concatenation, comparison, serialization.

A channel ``E(rho) = sum_mn chi_mn E_m rho E_n^dag`` is stored as the weight
matrix over the orthonormalized operator basis, rescaled so that
trace-preserving channels have ``Tr(chi) = 1``.  In the matrix-unit basis
this makes ``chi`` literally the Choi state of the channel: the output of
``E`` acting on half of a normalized maximally entangled pair, with row
index digits interleaved per subsystem as ``(out_0, in_0, out_1, in_1, ...)``.

Trace-nonincreasing maps are first class; the trace deficit of a projected
channel is its leakage.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .basis import (MATRIX_UNIT, OperatorBasis, basis_change_matrix,
                    structure_constants)
from .errors import SchemaError
from .linalg import permute_subsystems, trace_norm

__all__ = [
    "ProcessMatrix",
    "chi_from_kraus",
    "identity_chi",
    "serial_concat",
    "parallel_concat",
    "reorder_subsystems",
    "embed",
    "trace_distance",
    "to_choi",
    "from_choi",
    "superoperator",
    "from_superoperator",
    "project_to_qubit_subspace",
    "apply_chi",
    "to_basis",
    "chi_to_dict",
    "chi_from_dict",
    "save_chi",
    "load_chi",
]

CHI_FORMAT_VERSION = 1

_SC_CACHE = {}


def _cached_structure_constants(basis):
    sc = _SC_CACHE.get(basis)
    if sc is None:
        sc = _SC_CACHE[basis] = structure_constants(basis)
    return sc


@dataclass(frozen=True)
class ProcessMatrix:
    """A chi matrix together with its operator-basis bookkeeping."""

    basis: OperatorBasis
    chi: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        chi = np.asarray(self.chi, dtype=complex)
        if chi.shape != (self.basis.size, self.basis.size):
            raise ValueError(
                f"chi shape {chi.shape} does not match basis size {self.basis.size}")
        object.__setattr__(self, "chi", chi)

    @property
    def dim(self):
        return self.basis.dim

    @property
    def trace(self):
        return float(self.chi.trace().real)

    @property
    def trace_preserving(self):
        return abs(self.trace - 1.0) <= 1e-9

    def normalized(self):
        """Rescale to unit trace (e.g. a no-jump estimate)."""
        return ProcessMatrix(self.basis, self.chi / self.trace, dict(self.metadata))

    def hermiticity_defect(self):
        return float(np.abs(self.chi - self.chi.conj().T).max())

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(0.5 * (self.chi + self.chi.conj().T)).min())

    def validate(self, statistical=False):
        """Check Hermiticity, positivity, and the trace bound.

        Exact constructions use a 1e-10 tier; Monte Carlo averages use
        ``5e-3 * Tr(chi)``.  Slightly negative eigenvalues within the tier
        are retained, never clipped.
        """
        tol = 5e-3 * max(self.trace, 1e-12) if statistical else 1e-10
        defect = self.hermiticity_defect()
        if defect > tol:
            raise ValueError(f"chi not Hermitian: defect {defect:.3e} > {tol:.3e}")
        lam_min = self.min_eigenvalue()
        if lam_min < -tol:
            raise ValueError(f"chi not PSD: min eigenvalue {lam_min:.3e}")
        if self.trace > 1.0 + tol:
            raise ValueError(f"chi trace {self.trace} exceeds 1 + {tol:.1e}")
        return self


def chi_from_kraus(kraus, basis, metadata=None):
    """Build the chi matrix of the channel ``rho -> sum_k K rho K^dag``.

    The Kraus set may be trace-decreasing; completeness beyond
    ``sum K^dag K <= I + 1e-10`` (operator order) is rejected.
    """
    d = basis.dim
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    for k in kraus:
        if k.shape != (d, d):
            raise ValueError(f"Kraus operator shape {k.shape}, expected {(d, d)}")
    total = sum(k.conj().T @ k for k in kraus)
    lam_max = float(np.linalg.eigvalsh(total).max())
    if lam_max > 1.0 + 1e-10:
        raise ValueError(
            f"Kraus completeness violated: max eig of sum K^dag K = {lam_max}")

    nu = math.sqrt(basis.hs_norm_sq)
    chi = np.zeros((basis.size, basis.size), dtype=complex)
    if basis.kind == MATRIX_UNIT:
        rows, cols = basis.matrix_unit_rows_cols
        for k in kraus:
            c = k[rows, cols]
            chi += np.outer(c, c.conj())
    else:
        ops = [basis.operator(n) for n in range(basis.size)]
        for k in kraus:
            c = np.array([np.vdot(e, k) for e in ops]) / nu
            chi += np.outer(c, c.conj())
    chi /= d
    return ProcessMatrix(basis, chi, metadata or {})


def identity_chi(basis, metadata=None):
    """Chi matrix of the identity channel."""
    return chi_from_kraus([np.eye(basis.dim, dtype=complex)], basis, metadata)


def _interleaved_axes(local_dims):
    n = len(local_dims)
    shape = []
    for d in local_dims:
        shape.extend((d, d))
    split = tuple(shape)
    out_axes = tuple(range(0, 2 * n, 2))
    in_axes = tuple(range(1, 2 * n, 2))
    return split, out_axes + in_axes


def to_choi(p):
    """Choi state of the channel, ordered (output space) x (input space)."""
    mu = to_basis(p, MATRIX_UNIT)
    dims = mu.basis.local_dims
    split, perm = _interleaved_axes(dims)
    n_axes = len(split)
    d2 = mu.basis.size
    t = mu.chi.reshape(split + split)
    t = t.transpose(perm + tuple(a + n_axes for a in perm))
    return np.ascontiguousarray(t.reshape(d2, d2))


def from_choi(j, basis, metadata=None):
    """Inverse of :func:`to_choi` for the given target basis."""
    if j.shape != (basis.size, basis.size):
        raise ValueError(f"Choi shape {j.shape} does not match basis {basis.size}")
    dims = basis.local_dims
    split, perm = _interleaved_axes(dims)
    n_axes = len(split)
    inv = np.argsort(perm)
    choi_split = tuple(split[a] for a in perm)
    t = j.reshape(choi_split + choi_split)
    t = t.transpose(tuple(inv) + tuple(a + n_axes for a in inv))
    chi_mu = np.ascontiguousarray(t.reshape(basis.size, basis.size))
    mu = ProcessMatrix(OperatorBasis(dims, MATRIX_UNIT), chi_mu, metadata or {})
    return to_basis(mu, basis.kind)


def superoperator(p):
    """Row-major transfer matrix: ``vec(E(rho)) = S @ vec(rho)``."""
    d = p.dim
    j = to_choi(p).reshape(d, d, d, d)
    return d * np.ascontiguousarray(j.transpose(0, 2, 1, 3).reshape(d * d, d * d))


def from_superoperator(s, basis, metadata=None):
    d = basis.dim
    j = (s.reshape(d, d, d, d).transpose(0, 2, 1, 3) / d).reshape(d * d, d * d)
    return from_choi(np.ascontiguousarray(j), basis, metadata)


def apply_chi(p, rho):
    """Apply the channel to a density matrix."""
    d = p.dim
    return (superoperator(p) @ np.asarray(rho, dtype=complex).reshape(-1)).reshape(d, d)


def _check_same_basis(a, b):
    if a.basis != b.basis:
        raise ValueError(
            f"basis mismatch: {a.basis.kind}{a.basis.local_dims} vs "
            f"{b.basis.kind}{b.basis.local_dims}")


def serial_concat(first, second, route="superoperator"):
    """Chi matrix of ``first`` followed by ``second``.

    The superoperator route is the production path; the structure-constant
    expansion of the basis-product algebra is retained as an independent
    cross-check (``route="structure"``).
    """
    _check_same_basis(first, second)
    if route == "superoperator":
        s = superoperator(second) @ superoperator(first)
        return from_superoperator(s, first.basis)
    if route == "structure":
        return _serial_concat_structure(first, second)
    raise ValueError(f"unknown route {route!r}")


def _serial_concat_structure(first, second):
    basis = first.basis
    sc = _cached_structure_constants(basis)
    p_idx, m_idx, r_idx, coeff = sc.pair_table
    # Composition acts on the raw-basis weights; rescale from the stored
    # normalization and back.
    scale = basis.dim / basis.hs_norm_sq
    chi1 = first.chi * scale
    chi2 = second.chi * scale
    w = (coeff[:, None] * coeff.conj()[None, :]
         * chi1[np.ix_(m_idx, m_idx)]
         * chi2[np.ix_(p_idx, p_idx)])
    out = np.zeros((basis.size, basis.size), dtype=complex)
    np.add.at(out, (r_idx[:, None], r_idx[None, :]), w)
    return ProcessMatrix(basis, out / scale)


def parallel_concat(a, b):
    """Chi matrix of independent channels on disjoint registers.

    The result lives on the concatenated register (subsystems of ``a`` then
    of ``b``); use :func:`reorder_subsystems` or :func:`embed` to map onto
    arbitrary register positions.
    """
    if a.basis.kind != b.basis.kind:
        raise ValueError("parallel_concat requires matching basis kinds")
    combined = OperatorBasis(a.basis.local_dims + b.basis.local_dims, a.basis.kind)
    return ProcessMatrix(combined, np.kron(a.chi, b.chi))


def reorder_subsystems(p, perm):
    """Permute the register underlying a chi matrix.

    Subsystem ``k`` of the result is subsystem ``perm[k]`` of the input.
    """
    dims2 = tuple(d * d for d in p.basis.local_dims)
    chi, _ = permute_subsystems(p.chi, dims2, perm)
    new_dims = tuple(p.basis.local_dims[q] for q in perm)
    return ProcessMatrix(OperatorBasis(new_dims, p.basis.kind), chi, dict(p.metadata))


def embed(small, register_dims, positions):
    """Extend a channel with identity action on the rest of a register.

    ``positions[k]`` is the register slot of the channel's subsystem ``k``;
    arbitrary (including reversed) orderings are supported.
    """
    register_dims = tuple(int(d) for d in register_dims)
    positions = tuple(int(q) for q in positions)
    n = len(register_dims)
    if len(set(positions)) != len(positions):
        raise ValueError(f"positions {positions} collide")
    if len(positions) != small.basis.n_subsystems:
        raise ValueError("one position per channel subsystem required")
    for k, q in enumerate(positions):
        if not 0 <= q < n:
            raise ValueError(f"position {q} outside register of {n}")
        if register_dims[q] != small.basis.local_dims[k]:
            raise ValueError(
                f"local dim mismatch at register slot {q}: "
                f"{register_dims[q]} vs {small.basis.local_dims[k]}")
    idle = [k for k in range(n) if k not in positions]
    combined = small
    if idle:
        idle_basis = OperatorBasis(tuple(register_dims[k] for k in idle),
                                   small.basis.kind)
        combined = parallel_concat(small, identity_chi(idle_basis))
    order = list(positions) + idle
    perm = [order.index(k) for k in range(n)]
    return reorder_subsystems(combined, perm)


def trace_distance(a, b):
    """``T = 0.5 * || chi_a - chi_b ||_tr`` between same-basis channels."""
    _check_same_basis(a, b)
    return 0.5 * trace_norm(a.chi - b.chi, hermitian=True)


def to_basis(p, kind):
    """Re-express a chi matrix in another operator-basis kind."""
    if p.basis.kind == kind:
        return p
    dst = OperatorBasis(p.basis.local_dims, kind)
    v = basis_change_matrix(p.basis, dst)
    return ProcessMatrix(dst, v @ p.chi @ v.conj().T, dict(p.metadata))


def project_to_qubit_subspace(p):
    """Restrict a channel on d-level atoms to the qubit levels {0, 1}.

    The map is pre- and post-composed with the qubit-subspace injection and
    projection; population that leaves the qubit subspace shows up as trace
    loss (leakage) of the result.
    """
    dims = p.basis.local_dims
    if all(d == 2 for d in dims):
        return p
    mu = to_basis(p, MATRIX_UNIT)
    d_full = mu.dim
    n = len(dims)
    d_qubit = 2 ** n

    strides = np.ones(n, dtype=np.int64)
    for k in range(n - 2, -1, -1):
        strides[k] = strides[k + 1] * dims[k + 1]
    q_embed = np.zeros(d_qubit, dtype=np.int64)
    for b in range(d_qubit):
        idx = 0
        for k in range(n):
            idx += ((b >> (n - 1 - k)) & 1) * strides[k]
        q_embed[b] = idx

    pair_idx = (q_embed[:, None] * d_full + q_embed[None, :]).reshape(-1)
    j = to_choi(mu)
    j_q = (d_full / d_qubit) * j[np.ix_(pair_idx, pair_idx)]
    target = OperatorBasis((2,) * n, p.basis.kind)
    out = from_choi(j_q, OperatorBasis((2,) * n, MATRIX_UNIT), dict(p.metadata))
    return to_basis(out, target.kind)


def chi_to_dict(p):
    """JSON-ready document; floats keep full round-trip precision."""
    entries = [[float(z.real), float(z.imag)] for z in p.chi.reshape(-1)]
    return {
        "format_version": CHI_FORMAT_VERSION,
        "D": p.dim,
        "shape": list(p.basis.local_dims),
        "basis_kind": p.basis.kind,
        "trace_preserving": bool(p.trace_preserving),
        "metadata": dict(p.metadata),
        "chi": entries,
    }


def chi_from_dict(doc):
    version = doc.get("format_version")
    if version != CHI_FORMAT_VERSION:
        raise SchemaError(
            f"chi document format_version {version!r}, expected {CHI_FORMAT_VERSION}")
    dims = tuple(int(d) for d in doc["shape"])
    basis = OperatorBasis(dims, doc["basis_kind"])
    if int(doc["D"]) != basis.dim:
        raise SchemaError(f"D field {doc['D']} inconsistent with shape {dims}")
    flat = np.array([complex(re, im) for re, im in doc["chi"]], dtype=complex)
    if flat.size != basis.size ** 2:
        raise SchemaError("chi entry count does not match D^2 x D^2")
    chi = flat.reshape(basis.size, basis.size)
    return ProcessMatrix(basis, chi, dict(doc.get("metadata", {})))


def save_chi(p, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(chi_to_dict(p), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_chi(path):
    with open(path, encoding="utf-8") as fh:
        return chi_from_dict(json.load(fh))
