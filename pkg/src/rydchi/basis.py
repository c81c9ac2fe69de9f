"""Operator bases for process matrices and their structure constants.

A basis over an ``N``-part register enumerates ``E_n = e_{n_0} x ... x
e_{n_{N-1}}`` lexicographically in the per-subsystem indices.  Two kinds are
supported:

* ``matrix_unit`` — local operators ``|i><j|`` with ``n_local = i*d + j``;
  orthonormal under the Hilbert-Schmidt inner product.
* ``pauli`` — local operators ``(I, X, Y, Z)`` for two-level subsystems;
  orthogonal with ``Tr(E_m^dag E_n) = D delta_mn``.

Process matrices are stored as weight matrices over the *orthonormalized*
basis ``E_n / sqrt(hs_norm_sq)`` scaled so that trace-preserving channels
have unit trace (see :mod:`rydchi.process`).
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .linalg import kron_many

__all__ = [
    "MATRIX_UNIT",
    "PAULI",
    "OperatorBasis",
    "StructureConstants",
    "structure_constants",
    "hs_inner",
    "basis_change_matrix",
]

MATRIX_UNIT = "matrix_unit"
PAULI = "pauli"

_PAULI_OPS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def hs_inner(a, b):
    """Hilbert-Schmidt inner product ``Tr(a^dag b)``."""
    return complex(np.vdot(a, b))


@dataclass(frozen=True)
class OperatorBasis:
    """Complete operator basis on a tensor-product register."""

    local_dims: tuple
    kind: str = MATRIX_UNIT

    def __post_init__(self):
        dims = tuple(int(d) for d in self.local_dims)
        object.__setattr__(self, "local_dims", dims)
        if not dims or any(d < 2 for d in dims):
            raise ValueError(f"local dims must all be >= 2, got {dims}")
        if self.kind not in (MATRIX_UNIT, PAULI):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind == PAULI and any(d != 2 for d in dims):
            raise ValueError("pauli basis requires two-level subsystems")

    @property
    def dim(self):
        return math.prod(self.local_dims)

    @property
    def size(self):
        return self.dim ** 2

    @property
    def n_subsystems(self):
        return len(self.local_dims)

    @property
    def hs_norm_sq(self):
        """``Tr(E_m^dag E_m)``, identical for every basis element."""
        return 1.0 if self.kind == MATRIX_UNIT else float(self.dim)

    def digits(self, n):
        """Per-subsystem indices of basis element ``n`` (lexicographic)."""
        out = []
        for d in reversed(self.local_dims):
            out.append(n % (d * d))
            n //= d * d
        if n:
            raise IndexError("basis index out of range")
        return tuple(reversed(out))

    def local_operator(self, subsystem, idx):
        d = self.local_dims[subsystem]
        if self.kind == MATRIX_UNIT:
            op = np.zeros((d, d), dtype=complex)
            op[idx // d, idx % d] = 1.0
            return op
        return _PAULI_OPS[idx].copy()

    def operator(self, n):
        """Dense matrix of basis element ``E_n``."""
        return kron_many(
            [self.local_operator(k, nk) for k, nk in enumerate(self.digits(n))],
            max_dim=None,
        )

    def operators(self):
        """Iterate over all ``D^2`` basis elements."""
        for n in range(self.size):
            yield self.operator(n)

    @cached_property
    def matrix_unit_rows_cols(self):
        """Global (row, col) of each element; matrix-unit kind only."""
        if self.kind != MATRIX_UNIT:
            raise ValueError("row/col map applies to the matrix-unit basis")
        rows = np.empty(self.size, dtype=np.int64)
        cols = np.empty(self.size, dtype=np.int64)
        for n in range(self.size):
            r = c = 0
            for k, nk in enumerate(self.digits(n)):
                d = self.local_dims[k]
                r = r * d + nk // d
                c = c * d + nk % d
            rows[n] = r
            cols[n] = c
        return rows, cols


def _local_product_table(d, kind):
    """Single-subsystem products ``e_p e_m = coeff * e_r`` (or zero).

    Returns ``(r_idx, coeff)`` arrays of shape ``(d^2, d^2)``; absent
    products carry ``r_idx = -1``.
    """
    size = d * d if kind == MATRIX_UNIT else 4
    r_idx = np.full((size, size), -1, dtype=np.int64)
    coeff = np.zeros((size, size), dtype=complex)
    if kind == MATRIX_UNIT:
        for p in range(size):
            i, j = divmod(p, d)
            for m in range(size):
                k, l = divmod(m, d)
                if j == k:
                    r_idx[p, m] = i * d + l
                    coeff[p, m] = 1.0
    else:
        for p in range(4):
            for m in range(4):
                prod = _PAULI_OPS[p] @ _PAULI_OPS[m]
                for r in range(4):
                    c = hs_inner(_PAULI_OPS[r], prod) / 2.0
                    if abs(c) > 1e-14:
                        r_idx[p, m] = r
                        coeff[p, m] = c
                        break
    return r_idx, coeff


@dataclass(frozen=True)
class StructureConstants:
    """Sparse table of basis-element products ``E_p E_m = sum_r c E_r``.

    For both supported kinds each product collapses to a single term, so the
    table stores one ``(r, coeff)`` per nonvanishing ``(p, m)`` pair.
    """

    basis: OperatorBasis
    _local: tuple = field(repr=False, default=())

    @classmethod
    def build(cls, basis):
        local = tuple(
            _local_product_table(d, basis.kind) for d in basis.local_dims)
        return cls(basis, local)

    def product(self, p, m):
        """List of ``(r, coeff)`` with ``E_p E_m = sum coeff * E_r``."""
        digits_p = self.basis.digits(p)
        digits_m = self.basis.digits(m)
        r_total = 0
        c_total = 1.0 + 0.0j
        for k, (dp, dm) in enumerate(zip(digits_p, digits_m)):
            r_idx, coeff = self._local[k]
            r = r_idx[dp, dm]
            if r < 0:
                return []
            d2 = self.basis.local_dims[k] ** 2
            r_total = r_total * d2 + int(r)
            c_total *= coeff[dp, dm]
        return [(r_total, c_total)]

    @cached_property
    def pair_table(self):
        """Arrays ``(P, M, R, C)`` over all pairs with nonzero product."""
        ps, ms, rs, cs = [], [], [], []
        for p in range(self.basis.size):
            for m in range(self.basis.size):
                terms = self.product(p, m)
                if terms:
                    r, c = terms[0]
                    ps.append(p)
                    ms.append(m)
                    rs.append(r)
                    cs.append(c)
        return (np.array(ps), np.array(ms), np.array(rs),
                np.array(cs, dtype=complex))


def structure_constants(basis):
    """Build the structure-constant table for ``basis``."""
    return StructureConstants.build(basis)


def basis_change_matrix(src, dst):
    """Unitary ``V`` with ``chi_dst = V chi_src V^dag``.

    Both bases must live on the same register.  ``V[a, m]`` is the overlap
    of orthonormalized elements ``<F_a/nu_F, E_m/nu_E>``.
    """
    if src.local_dims != dst.local_dims:
        raise ValueError("bases live on different registers")
    if src.kind == dst.kind:
        return np.eye(src.size, dtype=complex)
    scale = 1.0 / math.sqrt(src.hs_norm_sq * dst.hs_norm_sq)
    v = np.empty((dst.size, src.size), dtype=complex)
    src_ops = [src.operator(m) for m in range(src.size)]
    for a in range(dst.size):
        fa = dst.operator(a)
        for m in range(src.size):
            v[a, m] = hs_inner(fa, src_ops[m]) * scale
    return v
