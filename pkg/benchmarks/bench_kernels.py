"""Benchmark the compiled RK4 scan kernel against the numpy fallback.

Workloads mirror the production hot loop: the CSR generator of a C-NOT
pi-pulse segment on the doubled Choi space (dim 81) and of a three-atom
circuit segment (dim 729).  Run from the repository root:

    python benchmarks/bench_kernels.py

The numba path must be importable for the comparison; the fallback alone is
timed if it is not (or if RYDCHI_NO_NUMBA is set).
"""

import math
import time

import numpy as np

from rydchi import kernels
from rydchi.mcwf import _compile
from rydchi.rydberg import (EFFECTIVE3, AtomParams, RegisterModel,
                            build_cnot_sequence, build_cknot_sequence,
                            jump_operators)


def production_segment(n_atoms):
    params = AtomParams.from_hz(omega_b=50e6)
    reg = RegisterModel(n_atoms, EFFECTIVE3, params)
    if n_atoms == 2:
        sched = build_cnot_sequence(reg, 0, 1)
    else:
        sched = build_cknot_sequence(reg, tuple(range(n_atoms - 1)), n_atoms - 1)
    compiled = _compile(sched, jump_operators(reg), 200, double=True)
    seg = next(c for c in compiled if hasattr(c, "n_steps"))
    dim = reg.dim ** 2
    psi = np.zeros(dim, dtype=complex)
    psi[:: reg.dim + 1] = 1.0 / math.sqrt(reg.dim)
    return seg, psi


def time_scan(fn, seg, psi, n_steps, repeats=3):
    best = math.inf
    for _ in range(repeats):
        work = psi.copy()
        start = time.perf_counter()
        status, done, _, _ = fn(seg.data, seg.indices, seg.indptr, work,
                                seg.dt, n_steps, -1.0, 1e-3)
        best = min(best, time.perf_counter() - start)
        assert status == kernels.COMPLETED and done == n_steps
    return best, work


def main():
    print(f"active backend: {kernels.BACKEND}")
    for n_atoms, n_steps in ((2, 4000), (3, 1000)):
        seg, psi = production_segment(n_atoms)
        dim = psi.size
        nnz = seg.data.size
        print(f"\nworkload: {n_atoms}-atom segment, doubled dim {dim}, "
              f"nnz {nnz}, {n_steps} RK4 steps")

        t_np, out_np = time_scan(kernels.rk4_jump_scan_numpy, seg, psi, n_steps)
        rate_np = n_steps / t_np
        print(f"  numpy fallback: {t_np * 1e3:8.1f} ms  ({rate_np:9.0f} steps/s)")

        if kernels.rk4_jump_scan_numba is None:
            print("  numba backend unavailable; fallback timing only")
            continue
        # warm the JIT before timing
        kernels.rk4_jump_scan_numba(seg.data, seg.indices, seg.indptr,
                                    psi.copy(), seg.dt, 2, -1.0, 1e-3)
        t_nb, out_nb = time_scan(kernels.rk4_jump_scan_numba, seg, psi, n_steps)
        rate_nb = n_steps / t_nb
        err = np.abs(out_np - out_nb).max()
        print(f"  numba kernel:   {t_nb * 1e3:8.1f} ms  ({rate_nb:9.0f} steps/s)")
        print(f"  speedup: {t_np / t_nb:5.1f}x   max state deviation {err:.2e}")
        assert err < 1e-12, "backends disagree"


if __name__ == "__main__":
    main()
