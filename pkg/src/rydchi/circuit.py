"""Circuits, the Toffoli decomposition, and chi-level comparisons.

Two routes to a circuit's process matrix are provided: concatenation of
per-gate chi matrices (``chi_cat``; one simulated C-NOT reused for every
instance) and a single full-register simulation of the whole pulse sequence
(``chi_cir``).  Both are compared against the ideal gate and against the
multi-qubit blockade implementation of the same logic.
"""

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from .basis import MATRIX_UNIT, OperatorBasis
from .mcwf import extract_chi, jackknife_sigma, no_jump_estimate
from .process import (chi_from_kraus, from_choi, identity_chi,
                      parallel_concat, project_to_qubit_subspace,
                      reorder_subsystems, serial_concat, trace_distance)
from .rydberg import (SINGLE_QUBIT_GATES, EFFECTIVE3, RegisterModel,
                      build_cknot_sequence, build_cnot_sequence,
                      canonical_cknot, canonical_cnot, single_qubit_gate)
from . import mcwf as _mcwf

__all__ = [
    "Gate",
    "Circuit",
    "toffoli_circuit",
    "canonical_unitary",
    "circuit_unitary",
    "ideal_chi_library",
    "chi_via_concatenation",
    "chi_via_full_simulation",
    "circuit_schedule",
    "ComparisonRow",
    "ComparisonReport",
    "compare_implementations",
    "point_seed",
    "COMPARISON_CSV_HEADER",
]

_ONE_QUBIT_KINDS = ("H", "T", "Tdag", "X")


@dataclass(frozen=True)
class Gate:
    """A named gate on ordered wires (controls first for CNOT/CkNOT)."""

    kind: str
    wires: tuple

    def __post_init__(self):
        wires = tuple(int(w) for w in self.wires)
        object.__setattr__(self, "wires", wires)
        if len(set(wires)) != len(wires):
            raise ValueError(f"gate wires {wires} collide")
        expected = {"CNOT": 2}.get(self.kind)
        if self.kind in _ONE_QUBIT_KINDS:
            expected = 1
        if expected is not None and len(wires) != expected:
            raise ValueError(f"{self.kind} takes {expected} wires, got {wires}")
        if self.kind == "CkNOT" and len(wires) < 2:
            raise ValueError("CkNOT needs at least one control and a target")
        if expected is None and self.kind != "CkNOT":
            raise ValueError(f"unknown gate kind {self.kind!r}")


@dataclass(frozen=True)
class Circuit:
    """Moments of gates on disjoint wires."""

    n_wires: int
    moments: tuple

    def __post_init__(self):
        moments = tuple(tuple(m) for m in self.moments)
        for moment in moments:
            seen = set()
            for gate in moment:
                if max(gate.wires) >= self.n_wires:
                    raise ValueError(f"gate {gate} outside {self.n_wires} wires")
                if seen & set(gate.wires):
                    raise ValueError(f"moment {moment} has overlapping wires")
                seen |= set(gate.wires)
        object.__setattr__(self, "moments", moments)

    @classmethod
    def from_gates(cls, n_wires, gates):
        """Greedy left-to-right packing of a gate sequence into moments."""
        moments = []
        for gate in gates:
            placed = False
            if moments:
                used = set()
                for g in moments[-1]:
                    used |= set(g.wires)
                if not used & set(gate.wires):
                    moments[-1].append(gate)
                    placed = True
            if not placed:
                moments.append([gate])
        return cls(n_wires, tuple(tuple(m) for m in moments))

    def gates(self):
        for moment in self.moments:
            yield from moment

    def gate_census(self):
        return Counter(g.kind for g in self.gates())


def toffoli_circuit():
    """Standard 3-wire Toffoli decomposition: 6 CNOT, 2 H, 7 T-type gates."""
    g = Gate
    seq = [
        g("H", (2,)),
        g("CNOT", (1, 2)),
        g("Tdag", (2,)),
        g("CNOT", (0, 2)),
        g("T", (2,)),
        g("CNOT", (1, 2)),
        g("Tdag", (2,)),
        g("CNOT", (0, 2)),
        g("T", (1,)),
        g("T", (2,)),
        g("CNOT", (0, 1)),
        g("H", (2,)),
        g("T", (0,)),
        g("Tdag", (1,)),
        g("CNOT", (0, 1)),
    ]
    return Circuit.from_gates(3, seq)


def canonical_unitary(gate):
    """Exact qubit-space unitary of a single gate."""
    if gate.kind in _ONE_QUBIT_KINDS:
        return SINGLE_QUBIT_GATES[gate.kind]
    if gate.kind == "CNOT":
        return canonical_cnot()
    if gate.kind == "CkNOT":
        return canonical_cknot(len(gate.wires) - 1)
    raise ValueError(f"unknown gate kind {gate.kind!r}")


def circuit_unitary(circuit):
    """Exact product unitary of a circuit on the qubit register."""
    from .rydberg import lift_qubit_unitary

    u = np.eye(2 ** circuit.n_wires, dtype=complex)
    for gate in circuit.gates():
        u = lift_qubit_unitary(canonical_unitary(gate), circuit.n_wires,
                               gate.wires) @ u
    return u


def ideal_chi_library(extra=None, local_dim=2):
    """Exact chi matrices of the ideal gates, keyed by gate kind.

    With ``local_dim > 2`` the gates act on the qubit levels of d-level
    atoms (identity on the auxiliary levels), so they can be concatenated
    with measured atom-level chi matrices.
    """
    from .rydberg import lift_to_levels

    lib = {}
    b1 = OperatorBasis((local_dim,), MATRIX_UNIT)
    for kind in _ONE_QUBIT_KINDS:
        lib[kind] = chi_from_kraus(
            [lift_to_levels(SINGLE_QUBIT_GATES[kind], 1, local_dim)], b1)
    lib["CNOT"] = chi_from_kraus(
        [lift_to_levels(canonical_cnot(), 2, local_dim)],
        OperatorBasis((local_dim, local_dim), MATRIX_UNIT))
    if extra:
        lib.update(extra)
    return lib


def chi_via_concatenation(circuit, library):
    """Concatenate per-gate chi matrices into the circuit's chi matrix.

    Within a moment the gate channels (plus identity channels on idle
    wires) are combined in parallel; moments are then composed serially.
    The same library entry serves every instance of a gate kind.

    Library entries may live on qubit wires or on d-level atoms (all with
    one common local dimension); in the latter case the result is the
    atom-level circuit channel, with leakage flowing between gates, and can
    be projected to the qubit subspace afterwards.
    """
    n = circuit.n_wires
    local_dim = None
    for gate in circuit.gates():
        entry = library.get(gate.kind)
        if entry is None:
            raise KeyError(f"gate kind {gate.kind!r} missing from library")
        dims = set(entry.basis.local_dims)
        if entry.basis.n_subsystems != len(gate.wires) or len(dims) != 1:
            raise ValueError(
                f"library chi for {gate.kind!r} has register "
                f"{entry.basis.local_dims}, gate has wires {gate.wires}")
        d = dims.pop()
        if local_dim is None:
            local_dim = d
        elif local_dim != d:
            raise ValueError("library entries mix local dimensions")
    local_dim = local_dim or 2

    total = None
    for moment in circuit.moments:
        pieces = []
        positions = []
        for gate in moment:
            pieces.append(library[gate.kind])
            positions.extend(gate.wires)
        idle = [w for w in range(n) if w not in positions]
        if idle:
            pieces.append(identity_chi(
                OperatorBasis((local_dim,) * len(idle), MATRIX_UNIT)))
            positions.extend(idle)
        combined = pieces[0]
        for piece in pieces[1:]:
            combined = parallel_concat(combined, piece)
        perm = [positions.index(w) for w in range(n)]
        moment_chi = reorder_subsystems(combined, perm)
        total = moment_chi if total is None else serial_concat(total, moment_chi)
    if total is None:
        total = identity_chi(OperatorBasis((local_dim,) * n, MATRIX_UNIT))
    return total


def circuit_schedule(circuit, register, *, compensate_stark=True,
                     frame_correction=True):
    """Expand a circuit into one full-register pulse schedule.

    CNOT/CkNOT gates become their blockade pulse sequences; one-qubit gates
    become ideal instantaneous unitaries.  Gates are laid out sequentially
    (pulses on one register cannot overlap), which leaves the chi matrix
    unchanged because instantaneous gates commute across disjoint wires.
    """
    items = []
    for gate in circuit.gates():
        if gate.kind in _ONE_QUBIT_KINDS:
            items.append(single_qubit_gate(gate.kind, register, gate.wires[0]))
        elif gate.kind == "CNOT":
            sub = build_cnot_sequence(register, *gate.wires,
                                      compensate_stark=compensate_stark,
                                      frame_correction=frame_correction)
            items.extend(sub.items)
        elif gate.kind == "CkNOT":
            sub = build_cknot_sequence(register, gate.wires[:-1], gate.wires[-1],
                                       compensate_stark=compensate_stark,
                                       frame_correction=frame_correction)
            items.extend(sub.items)
        else:
            raise ValueError(f"cannot schedule gate kind {gate.kind!r}")
    return _mcwf.PulseSchedule(tuple(items), register.local_dims)


def chi_via_full_simulation(circuit, register, cfg, jumps=None, *,
                            compensate_stark=True, return_details=False):
    """Simulate the whole circuit on the full register and project to qubits.

    Returns the qubit-subspace chi matrix; with ``return_details`` also the
    raw ensemble and the no-jump bound of the full-register simulation.
    """
    from .rydberg import jump_operators

    if register.n_atoms != circuit.n_wires:
        raise ValueError("register size does not match circuit width")
    if jumps is None:
        jumps = jump_operators(register)
    schedule = circuit_schedule(circuit, register,
                                compensate_stark=compensate_stark)
    basis = OperatorBasis(register.local_dims, MATRIX_UNIT)
    chi_full, ens = extract_chi(schedule, jumps, basis, cfg, return_ensemble=True)
    chi_q = project_to_qubit_subspace(chi_full)
    if not return_details:
        return chi_q
    _, bound = no_jump_estimate(schedule, jumps, basis,
                                steps_per_min_pulse=cfg.steps_per_min_pulse)
    return chi_q, ens, bound


COMPARISON_CSV_HEADER = ("omega_b_hz", "t_cat", "t_cir", "t_c2not", "leak_cat",
                         "leak_cir", "leak_c2not", "bound_nojump_cir", "seed")


@dataclass(frozen=True)
class ComparisonRow:
    omega_b_hz: float
    t_cat: float
    t_cir: float
    t_c2not: float
    leak_cat: float
    leak_cir: float
    leak_c2not: float
    bound_nojump_cir: float
    seed: int
    t_cnot: float = math.nan
    sigma_t_cat: float = math.nan
    sigma_t_cir: float = math.nan


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple

    def to_csv(self, path_or_buf):
        """Write the comparison curves (spec columns only)."""
        close = False
        if isinstance(path_or_buf, (str, bytes)):
            fh = open(path_or_buf, "w", newline="", encoding="utf-8")
            close = True
        else:
            fh = path_or_buf
        try:
            writer = csv.writer(fh)
            writer.writerow(COMPARISON_CSV_HEADER)
            for row in self.rows:
                writer.writerow([repr(float(row.omega_b_hz))]
                                + [repr(float(getattr(row, k)))
                                   for k in COMPARISON_CSV_HEADER[1:-1]]
                                + [int(row.seed)])
        finally:
            if close:
                fh.close()

    def csv_text(self):
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def point_seed(base_seed, grid_index, stream=0):
    """Deterministic seed for one grid point and sub-simulation.

    The grid index is mixed into the base seed and the whole word re-mixed
    before the stream offset, so no two (point, stream) pairs can cancel.
    """
    from .mcwf import _splitmix64

    mixed = _splitmix64(int(base_seed) ^ _splitmix64(int(grid_index)))
    return _splitmix64(mixed + int(stream))


def _distance_statistic(ideal, dims, post=None):
    """Trace distance to ``ideal`` as a functional of a raw Choi average."""
    mu = OperatorBasis(dims, MATRIX_UNIT)

    def stat(rho):
        chi = project_to_qubit_subspace(from_choi(rho, mu))
        if post is not None:
            chi = post(chi)
        return trace_distance(chi, ideal)

    return stat


def compare_implementations(omega_b_grid, params, cfg, scheme=EFFECTIVE3):
    """Toffoli-circuit vs multi-qubit C2-NOT comparison over a Rabi sweep.

    For each blue Rabi frequency, three process matrices are measured
    against the ideal Toffoli: ``chi_cat`` (one simulated C-NOT chi
    concatenated through the circuit at the atom level, so leakage flows
    between gates, then projected), ``chi_cir`` (full three-atom simulation
    of the circuit), and the seven-pulse C2-NOT.  Per-point seeds derive
    from ``(base_seed, grid index)``; jackknife standard errors of the
    cat/cir distances ride along for convergence checks.
    """
    circuit = toffoli_circuit()
    d_local = scheme.local_dim
    ideal_toffoli = chi_from_kraus([canonical_cknot(2)],
                                   OperatorBasis((2, 2, 2), MATRIX_UNIT))
    ideal_cnot = chi_from_kraus([canonical_cnot()],
                                OperatorBasis((2, 2), MATRIX_UNIT))
    rows = []
    for gi, omega_b_hz in enumerate(omega_b_grid):
        p = params.with_omega_b_hz(omega_b_hz)
        reg2 = RegisterModel(2, scheme, p)
        reg3 = RegisterModel(3, scheme, p)
        seed_root = point_seed(cfg.base_seed, gi)

        # Two-atom C-NOT characterization, reused for every circuit instance.
        from .rydberg import jump_operators

        cnot_sched = build_cnot_sequence(reg2, 0, 1)
        cnot_cfg = replace(cfg, base_seed=point_seed(cfg.base_seed, gi, 0))
        chi_cnot_full, ens_cnot = extract_chi(
            cnot_sched, jump_operators(reg2),
            OperatorBasis(reg2.local_dims, MATRIX_UNIT), cnot_cfg,
            return_ensemble=True)
        chi_cnot = project_to_qubit_subspace(chi_cnot_full)
        t_cnot = trace_distance(chi_cnot, ideal_cnot)

        def cat_distance(chi_cnot_atoms):
            lib = ideal_chi_library({"CNOT": chi_cnot_atoms},
                                    local_dim=d_local)
            cat = project_to_qubit_subspace(
                chi_via_concatenation(circuit, lib))
            return cat, trace_distance(cat, ideal_toffoli)

        chi_cat, t_cat = cat_distance(chi_cnot_full)

        def cat_stat(rho, _mu=OperatorBasis(reg2.local_dims, MATRIX_UNIT)):
            return cat_distance(from_choi(rho, _mu))[1]

        sigma_t_cat = jackknife_sigma(ens_cnot, cat_stat)

        cir_cfg = replace(cfg, base_seed=point_seed(cfg.base_seed, gi, 1))
        chi_cir, ens_cir, bound_cir = chi_via_full_simulation(
            circuit, reg3, cir_cfg, return_details=True)
        t_cir = trace_distance(chi_cir, ideal_toffoli)
        sigma_t_cir = jackknife_sigma(
            ens_cir, _distance_statistic(ideal_toffoli, reg3.local_dims))

        c2_cfg = replace(cfg, base_seed=point_seed(cfg.base_seed, gi, 2))
        c2_sched = build_cknot_sequence(reg3, (0, 1), 2)
        chi_c2_full = extract_chi(c2_sched, jump_operators(reg3),
                                  OperatorBasis(reg3.local_dims, MATRIX_UNIT),
                                  c2_cfg)
        chi_c2 = project_to_qubit_subspace(chi_c2_full)
        t_c2not = trace_distance(chi_c2, ideal_toffoli)

        rows.append(ComparisonRow(
            omega_b_hz=float(omega_b_hz),
            t_cat=t_cat,
            t_cir=t_cir,
            t_c2not=t_c2not,
            leak_cat=1.0 - chi_cat.trace,
            leak_cir=1.0 - chi_cir.trace,
            leak_c2not=1.0 - chi_c2.trace,
            bound_nojump_cir=bound_cir,
            seed=seed_root,
            t_cnot=t_cnot,
            sigma_t_cat=sigma_t_cat,
            sigma_t_cir=sigma_t_cir,
        ))
    return ComparisonReport(tuple(rows))
