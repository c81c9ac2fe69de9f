"""Monte Carlo wave-function propagation of pulse schedules.

Trajectories follow the norm-threshold unraveling: integrate
``dpsi/dt = -i H_eff psi`` with ``H_eff = H - (i/2) sum L^dag L`` at fixed
step size, and when ``||psi||^2`` first crosses a uniform draw ``r``, bisect
to the jump time, apply a jump operator chosen with probability
``||L_k psi||^2 / sum_j ||L_j psi||^2``, renormalize and redraw ``r``.
Averaging normalized final states over trajectories reproduces the master
equation; a single deterministic no-jump trajectory gives an estimate with a
rigorous error bound of ``1 - p_nojump``.

Per-trajectory seeds are ``base_seed XOR splitmix64(index)``, so results are
independent of execution order; ensemble reduction sums per-trajectory
contributions in fixed index order, making results bit-reproducible.
"""

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels, linalg
from .basis import MATRIX_UNIT, OperatorBasis
from .errors import DimensionCapError, NumericalAbortError
from .linalg import is_hermitian
from .process import from_choi, to_basis

__all__ = [
    "JumpOperator",
    "HamiltonianSegment",
    "InstantUnitary",
    "PulseSchedule",
    "TrajectoryConfig",
    "JumpEvent",
    "TrajectoryResult",
    "EnsembleResult",
    "trajectory_seed",
    "evolve_trajectory",
    "run_ensemble",
    "extract_chi",
    "no_jump_estimate",
    "jackknife_sigma",
]

# RK4 attenuates amplitudes rotating at eigenfrequency lam by about
# (lam*dt)^6/72 per step, so a segment of duration T loses up to
# T*lam*(lam*dt)^5/72 of fast-rotating population (e.g. blockade-shifted
# Choi branches that are merely parked).  Steps are refined so that loss
# stays below the budget; the hard cap keeps the scheme stable outright.
_STABILITY_LIMIT = 0.9
_DAMPING_BUDGET = 2e-4

_MASK64 = (1 << 64) - 1


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def trajectory_seed(base_seed, index):
    """Seed of trajectory ``index``: ``base_seed XOR splitmix64(index)``."""
    return (int(base_seed) ^ _splitmix64(int(index))) & _MASK64


@dataclass(frozen=True)
class JumpOperator:
    """A dissipation channel ``L`` (units sqrt(rad/s)) with a label."""

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"jump operator must be square, got {m.shape}")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class HamiltonianSegment:
    """Piecewise-constant Hamiltonian (rad/s) applied for ``duration`` (s).

    ``extra_jumps`` are dissipation channels active only during this
    segment (e.g. light-induced decay on the driven atom); they add to the
    schedule-wide jump operators.
    """

    hamiltonian: np.ndarray
    duration: float
    label: str = ""
    extra_jumps: tuple = ()

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        if self.duration <= 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration}")
        if not is_hermitian(h):
            raise ValueError(f"segment {self.label!r} Hamiltonian is not Hermitian")
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "extra_jumps", tuple(self.extra_jumps))


@dataclass(frozen=True)
class InstantUnitary:
    """An ideal, zero-duration gate with no dissipation exposure."""

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        u = np.asarray(self.matrix, dtype=complex)
        defect = np.abs(u.conj().T @ u - np.eye(u.shape[0])).max()
        if defect > 1e-10:
            raise ValueError(
                f"instant gate {self.label!r} is not unitary (defect {defect:.2e})")
        object.__setattr__(self, "matrix", u)


@dataclass(frozen=True)
class PulseSchedule:
    """Ordered segments and instantaneous unitaries on one register."""

    items: tuple
    local_dims: tuple

    def __post_init__(self):
        items = tuple(self.items)
        dims = tuple(int(d) for d in self.local_dims)
        d_total = math.prod(dims)
        for it in items:
            m = it.hamiltonian if isinstance(it, HamiltonianSegment) else it.matrix
            if m.shape != (d_total, d_total):
                raise ValueError(
                    f"item {it.label!r} has shape {m.shape}, register dim {d_total}")
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "local_dims", dims)

    @property
    def dim(self):
        return math.prod(self.local_dims)

    @property
    def segments(self):
        return [it for it in self.items if isinstance(it, HamiltonianSegment)]

    @property
    def duration(self):
        return sum(seg.duration for seg in self.segments)

    def followed_by(self, other):
        if self.local_dims != other.local_dims:
            raise ValueError("cannot join schedules on different registers")
        return PulseSchedule(self.items + other.items, self.local_dims)


@dataclass(frozen=True)
class TrajectoryConfig:
    """Ensemble size, seeding, and integrator resolution.

    ``damping_budget`` caps the RK4 attenuation of fast-rotating parked
    amplitudes per segment (see :data:`_DAMPING_BUDGET`); ``inf`` falls back
    to the bare stability limit, appropriate when every fast subspace is
    strongly dissipative anyway.
    """

    n_traj: int = 500
    base_seed: int = 0
    steps_per_min_pulse: int = 200
    jump_time_tolerance: float = 1e-3
    n_blocks: int = 10
    damping_budget: float = _DAMPING_BUDGET

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if self.steps_per_min_pulse < 10:
            raise ValueError("steps_per_min_pulse must be >= 10")


@dataclass(frozen=True)
class JumpEvent:
    time: float
    label: str


@dataclass(frozen=True)
class TrajectoryResult:
    state: np.ndarray
    jumps: tuple
    final_norm_sq: float


@dataclass(frozen=True)
class EnsembleResult:
    """Trajectory-averaged state with jump statistics.

    ``block_sums``/``block_counts`` partition the (unnormalized) outer-
    product sums into contiguous trajectory blocks for jackknife error
    estimation of derived quantities.
    """

    rho_avg: np.ndarray
    jump_counts: dict
    no_jump_fraction: float
    n_traj: int
    base_seed: int
    block_sums: np.ndarray = field(repr=False, default=None)
    block_counts: np.ndarray = field(repr=False, default=None)


class _CompiledSegment:
    __slots__ = ("label", "duration", "dt", "n_steps",
                 "data", "indices", "indptr", "jump_mats", "jump_labels")


class _CompiledUnitary:
    __slots__ = ("label", "u", "doubled")


def _csr_arrays(a):
    a = a.tocsr()
    a.eliminate_zeros()
    a.sort_indices()
    return (np.ascontiguousarray(a.data, dtype=np.complex128),
            np.ascontiguousarray(a.indices, dtype=np.int64),
            np.ascontiguousarray(a.indptr, dtype=np.int64))


def _compile(schedule, jumps, steps_per_min_pulse, double=False,
             damping_budget=_DAMPING_BUDGET):
    """Precompute CSR generators, step counts, and jump matrices.

    With ``double=True`` every operator is lifted to the system (x) ancilla
    space ``O -> O x I`` at the sparse level; instant unitaries are instead
    applied by reshaping, so the dense doubled matrix is never formed.
    """
    d = schedule.dim
    segments = schedule.segments
    t_min = min((seg.duration for seg in segments), default=0.0)
    global_ops = [(sp.csr_matrix(op.matrix), op.label) for op in jumps]
    identity = sp.identity(d, format="csr", dtype=complex)

    compiled = []
    for item in schedule.items:
        if isinstance(item, InstantUnitary):
            cu = _CompiledUnitary()
            cu.label = item.label
            cu.u = item.matrix
            cu.doubled = double
            compiled.append(cu)
            continue

        active = list(global_ops)
        active += [(sp.csr_matrix(op.matrix), op.label) for op in item.extra_jumps]
        h_eff = sp.csr_matrix(item.hamiltonian, dtype=complex)
        generator = (-1j) * h_eff
        for lmat, _ in active:
            generator = generator - 0.5 * (lmat.getH() @ lmat)

        dt_target = t_min / steps_per_min_pulse
        n1 = max(1, math.ceil(item.duration / dt_target - 1e-9))
        # Stiffness guard: refine segments whose spectral scale (Gershgorin
        # row bound) would make lam*dt large, both for stability and to keep
        # the accumulated RK4 damping of fast-rotating amplitudes below the
        # budget.
        row_norm = float(np.abs(generator).sum(axis=1).max())
        n2 = 0
        if row_norm > 0:
            x_max = _STABILITY_LIMIT
            if math.isfinite(damping_budget):
                x_max = min(x_max, (72.0 * damping_budget
                                    / (item.duration * row_norm)) ** 0.2)
            n2 = math.ceil(item.duration * row_norm / x_max)
        n_steps = max(n1, n2, 1)
        if n_steps > 10 ** 8:
            raise NumericalAbortError(
                f"segment {item.label!r} would need {n_steps} steps; "
                "the Hamiltonian scale and duration are inconsistent")

        if double:
            generator = sp.kron(generator, identity, format="csr")
            active = [(sp.kron(lmat, identity, format="csr"), lbl)
                      for lmat, lbl in active]

        seg = _CompiledSegment()
        seg.label = item.label
        seg.duration = item.duration
        seg.n_steps = n_steps
        seg.dt = item.duration / n_steps
        seg.data, seg.indices, seg.indptr = _csr_arrays(generator)
        seg.jump_mats = [lmat.tocsr() for lmat, _ in active]
        seg.jump_labels = [lbl for _, lbl in active]
        compiled.append(seg)
    return compiled


def _draw_r(rng):
    r = rng.random()
    while r == 0.0:
        r = rng.random()
    return r


def _apply_jump(seg, psi, rng):
    """Pick a channel with probability ~ ||L_k psi||^2 and apply it."""
    candidates = [lmat @ psi for lmat in seg.jump_mats]
    weights = np.array([np.vdot(v, v).real for v in candidates])
    total = weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise NumericalAbortError(
            f"zero total jump rate at a forced jump in segment {seg.label!r}")
    u = rng.random() * total
    acc = 0.0
    k = len(weights) - 1
    for idx, w in enumerate(weights):
        acc += w
        if u < acc:
            k = idx
            break
    psi[:] = candidates[k] / math.sqrt(weights[k])
    return seg.jump_labels[k]


def _run_compiled(compiled, psi0, rng, jump_tol):
    """One trajectory over precompiled items; ``rng=None`` suppresses jumps."""
    psi = np.array(psi0, dtype=np.complex128, copy=True)
    jumps = []
    r = _draw_r(rng) if rng is not None else -1.0
    t_global = 0.0

    for seg in compiled:
        if isinstance(seg, _CompiledUnitary):
            if seg.doubled:
                d = seg.u.shape[0]
                psi = (seg.u @ psi.reshape(d, -1)).reshape(-1)
            else:
                psi = seg.u @ psi
            continue

        threshold = r if (rng is not None and seg.jump_mats) else -1.0
        chunks = [(seg.dt, seg.n_steps)]
        elapsed = 0.0
        while chunks:
            step, count = chunks.pop()
            status, done, tau, _ = kernels.rk4_jump_scan(
                seg.data, seg.indices, seg.indptr, psi, step, count,
                threshold, jump_tol)
            if status == kernels.NONFINITE:
                raise NumericalAbortError(
                    f"non-finite amplitudes in segment {seg.label!r}")
            if status == kernels.COMPLETED:
                elapsed += step * count
                continue
            label = _apply_jump(seg, psi, rng)
            jumps.append(JumpEvent(t_global + elapsed + done * step + tau, label))
            r = _draw_r(rng)
            threshold = r
            leftover = step - tau
            remaining = count - done - 1
            if remaining > 0:
                chunks.append((step, remaining))
            if leftover > 1e-12 * step:
                chunks.append((leftover, 1))
            elapsed += done * step + tau
        t_global += seg.duration

    norm_sq = float(np.vdot(psi, psi).real)
    return psi, tuple(jumps), norm_sq


def evolve_trajectory(schedule, jumps, psi0, seed, *, steps_per_min_pulse=200,
                      jump_time_tolerance=1e-3):
    """Propagate a single stochastic trajectory from a normalized state."""
    psi0 = np.asarray(psi0, dtype=complex)
    norm = float(np.linalg.norm(psi0))
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"initial state norm {norm} != 1")
    compiled = _compile(schedule, jumps, steps_per_min_pulse)
    rng = np.random.Generator(np.random.PCG64(int(seed) & _MASK64))
    psi, events, norm_sq = _run_compiled(compiled, psi0, rng, jump_time_tolerance)
    return TrajectoryResult(psi / math.sqrt(norm_sq), events, norm_sq)


def _ensemble(compiled, psi0, cfg):
    d = psi0.size
    n = cfg.n_traj
    n_blocks = max(1, min(cfg.n_blocks, n))
    block_sums = np.zeros((n_blocks, d, d), dtype=complex)
    block_counts = np.zeros(n_blocks, dtype=np.int64)
    jump_counts = Counter()
    no_jump = 0

    for i in range(n):
        rng = np.random.Generator(
            np.random.PCG64(trajectory_seed(cfg.base_seed, i)))
        try:
            psi, events, norm_sq = _run_compiled(
                compiled, psi0, rng, cfg.jump_time_tolerance)
        except NumericalAbortError as exc:
            raise NumericalAbortError(f"trajectory {i}: {exc}") from exc
        psi /= math.sqrt(norm_sq)
        b = i * n_blocks // n
        block_sums[b] += np.outer(psi, psi.conj())
        block_counts[b] += 1
        if events:
            for ev in events:
                jump_counts[ev.label] += 1
        else:
            no_jump += 1

    rho = block_sums.sum(axis=0) / n
    rho /= rho.trace().real
    return EnsembleResult(
        rho_avg=rho,
        jump_counts=dict(jump_counts),
        no_jump_fraction=no_jump / n,
        n_traj=n,
        base_seed=cfg.base_seed,
        block_sums=block_sums,
        block_counts=block_counts,
    )


def run_ensemble(schedule, jumps, psi0, cfg):
    """Average ``n_traj`` independently seeded trajectories.

    The result is bit-reproducible for a given config: seeds depend only on
    trajectory index and contributions are summed in index order.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    norm = float(np.linalg.norm(psi0))
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"initial state norm {norm} != 1")
    compiled = _compile(schedule, jumps, cfg.steps_per_min_pulse,
                        damping_budget=cfg.damping_budget)
    return _ensemble(compiled, psi0, cfg)


def _entangled_input(d):
    psi = np.zeros(d * d, dtype=complex)
    psi[:: d + 1] = 1.0 / math.sqrt(d)
    return psi


def _qubit_embedded_indices(local_dims):
    """Register indices whose atoms all occupy levels 0 or 1."""
    n = len(local_dims)
    out = np.zeros(2 ** n, dtype=np.int64)
    for b in range(2 ** n):
        idx = 0
        for k in range(n):
            idx = idx * local_dims[k] + ((b >> (n - 1 - k)) & 1)
        out[b] = idx
    return out


def _qubit_entangled_input(local_dims, d):
    qi = _qubit_embedded_indices(local_dims)
    psi = np.zeros(d * d, dtype=complex)
    psi[qi * d + qi] = 1.0 / math.sqrt(qi.size)
    return psi


def _check_doubled_dim(d, max_dim):
    if max_dim is None:
        max_dim = linalg.MAX_DIM
    if d * d > max_dim:
        raise DimensionCapError(
            f"doubled space dimension {d * d} exceeds cap {max_dim}")


def extract_chi(schedule, jumps, basis, cfg, *, max_dim=None,
                return_ensemble=False, metadata=None, input_subspace="full"):
    """Estimate the chi matrix of a schedule by Choi-state evolution.

    A maximally entangled state of the register and an idle ancilla of equal
    dimension is propagated through the ensemble; the averaged output state,
    reindexed into the operator basis, is the chi matrix.

    ``input_subspace="qubit"`` entangles only the qubit levels instead,
    yielding directly the qubit-subspace restriction of the channel (equal
    to projecting the full chi matrix).  Use it when only the restricted
    channel is needed: input branches parked in fast auxiliary levels never
    get populated, so the integrator needs no stiffness refinement.  With
    that mode ``basis`` must be the qubit register.
    """
    d = schedule.dim
    _check_doubled_dim(d, max_dim)
    if input_subspace == "full":
        if tuple(basis.local_dims) != tuple(schedule.local_dims):
            raise ValueError("basis register does not match schedule register")
        psi0 = _entangled_input(d)
    elif input_subspace == "qubit":
        n = len(schedule.local_dims)
        if tuple(basis.local_dims) != (2,) * n:
            raise ValueError("qubit-input extraction needs a qubit basis")
        psi0 = _qubit_entangled_input(schedule.local_dims, d)
    else:
        raise ValueError(f"unknown input_subspace {input_subspace!r}")

    compiled = _compile(schedule, jumps, cfg.steps_per_min_pulse, double=True,
                        damping_budget=cfg.damping_budget)
    ens = _ensemble(compiled, psi0, cfg)
    meta = dict(metadata or {})
    meta.update(n_traj=cfg.n_traj, base_seed=cfg.base_seed,
                no_jump_fraction=ens.no_jump_fraction)

    if input_subspace == "qubit":
        qi = _qubit_embedded_indices(schedule.local_dims)
        pair = (qi[:, None] * d + qi[None, :]).reshape(-1)
        j_q = ens.rho_avg[np.ix_(pair, pair)]
        mu = from_choi(j_q, OperatorBasis(basis.local_dims, MATRIX_UNIT), meta)
    else:
        mu = from_choi(ens.rho_avg,
                       OperatorBasis(schedule.local_dims, MATRIX_UNIT), meta)
    out = to_basis(mu, basis.kind)
    return (out, ens) if return_ensemble else out


def no_jump_estimate(schedule, jumps, basis, *, steps_per_min_pulse=200,
                     max_dim=None, damping_budget=_DAMPING_BUDGET,
                     metadata=None):
    """Deterministic no-jump chi estimate and its error bound.

    Returns the process matrix built from the unnormalized no-jump Choi
    state (trace equals the survival probability ``p_nj``) together with the
    bound ``1 - p_nj`` on the trace distance between the normalized estimate
    and the full ensemble average.
    """
    if tuple(basis.local_dims) != tuple(schedule.local_dims):
        raise ValueError("basis register does not match schedule register")
    d = schedule.dim
    _check_doubled_dim(d, max_dim)
    compiled = _compile(schedule, jumps, steps_per_min_pulse, double=True,
                        damping_budget=damping_budget)
    psi, _, p_nj = _run_compiled(compiled, _entangled_input(d), None, 1e-3)
    meta = dict(metadata or {})
    meta.update(no_jump_survival=p_nj)
    mu = from_choi(np.outer(psi, psi.conj()),
                   OperatorBasis(schedule.local_dims, MATRIX_UNIT), meta)
    return to_basis(mu, basis.kind), 1.0 - p_nj


def jackknife_sigma(ens, statistic):
    """Delete-one-block jackknife standard error of ``statistic(rho)``.

    ``statistic`` receives the renormalized ensemble average with one block
    of trajectories removed.
    """
    if ens.block_sums is None or len(ens.block_counts) < 2:
        return 0.0
    total = ens.block_sums.sum(axis=0)
    n = int(ens.block_counts.sum())
    values = []
    for b in range(len(ens.block_counts)):
        rho = (total - ens.block_sums[b]) / (n - int(ens.block_counts[b]))
        rho = rho / rho.trace().real
        values.append(statistic(rho))
    values = np.asarray(values, dtype=float)
    n_blocks = values.size
    return math.sqrt((n_blocks - 1) / n_blocks * ((values - values.mean()) ** 2).sum())
