"""Batch front end: gate characterization, sweeps, concatenation, comparison.

Every run is driven by a JSON config (frequencies in Hz, matching the
experimental presentation; converted to rad/s internally) plus optional flag
overrides, and emits its data files together with a manifest that records
the resolved config, its content hash, both unit systems, and timing.  Data
outputs are deterministic given the config; the manifest's wall-time field
is the only value that varies between identical runs.

Exit codes: 0 success, 2 config error, 3 dimension cap, 4 schema mismatch,
5 numerical abort.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import replace

from .basis import MATRIX_UNIT, OperatorBasis
from .circuit import (Circuit, Gate, chi_via_concatenation,
                      compare_implementations, ideal_chi_library, point_seed,
                      toffoli_circuit)
from .errors import (ConfigError, DimensionCapError, NumericalAbortError,
                     RydchiError, SchemaError)
from .mcwf import TrajectoryConfig, extract_chi, no_jump_estimate
from .process import (chi_from_kraus, chi_to_dict, load_chi,
                      project_to_qubit_subspace, trace_distance)
from .rydberg import (PRESETS, AtomParams, RegisterModel, build_cknot_sequence,
                      build_cnot_sequence, canonical_cnot, jump_operators,
                      parse_scheme)
from .mcwf import PulseSchedule
from . import kernels

SWEEP_CSV_HEADER = ("omega_b_hz", "trace_distance", "leakage", "nojump_bound")

_EXIT_CODES = (
    (ConfigError, 2),
    (DimensionCapError, 3),
    (SchemaError, 4),
    (NumericalAbortError, 5),
)


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".rydchi-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _parse_override(text):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not KEY=VALUE")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path, overrides=(), seed=None, traj=None, out=None):
    """Read, override, and lightly validate a run config."""
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config: top level must be an object")

    for item in overrides:
        key, value = _parse_override(item)
        target = cfg
        while "." in key:
            head, key = key.split(".", 1)
            target = target.setdefault(head, {})
            if not isinstance(target, dict):
                raise ConfigError(f"override path {head!r} is not an object")
        target[key] = value
    if seed is not None:
        cfg["base_seed"] = int(seed)
    if traj is not None:
        cfg["n_traj"] = int(traj)
    if out is not None:
        cfg["out_dir"] = out

    cfg.setdefault("preset", "table1" if "params" not in cfg else None)
    cfg.setdefault("scheme", "effective-3")
    cfg.setdefault("n_traj", 500)
    cfg.setdefault("base_seed", 1)
    cfg.setdefault("out_dir", ".")
    cfg.setdefault("steps_per_min_pulse", 200)
    if cfg["n_traj"] < 1:
        raise ConfigError("n_traj: must be >= 1")
    return cfg


def _resolve_params(cfg):
    if cfg.get("params") is not None:
        raw = dict(cfg["params"])
    else:
        preset = cfg.get("preset")
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}")
        raw = dict(PRESETS[preset])
    if cfg.get("omega_b_hz") is not None:
        raw["omega_b"] = float(cfg["omega_b_hz"])
    if cfg.get("blockade_hz") is not None:
        value = cfg["blockade_hz"]
        raw["blockade"] = math.inf if value == "inf" else float(value)
    if cfg.get("zero_dissipation"):
        raw.update(gamma_p=0.0, gamma_r=0.0, gamma_d=0.0)
    try:
        return AtomParams.from_hz(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"params: {exc}") from exc


def _traj_config(cfg):
    return TrajectoryConfig(
        n_traj=int(cfg["n_traj"]),
        base_seed=int(cfg["base_seed"]),
        steps_per_min_pulse=int(cfg["steps_per_min_pulse"]),
    )


def _write_manifest(cfg, out_dir, name, extra):
    params = _resolve_params(cfg)
    manifest = {
        "config": cfg,
        "config_sha256": _config_hash(cfg),
        "parameters_hz": params.to_hz(),
        "parameters_rad_s": {k: getattr(params, k) for k in params.to_hz()},
        "kernel_backend": kernels.BACKEND,
    }
    manifest.update(extra)
    path = os.path.join(out_dir, name)
    _atomic_write(path, json.dumps(manifest, indent=1, sort_keys=True,
                                   default=str) + "\n")
    return path


def _save_chi_atomic(p, path):
    _atomic_write(path, json.dumps(chi_to_dict(p), indent=1, sort_keys=True) + "\n")


def _gate_schedule(cfg, params):
    scheme = parse_scheme(cfg["scheme"])
    gate = cfg.get("gate")
    compensate = bool(cfg.get("compensate_stark", True))
    if gate == "identity":
        register = RegisterModel(1, scheme, params)
        return register, PulseSchedule((), register.local_dims)
    if gate == "CNOT":
        register = RegisterModel(2, scheme, params)
        return register, build_cnot_sequence(register, 0, 1,
                                             compensate_stark=compensate)
    if gate == "C2NOT":
        register = RegisterModel(3, scheme, params)
        return register, build_cknot_sequence(register, (0, 1), 2,
                                              compensate_stark=compensate)
    raise ConfigError(f"gate: must be one of CNOT, C2NOT, identity, got {gate!r}")


def cmd_gate_chi(cfg):
    params = _resolve_params(cfg)
    register, schedule = _gate_schedule(cfg, params)
    jumps = jump_operators(register)
    tcfg = _traj_config(cfg)
    basis = OperatorBasis(register.local_dims, MATRIX_UNIT)

    started = time.monotonic()
    chi_full = extract_chi(schedule, jumps, basis, tcfg,
                           metadata={"gate": cfg.get("gate"),
                                     "scheme": cfg["scheme"],
                                     "omega_b_hz": params.omega_b / (2 * math.pi)})
    chi_q = project_to_qubit_subspace(chi_full)
    _, bound = no_jump_estimate(schedule, jumps, basis,
                                steps_per_min_pulse=tcfg.steps_per_min_pulse)
    wall = time.monotonic() - started

    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    # the atom-level chi is the native artifact (concatenation keeps leakage
    # flowing between gates); the qubit-subspace restriction rides along
    name = cfg.get("output_name", f"chi_{cfg.get('gate', 'gate').lower()}.json")
    qubit_name = name.replace(".json", "") + "_qubit.json"
    chi_path = os.path.join(out_dir, name)
    _save_chi_atomic(chi_full, chi_path)
    _save_chi_atomic(chi_q, os.path.join(out_dir, qubit_name))
    _write_manifest(cfg, out_dir, name.replace(".json", "") + "_manifest.json", {
        "outputs": [name, qubit_name],
        "pulse_count": len(schedule.segments),
        "n_traj": tcfg.n_traj,
        "base_seed": tcfg.base_seed,
        "leakage": 1.0 - chi_q.trace,
        "nojump_bound": bound,
        "wall_time_s": wall,
    })
    print(f"wrote {chi_path} (pulses={len(schedule.segments)}, "
          f"leakage={1.0 - chi_q.trace:.3e})")
    return 0


def cmd_sweep(cfg):
    params = _resolve_params(cfg)
    scheme = parse_scheme(cfg["scheme"])
    grid = cfg.get("omega_b_grid_hz")
    if not grid:
        raise ConfigError("omega_b_grid_hz: required for sweep mode")
    tcfg = _traj_config(cfg)
    ideal = chi_from_kraus([canonical_cnot()], OperatorBasis((2, 2), MATRIX_UNIT))

    started = time.monotonic()
    rows = []
    for gi, omega_b_hz in enumerate(grid):
        p = params.with_omega_b_hz(omega_b_hz)
        register = RegisterModel(2, scheme, p)
        schedule = build_cnot_sequence(
            register, 0, 1, compensate_stark=bool(cfg.get("compensate_stark", True)))
        jumps = jump_operators(register)
        basis = OperatorBasis(register.local_dims, MATRIX_UNIT)
        pcfg = replace(tcfg, base_seed=point_seed(tcfg.base_seed, gi))
        chi_full = extract_chi(schedule, jumps, basis, pcfg)
        chi_q = project_to_qubit_subspace(chi_full)
        _, bound = no_jump_estimate(schedule, jumps, basis,
                                    steps_per_min_pulse=tcfg.steps_per_min_pulse)
        rows.append((float(omega_b_hz), trace_distance(chi_q, ideal),
                     1.0 - chi_q.trace, bound))
        print(f"sweep {gi + 1}/{len(grid)}: omega_b={omega_b_hz / 1e6:g} MHz "
              f"T={rows[-1][1]:.4f}", file=sys.stderr)
    wall = time.monotonic() - started

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(SWEEP_CSV_HEADER)
    for row in rows:
        writer.writerow([repr(v) for v in row])
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    name = cfg.get("output_name", "cnot_sweep.csv")
    csv_path = os.path.join(out_dir, name)
    _atomic_write(csv_path, buf.getvalue())
    _write_manifest(cfg, out_dir, name.replace(".csv", "") + "_manifest.json", {
        "outputs": [name],
        "n_traj": tcfg.n_traj,
        "base_seed": tcfg.base_seed,
        "wall_time_s": wall,
    })
    print(f"wrote {csv_path}")
    return 0


def _circuit_from_config(cfg):
    spec = cfg.get("circuit", "toffoli")
    if spec == "toffoli":
        return toffoli_circuit()
    if isinstance(spec, dict):
        gates = [Gate(g["kind"], tuple(g["wires"])) for g in spec["gates"]]
        return Circuit.from_gates(int(spec["n_wires"]), gates)
    raise ConfigError(f"circuit: unknown circuit spec {spec!r}")


def cmd_concat(cfg):
    circuit = _circuit_from_config(cfg)
    library_cfg = cfg.get("library", {})
    file_entries = {kind: load_chi(source)
                    for kind, source in library_cfg.items()
                    if source != "ideal"}
    dims = {d for entry in file_entries.values()
            for d in entry.basis.local_dims}
    if len(dims) > 1:
        raise ConfigError(f"library: chi files mix local dimensions {sorted(dims)}")
    local_dim = dims.pop() if dims else 2
    library = ideal_chi_library(file_entries, local_dim=local_dim)

    started = time.monotonic()
    chi_cat = chi_via_concatenation(circuit, library)
    wall = time.monotonic() - started

    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    name = cfg.get("output_name", "chi_concat.json")
    path = os.path.join(out_dir, name)
    _save_chi_atomic(chi_cat, path)
    _write_manifest(cfg, out_dir, name.replace(".json", "") + "_manifest.json", {
        "outputs": [name],
        "gate_census": dict(circuit.gate_census()),
        "wall_time_s": wall,
    })
    print(f"wrote {path}")
    return 0


def cmd_distance(cfg):
    for key in ("chi_a", "chi_b"):
        if key not in cfg:
            raise ConfigError(f"{key}: required for distance mode")
    a = load_chi(cfg["chi_a"])
    b = load_chi(cfg["chi_b"])
    value = trace_distance(a, b)
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    name = cfg.get("output_name", "distance.json")
    _atomic_write(os.path.join(out_dir, name),
                  json.dumps({"trace_distance": value}, indent=1) + "\n")
    print(f"trace_distance = {value!r}")
    return 0


def cmd_toffoli_compare(cfg):
    params = _resolve_params(cfg)
    scheme = parse_scheme(cfg["scheme"])
    grid = cfg.get("omega_b_grid_hz") or [x * 1e6 for x in range(10, 101, 10)]
    tcfg = _traj_config(cfg)

    started = time.monotonic()
    report = compare_implementations(grid, params, tcfg, scheme)
    wall = time.monotonic() - started

    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    name = cfg.get("output_name", "toffoli_compare.csv")
    path = os.path.join(out_dir, name)
    _atomic_write(path, report.csv_text())
    _write_manifest(cfg, out_dir, name.replace(".csv", "") + "_manifest.json", {
        "outputs": [name],
        "n_traj": tcfg.n_traj,
        "base_seed": tcfg.base_seed,
        "wall_time_s": wall,
        "t_cnot": [r.t_cnot for r in report.rows],
        "sigma_t_cat": [r.sigma_t_cat for r in report.rows],
        "sigma_t_cir": [r.sigma_t_cir for r in report.rows],
    })
    print(f"wrote {path}")
    return 0


COMMANDS = {
    "gate-chi": cmd_gate_chi,
    "sweep": cmd_sweep,
    "concat": cmd_concat,
    "distance": cmd_distance,
    "toffoli-compare": cmd_toffoli_compare,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="rydchi",
        description="Process matrices of dissipative Rydberg-blockade gates")
    sub = parser.add_subparsers(dest="command", required=True)
    for verb in COMMANDS:
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--traj", type=int, help="override n_traj")
        p.add_argument("--out", help="override output directory")
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="set a config field")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.override, args.seed, args.traj,
                          args.out)
        mode = cfg.get("mode")
        expected = "cnot-sweep" if args.command == "sweep" else args.command
        if mode is not None and mode != expected:
            raise ConfigError(f"mode: config says {mode!r}, command is "
                              f"{args.command!r}")
        return COMMANDS[args.command](cfg)
    except RydchiError as exc:
        for klass, code in _EXIT_CODES:
            if isinstance(exc, klass):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
