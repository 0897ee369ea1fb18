"""Command-line front end: ``twostroke {run,vqt,transpile,modes}``.

Exit codes: 0 success, 2 configuration or parse error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from twostroke.circuits import (
    CircuitParseError,
    build_heat_stroke_circuit,
    build_work_stroke_circuit,
    dumps,
    loads,
)
from twostroke.config import SCHEMA, ConfigError, RunConfig, apply_overrides, load_config
from twostroke.engine import (
    EngineConfig,
    classify_mode,
    detect_limit_cycle,
    mean_ledger,
    run_cycles,
    run_repetitions,
    summarize_repetitions,
    verify_mode,
)
from twostroke.model import ChainSpec
from twostroke.transpile import Topology, transpile, two_qubit_count, verify_equivalence
from twostroke.vqt import ShotEnergy, VqtResult, train_bath

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
EQUIVALENCE_TOL = 1e-8


class NumericalFailure(RuntimeError):
    pass


def _dump_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def _require_finite(**values) -> None:
    for name, value in values.items():
        if not np.all(np.isfinite(value)):
            raise NumericalFailure(f"{name} is not finite")


# ---------------------------------------------------------------- config


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI config file or bundled name (heat_engine, refrigerator, accelerator)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--shots", type=int)
    parser.add_argument("--cycles", type=int, help="number of engine cycles")
    parser.add_argument("--execution", choices=("exact", "circuit", "shots"))
    parser.add_argument("--out-dir")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for repetitions and sweep cells")


def _resolved(args) -> RunConfig:
    cfg = load_config(args.config)
    overrides = {
        "seed": ("run", "seed", args.seed),
        "shots": ("run", "shots", args.shots),
        "cycles": ("run", "n_cycles", args.cycles),
        "execution": ("run", "execution", args.execution),
        "out_dir": ("output", "out_dir", args.out_dir),
    }
    for flag, key in (("bath_prep", "bath_prep"), ("repetitions", "repetitions"), ("strategy", "strategy")):
        if hasattr(args, flag):
            overrides[flag] = ("run", key, getattr(args, flag))
    if getattr(args, "budget", None) is not None:
        overrides["budget"] = ("vqt", "budget", args.budget)
    return apply_overrides(cfg, overrides)


def _freeze(cfg: RunConfig) -> RunConfig:
    """Fill derived values so the emitted config reproduces the run on its own."""
    values = {s: dict(v) for s, v in cfg.values.items()}
    spec = cfg.chain_spec()
    tau_q, tau_w = cfg.stroke_times(spec)
    values["chain"].update(omega_c=spec.omega_c, omega_h=spec.omega_h, g_c=spec.g_c, g_h=spec.g_h)
    values["strokes"].update(tau_q=tau_q, tau_w=tau_w, g_tau_q=None, g_tau_w=None)
    return RunConfig(values, cfg.source)


def _vqt_kwargs(cfg: RunConfig, bath: str) -> dict:
    v = cfg["vqt"]
    kw = {"budget": v["budget"], "tol": v["tol"], "rhobeg": v["rhobeg"], "init": v["init"]}
    if len(v["init"]) != 4:
        raise ConfigError("[vqt] init must hold 4 numbers (theta, phi1, phi2, phi3)", path=cfg.source)
    if v["evaluator"] == "shots":
        kw["evaluator"] = ShotEnergy(shots=v["shots"], seed=v["seed"] + (bath == "hot"))
    return kw


def _train(cfg: RunConfig, spec: ChainSpec) -> tuple[VqtResult, VqtResult]:
    cold = train_bath(spec.omega_c, spec.t_cold, **_vqt_kwargs(cfg, "cold"))
    hot = train_bath(spec.omega_h, spec.t_hot, **_vqt_kwargs(cfg, "hot"))
    return cold, hot


def _vqt_record(name: str, omega: float, temperature: float, res: VqtResult) -> dict:
    return {"bath": name, "omega": omega, "temperature": temperature, **res.to_dict()}


# ---------------------------------------------------------------- run


def cmd_run(args) -> int:
    cfg = _freeze(_resolved(args))
    spec = cfg.chain_spec()
    run = cfg["run"]
    out = Path(cfg["output"]["out_dir"])
    vqt_pair = _train(cfg, spec) if run["bath_prep"] == "vqt" else None
    ecfg = cfg.engine_config(vqt_pair)
    repetitions = run["repetitions"]
    if repetitions < 1:
        raise ConfigError("[run] repetitions must be >= 1", path=cfg.source)

    summary: dict = {"config": cfg.to_dict()}
    if ecfg.execution == "shots":
        ledgers = run_repetitions(ecfg, repetitions, jobs=args.jobs)
        ledger = mean_ledger(ledgers)
        traj, _ = run_cycles(replace(ecfg, execution="exact"))
        stats = summarize_repetitions(ledgers)
        _write(out / "points.csv", _rows_to_csv(stats.rows()))
        summary["repetitions"] = {
            "count": repetitions,
            "first_law_mean": stats.first_law_mean,
            "first_law_error": stats.first_law_error,
        }
    else:
        traj, ledger = run_cycles(ecfg)
    _require_finite(
        q_cold=ledger.column("q_cold"), q_hot=ledger.column("q_hot"), work=ledger.column("work")
    )

    report = detect_limit_cycle(traj, ledger, tol=run["limit_tol"])
    summary["limit_cycle"] = report.to_dict()
    if spec.n_sites == 2:
        predicted = classify_mode(spec)
        summary["predicted_mode"] = predicted.value
        summary["mode_matches"] = verify_mode(report, predicted) if report.reached else None
    if vqt_pair is not None:
        summary["vqt"] = [
            _vqt_record("cold", spec.omega_c, spec.t_cold, vqt_pair[0]),
            _vqt_record("hot", spec.omega_h, spec.t_hot, vqt_pair[1]),
        ]

    _write(out / "ledger.csv", ledger.to_csv())
    _write(out / "summary.json", _dump_json(summary))
    _write(out / "resolved.cfg", cfg.to_ini())
    if args.emit_circuits:
        steps = cfg["strokes"]
        _write(out / "heat_stroke.txt", dumps(build_heat_stroke_circuit(spec, ecfg.tau_q, steps["heat_steps"])))
        _write(out / "work_stroke.txt", dumps(build_work_stroke_circuit(spec, ecfg.tau_w, steps["work_steps"])))

    status = f"reached at cycle {report.cycle_index}" if report.reached else "not reached"
    print(
        f"limit cycle {status}: Q_C={report.q_cold_star:.6g} Q_H={report.q_hot_star:.6g} "
        f"W={report.work_star:.6g} mode={report.mode.value}"
    )
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------- vqt


def cmd_vqt(args) -> int:
    cfg = _resolved(args)
    spec = cfg.chain_spec()
    out = Path(cfg["output"]["out_dir"])
    cold, hot = _train(cfg, spec)
    records = [
        _vqt_record("cold", spec.omega_c, spec.t_cold, cold),
        _vqt_record("hot", spec.omega_h, spec.t_hot, hot),
    ]
    for rec in records:
        _require_finite(final_loss=rec["final_loss"])
    trace_rows = []
    n = max(len(cold.loss_trace), len(hot.loss_trace))
    for k in range(n):
        trace_rows.append(
            {
                "evaluation": k + 1,
                "cold": cold.loss_trace[k] if k < len(cold.loss_trace) else "",
                "hot": hot.loss_trace[k] if k < len(hot.loss_trace) else "",
            }
        )
    _write(out / "vqt.json", _dump_json({"config": _freeze(cfg).to_dict(), "records": records}))
    _write(out / "vqt_trace.csv", _rows_to_csv(trace_rows) or "evaluation,cold,hot\n")
    for rec in records:
        flag = "converged" if rec["converged"] else "not converged"
        print(
            f"{rec['bath']}: {flag} after {rec['iterations']} evaluations, "
            f"trace distance {rec['trace_distance_to_gibbs']:.3e}"
        )
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------- transpile


def _parse_edges(text: str) -> list[tuple[int, int]]:
    return SCHEMA["topology"]["edges"][0](text)


def cmd_transpile(args) -> int:
    cfg = load_config(args.config)
    topo_cfg = cfg["topology"]
    path = Path(args.circuit)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        circuit = loads(text)
    except CircuitParseError as exc:
        raise ConfigError(str(exc), path=str(path)) from None

    edges = _parse_edges(args.edges) if args.edges else topo_cfg["edges"]
    layout = [int(t) for t in args.layout.replace(",", " ").split()] if args.layout else topo_cfg["layout"]
    if edges is None:
        n = args.n_qubits or topo_cfg["n_qubits"] or circuit.width
        topo = Topology.line(n)
    else:
        n = args.n_qubits or topo_cfg["n_qubits"] or (1 + max((max(e) for e in edges), default=-1))
        topo = Topology(n, edges)
    result = transpile(circuit, topo, layout)
    distance = verify_equivalence(circuit, result.circuit, result.layout, result.initial_layout)
    _require_finite(distance=distance)

    out_dir = Path(args.out_dir or cfg["output"]["out_dir"])
    target = Path(args.out) if args.out else out_dir / f"{path.stem}.transpiled.txt"
    _write(target, dumps(result.circuit))
    report = {
        "input": str(path),
        "output": str(target),
        "n_qubits": topo.n_qubits,
        "edges": sorted(list(e) for e in topo.edges),
        "initial_layout": list(result.initial_layout),
        "final_layout": list(result.layout),
        "swap_count": result.swap_count,
        "gates_in": len(circuit.gates),
        "gates_out": len(result.circuit.gates),
        "two_qubit_gates": two_qubit_count(result.circuit),
        "distance": distance,
    }
    _write(target.with_suffix(".json"), _dump_json(report))
    print(f"swaps={result.swap_count} gates={len(result.circuit.gates)} distance={distance:.3e}")
    if distance > EQUIVALENCE_TOL:
        raise NumericalFailure(f"transpiled circuit differs from the input (distance {distance:.3e})")
    return EXIT_OK


# ---------------------------------------------------------------- modes


def _mode_cell(spec: ChainSpec, g_tau: float, n_cycles: int, tol: float, verify: bool) -> dict:
    predicted = classify_mode(spec)
    row = {
        "omega_ratio": spec.omegas[0] / spec.omegas[1],
        "temp_ratio": spec.t_cold / spec.t_hot,
        "omega1": spec.omegas[0],
        "omega2": spec.omegas[1],
        "t_cold": spec.t_cold,
        "t_hot": spec.t_hot,
        "predicted": predicted.value,
    }
    if verify:
        tau = g_tau / spec.g_work[0]
        traj, ledger = run_cycles(EngineConfig(spec, tau, tau, n_cycles=n_cycles))
        report = detect_limit_cycle(traj, ledger, tol=tol)
        row.update(
            observed=report.mode.value,
            reached=report.reached,
            q_cold=report.q_cold_star,
            q_hot=report.q_hot_star,
            work=report.work_star,
            match=verify_mode(report, predicted) if report.reached else False,
        )
    return row


REFERENCE_POINTS = (
    (0.75, 1.0, 0.4, 0.8),
    (0.5, 2.0, 1.0, 1.2),
    (2.0, 0.5, 1.0, 1.2),
)


def mode_specs(sweep: dict, reference_points: bool = False) -> list[ChainSpec]:
    if reference_points:
        return [ChainSpec.two_site(w1, w2, sweep["g"], tc, th) for w1, w2, tc, th in REFERENCE_POINTS]
    specs = []
    for r in sweep["omega_ratios"]:
        for t in sweep["temp_ratios"]:
            w2, th = sweep["omega2"], sweep["t_hot"]
            specs.append(ChainSpec.two_site(r * w2, w2, sweep["g"], t * th, th))
    return specs


def cmd_modes(args) -> int:
    cfg = load_config(args.config)
    sweep = cfg["sweep"]
    if args.g_tau is not None:
        sweep["g_tau"] = args.g_tau
    if args.cycles is not None:
        sweep["n_cycles"] = args.cycles
    if args.verify is not None:
        sweep["verify"] = args.verify
    if args.out_dir:
        cfg["output"]["out_dir"] = args.out_dir
    if sweep["n_cycles"] < 1:
        raise ConfigError("[sweep] n_cycles must be >= 1", path=cfg.source)
    if any(r <= 0 for r in sweep["omega_ratios"]) or any(not 0 < t <= 1 for t in sweep["temp_ratios"]):
        raise ConfigError("[sweep] ratios must be positive and temperature ratios at most 1", path=cfg.source)
    try:
        specs = mode_specs(sweep, args.reference_points)
    except ValueError as exc:
        raise ConfigError(f"[sweep] {exc}", path=cfg.source) from None

    cell_args = [(s, sweep["g_tau"], sweep["n_cycles"], sweep["tol"], sweep["verify"]) for s in specs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_mode_cell, *zip(*cell_args)))
    else:
        rows = [_mode_cell(*a) for a in cell_args]

    out = Path(cfg["output"]["out_dir"])
    _write(out / "modes.csv", _rows_to_csv(rows))
    mismatches = sum(1 for r in rows if sweep["verify"] and not r["match"])
    _write(
        out / "modes.json",
        _dump_json({"config": cfg.to_dict(), "cells": len(rows), "verified": sweep["verify"], "mismatches": mismatches}),
    )
    for r in rows:
        line = f"w1/w2={r['omega_ratio']:.4g} Tc/Th={r['temp_ratio']:.4g} predicted={r['predicted']}"
        if sweep["verify"]:
            line += f" observed={r['observed']} {'ok' if r['match'] else 'MISMATCH'}"
        print(line)
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twostroke", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the engine and write the cycle ledger")
    _common(p)
    p.add_argument("--bath-prep", choices=("exact_gibbs", "vqt"))
    p.add_argument("--strategy", choices=("mixed", "branches"))
    p.add_argument("--repetitions", type=int, help="shot-mode repetitions")
    p.add_argument("--emit-circuits", action="store_true", help="also write both stroke circuits")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("vqt", help="train both bath thermalizers")
    _common(p)
    p.add_argument("--budget", type=int, help="loss evaluations per bath")
    p.set_defaults(func=cmd_vqt)

    p = sub.add_parser("transpile", help="lower a circuit file onto a coupling graph")
    p.add_argument("circuit", help="circuit text file")
    p.add_argument("--config")
    p.add_argument("--edges", help="coupling edges, e.g. '0-1, 1-2, 2-3' (default: a line)")
    p.add_argument("--n-qubits", type=int)
    p.add_argument("--layout", help="initial logical-to-physical layout, e.g. '0,1,2,3'")
    p.add_argument("--out", help="output circuit path")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_transpile)

    p = sub.add_parser("modes", help="predicted (and simulated) operating-mode map")
    p.add_argument("--config")
    p.add_argument("--g-tau", type=float)
    p.add_argument("--cycles", type=int)
    p.add_argument("--verify", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--reference-points", action="store_true", help="the three reference parameter sets instead of the grid")
    p.add_argument("--out-dir")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_modes)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with np.errstate(over="raise", invalid="raise"):
            return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
