# cli.py - command-line entry point: simulate, steady, analyze

from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple
import argparse
import json
import logging
import math
import os
import sys
import uuid

import numpy as np
from pydantic import BaseModel

import database
from analysis import DiagnosticsRecord, fit_decay_rate
from config import LOG_LEVEL, OUTPUT_DIR, VERSION, SimConfig, load_config
from errors import ConfigError, ContractError, EHDError, RunAborted
from functionals import csiszar_kullback, h_functional, report
from sim import SimState, init_state, run
from snapshots import (
    DiagnosticsWriter,
    load_checkpoint,
    read_diagnostics,
    save_checkpoint,
    snapshot_fields,
    write_snapshot,
)
from steady import SteadyState, boltzmann_ratios, solve_steady, theorem_constant

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


class RunManifest(BaseModel):
    run_id: str
    command: str
    version: str = VERSION
    config: Dict[str, Any] = {}
    started_at: str
    finished_at: Optional[str] = None
    outputs: Dict[str, str] = {}
    status: str = "running"
    summary: Dict[str, Any] = {}
    error: Optional[Dict[str, Any]] = None


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, RunAborted):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_SOLVER


def error_record(exc: BaseException) -> Dict[str, Any]:
    if isinstance(exc, EHDError):
        return exc.to_record()
    return {"status": "error", "kind": "io", "message": str(exc)}


def _now() -> str:
    return datetime.utcnow().isoformat()


def _write_json(path: str, payload: Dict[str, Any]) -> None:
    with open(path, 'w') as fh:
        json.dump(payload, fh, indent=2, default=str)
        fh.write("\n")


def _prepare_out_dir(out_dir: Optional[str], run_id: str) -> str:
    out_dir = out_dir or os.path.join(OUTPUT_DIR, run_id)
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _fail(manifest: RunManifest, out_dir: Optional[str], exc: BaseException) -> int:
    """Write the error record (and the manifest when an output directory exists)."""
    record = error_record(exc)
    manifest.status = "failed"
    manifest.error = record
    manifest.finished_at = _now()
    print(json.dumps(record, default=str), file=sys.stderr)
    if out_dir is not None:
        try:
            error_path = os.path.join(out_dir, "error.json")
            _write_json(error_path, record)
            manifest.outputs["error"] = error_path
            _finish(manifest, out_dir)
        except OSError as e:
            logger.error(f"Could not write error record: {e}")
    return exit_code(exc)


def _finish(manifest: RunManifest, out_dir: str) -> None:
    manifest_path = os.path.join(out_dir, "manifest.json")
    manifest.outputs["manifest"] = manifest_path
    _write_json(manifest_path, manifest.model_dump())
    database.record_run(manifest.model_dump())


def _write_state_snapshots(state: SimState, out_dir: str, suffix: str, outputs: Dict[str, str]) -> None:
    for name, field in snapshot_fields(state).items():
        path = os.path.join(out_dir, f"{name}_{suffix}.ehd2")
        write_snapshot(path, name, field, state.t)
        outputs[f"{name}_{suffix}"] = path


def _run_summary(state: SimState, records: List[DiagnosticsRecord], steady: SteadyState,
                 config: SimConfig) -> Dict[str, Any]:
    summary: Dict[str, Any] = {
        'steps': state.step,
        'final_time': state.t,
        'records': len(records),
        'k_initial': records[0].k_total if records else None,
        'k_final': records[-1].k_total if records else None,
        'dist_sq_final': records[-1].dist_sq if records else None,
    }
    try:
        summary['h_final'] = h_functional(state, config.poisson_tol)
        summary['functionals'] = report(state, steady, config.theta, config.half_potential).as_dict()
        summary['csiszar_kullback'] = csiszar_kullback(state, steady)
        g, h = boltzmann_ratios(state.charges.v, state.charges.w, steady)
        summary['boltzmann_ratio_deviation'] = {
            'v': float(np.max(np.abs(g.values - 1.0))),
            'w': float(np.max(np.abs(h.values - 1.0))),
        }
        finite = [r.lyapunov for r in records if math.isfinite(r.lyapunov)]
        if finite:
            summary['envelope_constant'] = theorem_constant(steady, max(finite))
    except EHDError as e:
        logger.warning(f"Final functionals undefined: {e}")
    return summary


def cmd_simulate(config_path: str, out_dir: Optional[str] = None, resume: Optional[str] = None) -> int:
    run_id = str(uuid.uuid4())
    manifest = RunManifest(run_id=run_id, command="simulate", started_at=_now())
    try:
        config = load_config(config_path)
    except (ConfigError, OSError) as e:
        logger.error(f"Could not load config {config_path}: {e}")
        return _fail(manifest, None, e)
    manifest.config = config.model_dump()

    try:
        out_dir = _prepare_out_dir(out_dir, run_id)
    except OSError as e:
        return _fail(manifest, None, e)

    try:
        if resume:
            state = load_checkpoint(resume)
            if state.grid != config.grid:
                raise ConfigError(f"checkpoint grid {state.grid.shape} does not match the config", key='nx')
            manifest.outputs["resumed_from"] = resume
        else:
            state = init_state(config)
        _write_state_snapshots(state, out_dir, "initial", manifest.outputs)
        steady = solve_steady(state.grid, state.mu_v, state.mu_w, tol=config.steady_tol)
    except (EHDError, OSError) as e:
        return _fail(manifest, out_dir, e)

    diagnostics_path = os.path.join(out_dir, "diagnostics.csv")
    try:
        with DiagnosticsWriter(diagnostics_path) as writer:
            manifest.outputs["diagnostics"] = diagnostics_path
            final, records = run(config, state=state, steady=steady, sink=writer.write, resumed=bool(resume))
    except RunAborted as e:
        manifest.summary = {'records': len(e.records), 'failed_step': e.step}
        return _fail(manifest, out_dir, e)
    except OSError as e:
        return _fail(manifest, out_dir, e)

    try:
        _write_state_snapshots(final, out_dir, "final", manifest.outputs)
        checkpoint_path = os.path.join(out_dir, "checkpoint.npz")
        save_checkpoint(checkpoint_path, final)
        manifest.outputs["checkpoint"] = checkpoint_path
    except OSError as e:
        return _fail(manifest, out_dir, e)

    manifest.summary = _run_summary(final, records, steady, config)
    manifest.status = "completed"
    manifest.finished_at = _now()
    try:
        _finish(manifest, out_dir)
    except OSError as e:
        logger.error(f"Could not write manifest: {e}")
        return EXIT_IO
    logger.info(f"Run {run_id} completed: {final.step} steps, outputs in {out_dir}")
    return EXIT_OK


def cmd_steady(config_path: str, out_dir: Optional[str] = None) -> int:
    run_id = str(uuid.uuid4())
    manifest = RunManifest(run_id=run_id, command="steady", started_at=_now())
    try:
        config = load_config(config_path)
    except (ConfigError, OSError) as e:
        return _fail(manifest, None, e)
    manifest.config = config.model_dump()

    try:
        out_dir = _prepare_out_dir(out_dir, run_id)
    except OSError as e:
        return _fail(manifest, None, e)

    try:
        state = init_state(config)
        steady = solve_steady(state.grid, state.mu_v, state.mu_w, tol=config.steady_tol)
        for name, field in (('Phi', steady.phi), ('V', steady.v), ('W', steady.w)):
            path = os.path.join(out_dir, f"{name}.ehd2")
            write_snapshot(path, name, field, 0.0)
            manifest.outputs[name] = path
        summary = steady.summary()
        summary_path = os.path.join(out_dir, "steady_summary.json")
        _write_json(summary_path, summary)
        manifest.outputs["summary"] = summary_path
    except (EHDError, OSError) as e:
        return _fail(manifest, out_dir, e)

    manifest.summary = summary
    manifest.status = "completed"
    manifest.finished_at = _now()
    try:
        _finish(manifest, out_dir)
    except OSError as e:
        logger.error(f"Could not write manifest: {e}")
        return EXIT_IO
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def format_report(fit: Dict[str, Any], column: str) -> str:
    lines = [f"column = {column}"]
    for key, value in fit.items():
        lines.append(f"{key} = {value if isinstance(value, int) else format(value, '.17g')}")
    return "\n".join(lines) + "\n"


def cmd_analyze(diagnostics_path: str, column: str = 'dist_sq', window: Optional[Tuple[float, float]] = None,
                out_path: Optional[str] = None) -> int:
    if column not in DiagnosticsRecord.field_names() or column in ('step', 't'):
        e = ConfigError(f"unknown diagnostics column {column!r}", key='column')
        print(json.dumps(e.to_record()), file=sys.stderr)
        return EXIT_CONFIG
    try:
        series = read_diagnostics(diagnostics_path)
    except (OSError, ContractError, ValueError) as e:
        logger.error(f"Could not read diagnostics {diagnostics_path}: {e}")
        print(json.dumps({"status": "error", "kind": "io", "message": str(e)}), file=sys.stderr)
        return EXIT_IO

    try:
        fit = fit_decay_rate(series, column, window)
    except EHDError as e:
        print(json.dumps(e.to_record()), file=sys.stderr)
        return exit_code(e)

    report = format_report(fit.as_dict(), column)
    print(report, end="")
    out_path = out_path or os.path.join(os.path.dirname(os.path.abspath(diagnostics_path)), f"decay_fit_{column}.txt")
    try:
        with open(out_path, 'w') as fh:
            fh.write(report)
    except OSError as e:
        logger.error(f"Could not write report: {e}")
        return EXIT_IO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ehd", description="Electro-hydrodynamics simulator on a staggered grid")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="run a simulation from a config file")
    simulate.add_argument("config")
    simulate.add_argument("--out", dest="out_dir", default=None)
    simulate.add_argument("--resume", default=None, help="checkpoint .npz to continue from")

    steady = sub.add_parser("steady", help="solve the Boltzmann steady state for a config's masses")
    steady.add_argument("config")
    steady.add_argument("--out", dest="out_dir", default=None)

    analyze = sub.add_parser("analyze", help="fit an exponential decay rate to a diagnostics column")
    analyze.add_argument("diagnostics")
    analyze.add_argument("--column", default="dist_sq")
    analyze.add_argument("--window", nargs=2, type=float, metavar=("T_START", "T_END"), default=None)
    analyze.add_argument("--out", dest="out_path", default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=getattr(logging, LOG_LEVEL, logging.INFO))
    args = build_parser().parse_args(argv)
    database.init_db()
    if args.command == "simulate":
        return cmd_simulate(args.config, args.out_dir, args.resume)
    if args.command == "steady":
        return cmd_steady(args.config, args.out_dir)
    window = tuple(args.window) if args.window else None
    return cmd_analyze(args.diagnostics, args.column, window, args.out_path)


if __name__ == "__main__":
    sys.exit(main())
