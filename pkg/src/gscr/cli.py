"""Command-line front end: ``gscr <subcommand> [options]``.

Exit codes: 0 ok, 2 configuration error, 3 infeasible (no certified gains
for some interval, or telemetry hitting a gap), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import Case, ConfigError, load_case
from .netmodel import NetworkError, OperatingCondition, grid_strength
from .scheduler import (HYSTERESIS, SchedulerError, Site, TelemetrySample, read_telemetry, replay,
                        write_decision_log)
from .sim import DT, HORIZON, Disturbance, SimulationError, simulate, simulate_with_schedule
from .sim import write_manifest
from .stability import (StabilityError, assemble_full_system, bounding_subsystems,
                        build_critical_subsystem, dominant_eigenvalues, subsystem_cgscr, verdict)
from .synthesis import GainSchedule, SynthesisError, synthesize_schedule
from .vecfit import FitError, fit_rational, load_frequency_scan

logger = logging.getLogger("gscr")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4


GLOBAL_DEFAULTS = {"config": None, "out": None, "seed": None, "format": "json", "verbose": False}


class Infeasible(Exception):
    pass


# -- output helpers ----------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy to builtins, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _flat(record: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in record.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flat(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = json.dumps(_clean(v))
        else:
            out[key] = v
    return out


def _emit(args, name: str, record: dict) -> Path:
    """Write the report in the chosen format and echo it to stdout."""
    out = Path(args.out)
    record = _clean(record)
    if args.format == "json":
        path = out / f"{name}.json"
        _dump_json(path, record)
        print(json.dumps(record, indent=2, sort_keys=True))
    else:
        path = out / f"{name}.csv"
        flat = _flat(record)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        for k in sorted(flat):
            w.writerow([k, _fmt(flat[k])])
        path.write_text(buf.getvalue())
        sys.stdout.write(buf.getvalue())
    return path


# -- helpers -------------------------------------------------------------------------------

def _case(args) -> Case:
    case = load_case(args.config)
    if getattr(args, "no_statcom", False):
        case = case.without_statcoms()
    return case


def _gains(args, case: Case):
    if getattr(args, "reference_gains", False):
        if case.statcom_params is None:
            raise ConfigError("--reference-gains needs STATCOMs in the case")
        return case.reference_gains()
    return None


def _parse_sweep(text: str) -> np.ndarray:
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise ConfigError(f"--sweep expects lo:hi:steps, got {text!r}") from None
    if steps < 2 or not 0 < lo < hi:
        raise ConfigError("--sweep needs 0 < lo < hi and at least 2 steps")
    return np.linspace(lo, hi, steps)


def _site(case: Case) -> Site:
    return Site(case.red, case.s_bs, case.s_b, case.grid_location)


def _telemetry(path: str, case: Case) -> list[TelemetrySample]:
    try:
        return read_telemetry(path, case.n, case.k)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"telemetry {path}: {exc}") from None


def _load_schedule(path: str) -> GainSchedule:
    try:
        return GainSchedule.from_json(Path(path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read schedule {path}: {exc}") from None


# -- subcommands ---------------------------------------------------------------------------

def cmd_gscr(args) -> int:
    case = _case(args)
    oc = case.operating_condition(args.power_scale)
    rep = grid_strength(case.red, oc, case.grid_location)
    record = {"case": case.name, "power_scale": args.power_scale, **rep.to_dict()}
    if args.sweep:
        rows = []
        for a in _parse_sweep(args.sweep):
            oc_a = case.operating_condition(float(a))
            r = grid_strength(case.red, oc_a, case.grid_location)
            full = dominant_eigenvalues(assemble_full_system(
                case.red, case.devices(), oc_a, case.tau, case.omega0))
            crit = dominant_eigenvalues(build_critical_subsystem(
                case.red, case.devices(), oc_a, case.tau, case.omega0).system())
            bounds = bounding_subsystems(case.red, case.devices(), oc_a, case.tau, case.omega0)
            dom_f, dom_c = full.dominant or complex("nan"), crit.dominant or complex("nan")
            rows.append([float(a), r.gscr, dom_f.real, dom_f.imag, full.damping_ratio,
                         dom_c.real, dom_c.imag, crit.damping_ratio,
                         bounds[0].damping_ratio, bounds[-1].damping_ratio])
        path = Path(args.out) / "gscr_sweep.csv"
        _write_rows(path, ["power_scale", "gscr", "full_re", "full_im", "full_zeta",
                           "crit_re", "crit_im", "crit_zeta", "zeta_bound_lo", "zeta_bound_hi"],
                    rows)
        record["sweep_file"] = str(path)
        record["sweep"] = [{"power_scale": r[0], "gscr": r[1]} for r in rows]
    _emit(args, "gscr", record)
    return EXIT_OK


def cmd_cgscr(args) -> int:
    case = _case(args)
    gains = _gains(args, case)
    oc = case.operating_condition(args.power_scale, args.iq)
    v = verdict(case.red, case.devices(), oc, case.tau, case.omega0, statcom_gains=gains)
    record = {"case": case.name, "power_scale": args.power_scale, "iq": args.iq,
              "no_statcom": bool(args.no_statcom), "reference_gains": bool(args.reference_gains),
              "cgscr": v.cgscr, "omega_c": v.omega_c, "gscr": v.gscr, "margin": v.margin,
              "stable": v.stable, "consistent": v.consistent, "max_real": v.max_real,
              "dominant": v.dominant, "damping_ratio": v.damping_ratio}
    if args.iq_sweep:
        if case.k == 0:
            raise ConfigError("--iq-sweep needs STATCOMs in the case")
        rows = []
        for q in np.linspace(-1.0, 1.0, args.iq_sweep):
            sub = build_critical_subsystem(case.red, case.devices(),
                                           case.operating_condition(args.power_scale, float(q)),
                                           case.tau, case.omega0, statcom_gains=gains)
            res = subsystem_cgscr(sub)
            rows.append([float(q), res.cgscr, res.omega_c])
        path = Path(args.out) / "cgscr_iq.csv"
        _write_rows(path, ["iq_sigma", "cgscr", "omega_c"], rows)
        record["iq_sweep_file"] = str(path)
    _emit(args, "cgscr", record)
    return EXIT_OK


def cmd_subsystems(args) -> int:
    case = _case(args)
    oc = case.operating_condition(args.power_scale, args.iq)
    subs = bounding_subsystems(case.red, case.devices(), oc, case.tau, case.omega0,
                               statcom_gains=_gains(args, case))
    items = []
    for s in subs:
        v = dominant_eigenvalues(s.system())
        items.append({"rank": s.rank, "ibr": s.index + 1, "node": case.net.ibr_nodes[s.index],
                      "damping_ratio": s.damping_ratio, "dominant": v.dominant,
                      "gscr": s.gscr})
    _emit(args, "subsystems", {"case": case.name, "power_scale": args.power_scale,
                               "subsystems": items})
    return EXIT_OK


def cmd_synthesize(args) -> int:
    case = _case(args)
    setup = case.synthesis_setup(seed=args.seed, objective_mode=args.objective)
    m = args.m or case.synthesis.m
    sched = synthesize_schedule(setup, m, verify=not args.no_verify,
                                progress=lambda msg: logger.info(msg))
    path = Path(args.out) / (args.output or f"schedule_m{m}.json")
    path.write_text(sched.to_json())
    n_ok = sched.feasible_count
    outcome = "full" if sched.complete else ("partial" if n_ok else "infeasible")
    summary = {"m": m, "outcome": outcome, "certified_intervals": n_ok, "schedule_file": str(path),
               "gscr": sched.gscr,
               "intervals": [{"lo": iv.lo, "hi": iv.hi, "status": iv.status,
                              "cgscr_max": iv.cgscr_max, **(iv.gains.to_dict() if iv.gains else {})}
                             for iv in sched.intervals]}
    _emit(args, f"synthesize_m{m}", summary)
    if outcome != "full":
        raise Infeasible(f"{outcome}: {n_ok}/{m} intervals certified")
    return EXIT_OK


def cmd_dispatch_replay(args) -> int:
    case = _case(args)
    sched = _load_schedule(args.schedule)
    samples = _telemetry(args.telemetry, case)
    path = Path(args.out) / "decisions.jsonl"
    try:
        decisions = replay(sched, _site(case), samples, args.hysteresis)
    except SchedulerError as exc:
        last = exc.last_safe.to_dict() if exc.last_safe else None
        _emit(args, "dispatch_error", {"error": str(exc), "sample_index": exc.sample_index,
                                       "last_safe": last})
        raise Infeasible(str(exc)) from None
    write_decision_log(path, decisions)
    _emit(args, "dispatch", {"decisions": len(decisions), "log_file": str(path),
                             "switches": sum(d.switched for d in decisions),
                             "intervals": [d.interval for d in decisions if d.switched]})
    return EXIT_OK


def cmd_simulate(args) -> int:
    case = _case(args)
    dist = Disturbance(start=args.dist_start, duration=args.dist_duration,
                       magnitude=args.dist_magnitude)
    inputs = {"case": case.name, "power_scale": args.power_scale, "iq": args.iq,
              "schedule": args.schedule, "telemetry": args.telemetry,
              "reference_gains": bool(args.reference_gains), "no_statcom": bool(args.no_statcom)}
    if args.schedule:
        sched = _load_schedule(args.schedule)
        if args.telemetry:
            samples = _telemetry(args.telemetry, case)
        else:
            oc = case.operating_condition(args.power_scale, args.iq)
            samples = [TelemetrySample.make(0.0, oc.p_e, oc.i_qs)]

        def factory(gains, sample):
            oc_s = OperatingCondition(sample.p_e, sample.i_qs, case.s_b, case.s_bs)
            return assemble_full_system(case.red, case.devices(), oc_s, case.tau, case.omega0,
                                        statcom_gains=gains)

        try:
            res = simulate_with_schedule(factory, sched, _site(case), samples, dist,
                                         args.horizon, args.dt, args.hysteresis)
        except SchedulerError as exc:
            raise Infeasible(str(exc)) from None
        eig_gains = None
    else:
        eig_gains = _gains(args, case)
        oc = case.operating_condition(args.power_scale, args.iq)
        sys_ = assemble_full_system(case.red, case.devices(), oc, case.tau, case.omega0,
                                    statcom_gains=eig_gains)
        res = simulate(sys_, dist, args.horizon, args.dt)
        v = dominant_eigenvalues(sys_)
        inputs["eigen_stable"] = v.stable
        inputs["eigen_max_real"] = v.max_real
    stem = args.output or "simulation"
    trace = Path(args.out) / f"{stem}.csv"
    res.to_csv(trace)
    write_manifest(Path(args.out) / f"{stem}_manifest.json", res, _clean(inputs), dist,
                   args.dt, args.horizon)
    _emit(args, f"{stem}_summary", {"trace_file": str(trace), **res.summary(),
                                    **{k: inputs[k] for k in inputs if k.startswith("eigen")}})
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        samples = load_frequency_scan(args.scan)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"frequency scan {args.scan}: {exc}") from None
    try:
        model = fit_rational(samples, args.order, tol=args.tol)
    except FitError as exc:
        _emit(args, "fit_error", {"error": str(exc), "max_rel_error": exc.error})
        raise
    r = model.realization
    _emit(args, "fit", {"order": args.order, "max_rel_error": model.meta["max_rel_error"],
                        "poles": model.meta["poles"], "shunt_c": model.shunt_c,
                        "a": r.a, "b": r.b, "c": r.c, "d": r.d})
    return EXIT_OK


# -- parser --------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS so a flag given before the subcommand is not reset by the subparser
    sup = argparse.SUPPRESS
    common.add_argument("--config", default=sup,
                        help="case file (default: bundled IEEE-39 case)")
    common.add_argument("--out", default=sup,
                        help="output directory (default: the case's outputs.dir)")
    common.add_argument("--seed", type=int, default=sup,
                        help="random seed for synthesis multi-start")
    common.add_argument("--format", choices=("json", "csv"), default=sup)
    common.add_argument("-v", "--verbose", action="store_true", default=sup)

    p = argparse.ArgumentParser(prog="gscr", description=__doc__.splitlines()[0],
                                parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.set_defaults(func=func)
        return sp

    def op_args(sp):
        sp.add_argument("--power-scale", type=float, default=1.0,
                        help="uniform factor on every IBR's active power")
        sp.add_argument("--iq", type=float, help="reactive current applied to every STATCOM")
        sp.add_argument("--reference-gains", action="store_true",
                        help="use the case's reference STATCOM PLL gains")
        sp.add_argument("--no-statcom", action="store_true", help="drop all STATCOMs")

    sp = add("gscr", cmd_gscr, "grid strength at the operating condition")
    sp.add_argument("--power-scale", type=float, default=1.0)
    sp.add_argument("--sweep", help="lo:hi:steps sweep of the power scaling factor")

    sp = add("cgscr", cmd_cgscr, "critical gSCR and stability verdict")
    op_args(sp)
    sp.add_argument("--iq-sweep", type=int, metavar="N", help="CgSCR over N IqΣ values in [-1, 1]")

    sp = add("subsystems", cmd_subsystems, "bounding subsystems ranked by damping")
    op_args(sp)

    sp = add("synthesize", cmd_synthesize, "offline gain-schedule synthesis")
    sp.add_argument("--m", type=int, help="number of IqΣ intervals")
    sp.add_argument("--objective", choices=("hinf", "abscissa"))
    sp.add_argument("--no-verify", action="store_true", help="skip the CgSCR verification sweep")
    sp.add_argument("--output", help="schedule file name inside --out")

    sp = add("dispatch-replay", cmd_dispatch_replay, "replay telemetry through the scheduler")
    sp.add_argument("--schedule", required=True)
    sp.add_argument("--telemetry", required=True)
    sp.add_argument("--hysteresis", type=float, default=HYSTERESIS)

    sp = add("simulate", cmd_simulate, "linear disturbance simulation")
    op_args(sp)
    sp.add_argument("--schedule", help="gain schedule JSON")
    sp.add_argument("--telemetry", help="telemetry CSV (with --schedule)")
    sp.add_argument("--hysteresis", type=float, default=HYSTERESIS)
    sp.add_argument("--dt", type=float, default=DT)
    sp.add_argument("--horizon", type=float, default=HORIZON)
    sp.add_argument("--dist-start", type=float, default=1.0)
    sp.add_argument("--dist-duration", type=float, default=0.05)
    sp.add_argument("--dist-magnitude", type=float, default=0.05)
    sp.add_argument("--output", help="trace file stem inside --out")

    sp = add("fit", cmd_fit, "rational fit of a frequency scan")
    sp.add_argument("--scan", required=True, help="CSV: omega_rad_s, re_Y11, im_Y11, ...")
    sp.add_argument("--order", type=int, required=True)
    sp.add_argument("--tol", type=float, default=1e-4)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.out is None:
            args.out = load_case(args.config).output_dir
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except (ConfigError, NetworkError) as exc:
        print(f"gscr: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(f"gscr: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (StabilityError, SimulationError, SynthesisError, FitError, np.linalg.LinAlgError,
            ValueError) as exc:
        print(f"gscr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
