"""Command line interface: design, analyze, simulate, curves.

Configs come in as JSON, tabular results go out as CSV, reports as JSON.
Exit codes: 0 success, 2 input/config error, 3 data or estimation error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import planning, trial_sim
from .boundary import (
    LookSchedule,
    SpendingFunction,
    custom_table,
    obrien_fleming_type,
    pocock_type,
    solve_boundary,
)
from .nb_model import NbParams, TrialData, ZeroEventsError
from .planning import DesignSpec, exposure_pattern_from_json
from .trial_sim import InterimAnalyzer, SimConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


class ConfigError(Exception):
    """Invalid configuration; the message carries the offending field path."""


# ---------------------------------------------------------------------------
# config parsing


def _load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found")
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON at line {err.lineno}, column {err.colno}")


def _field(obj: dict, name: str, kind, where: str, required: bool = True, default=None):
    if name not in obj:
        if required:
            raise ConfigError(f"{where}.{name}: missing required field")
        return default
    value = obj[name]
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{name}: expected {kind.__name__}, got {value!r}")


def parse_spending(value, alpha: float, where: str) -> SpendingFunction:
    if isinstance(value, str):
        name = value.lower()
        if name in ("pocock", "pocock_type"):
            return pocock_type(alpha)
        if name in ("obf", "obrien_fleming", "obrien_fleming_type"):
            return obrien_fleming_type(alpha)
        if name.startswith("custom:"):
            return _spending_custom_path(value, alpha)
        raise ConfigError(f"{where}: unknown spending kind {value!r}")
    if isinstance(value, dict) and value.get("kind") == "custom_table":
        try:
            return custom_table(alpha, [(p[0], p[1]) for p in value["table"]])
        except (KeyError, IndexError, TypeError, ValueError) as err:
            raise ConfigError(f"{where}.table: {err}")
    raise ConfigError(f"{where}: expected a spending name or custom_table object")


def parse_design_spec(obj: dict, where: str = "design", spending_override: str | None = None) -> DesignSpec:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    alpha = _field(obj, "alpha", float, where)
    spending_value = spending_override if spending_override else obj.get("spending")
    if spending_value is None:
        raise ConfigError(f"{where}.spending: missing required field")
    fractions = obj.get("fractions")
    if fractions is None:
        k = _field(obj, "looks", int, where)
        fractions = [(i + 1) / k for i in range(k)]
    try:
        exposure = exposure_pattern_from_json(obj["exposure"])
    except KeyError:
        raise ConfigError(f"{where}.exposure: missing required field")
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}.exposure: {err}")
    try:
        return DesignSpec(
            alpha=alpha,
            delta=_field(obj, "delta", float, where, required=False, default=1.0),
            fractions=tuple(float(w) for w in fractions),
            spending=parse_spending(spending_value, alpha, f"{where}.spending"),
            exposure=exposure,
            power=_field(obj, "power", float, where, required=False),
            theta_star=_field(obj, "theta_star", float, where, required=False),
            mu2=_field(obj, "mu2", float, where, required=False),
            phi=_field(obj, "phi", float, where, required=False),
            ratio=_field(obj, "ratio", float, where, required=False, default=1.0),
        )
    except ValueError as err:
        raise ConfigError(f"{where}: {err}")


def _spending_custom_path(value: str, alpha: float) -> SpendingFunction:
    # --spending custom:<path> loads interpolation points from a JSON file
    table = _load_json(value.split(":", 1)[1])
    try:
        return custom_table(alpha, [(p[0], p[1]) for p in table])
    except (TypeError, IndexError, ValueError) as err:
        raise ConfigError(f"custom spending table: {err}")


# ---------------------------------------------------------------------------
# subcommands


def _write_output(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def design_report(spec: DesignSpec) -> dict:
    i_req = planning.max_information(spec)
    size = planning.sample_size(spec, i_req)
    i_fix = planning.fixed_design_information(spec.alpha, spec.power, spec.theta_star, spec.delta)
    i_max = size.achieved_information
    bound = solve_boundary(
        spec.spending, LookSchedule(tuple(w * i_max for w in spec.fractions), i_max)
    )
    times = [
        planning.calendar_time_for_information(spec, size.n1, size.n2, w, i_max=i_max)
        for w in spec.fractions
    ]
    return {
        "alpha": spec.alpha,
        "delta": spec.delta,
        "power": spec.power,
        "theta_star": spec.theta_star,
        "i_fix": i_fix,
        "i_max_required": i_req,
        "i_max": i_max,
        "n1": size.n1,
        "n2": size.n2,
        "boundary": bound.to_json(),
        "look_calendar_times": times,
    }


def cmd_design(args) -> int:
    spec = parse_design_spec(_load_json(args.spec), "design", args.spending)
    if spec.power is None or spec.theta_star is None or spec.mu2 is None or spec.phi is None:
        raise ConfigError("design: planning requires power, theta_star, mu2, phi")
    report = design_report(spec)
    _write_output(json.dumps(report, indent=2) + "\n", args.out)
    return EXIT_OK


def _analysis_context(obj: dict, spending_override):
    """Accept either a design spec or a design report (which embeds i_max)."""
    if "boundary" in obj and "i_max" in obj:
        bound = obj["boundary"]
        alpha = _field(obj, "alpha", float, "report")
        spending = parse_spending(
            spending_override or bound.get("spending"), alpha, "report.boundary.spending"
        )
        n_looks = len(bound.get("fractions", []))
        if n_looks < 1:
            raise ConfigError("report.boundary.fractions: at least one look required")
        return spending, float(obj["i_max"]), n_looks, _field(obj, "delta", float, "report", required=False, default=1.0)
    spec = parse_design_spec(obj, "design", spending_override)
    i_max = planning.sample_size(spec, planning.max_information(spec)).achieved_information
    return spec.spending, i_max, spec.n_looks, spec.delta


def cmd_analyze(args) -> int:
    spending, i_max, n_looks, delta = _analysis_context(_load_json(args.spec), args.spending)
    if not args.data:
        raise ConfigError("analyze: at least one --data CSV is required")
    if len(args.data) > n_looks:
        raise ConfigError(f"analyze: {len(args.data)} data files exceed the {n_looks} planned looks")
    method = "modified_small_sample" if args.small_sample else "standard_wald"
    analyzer = InterimAnalyzer(
        spending=spending, i_max=i_max, n_looks=n_looks, delta=delta, method=method
    )
    looks = []
    stopped = None
    for path in args.data:
        try:
            data = TrialData.from_csv(path)
        except (OSError, ValueError) as err:
            raise ConfigError(f"{path}: {err}")
        try:
            result = analyzer.analyze(data)
        except ZeroEventsError as err:
            print(f"error: {path}: {err}", file=sys.stderr)
            return EXIT_DATA
        entry = result.to_json()
        entry["data"] = str(path)
        if result.error is not None:
            entry["note"] = "no test performed"
        looks.append(entry)
        if result.reject and stopped is None:
            stopped = result.look
    report = {
        "method": method,
        "i_max": i_max,
        "delta": delta,
        "looks": looks,
        "reject": stopped is not None,
        "stop_look": stopped,
    }
    _write_output(json.dumps(report, indent=2) + "\n", args.out)
    return EXIT_OK


def parse_scenario(obj: dict, where: str, seed_override=None, method_override=None) -> SimConfig:
    design = parse_design_spec(obj.get("design", {}), f"{where}.design")
    n1 = _field(obj, "n1", int, where, required=False)
    n2 = _field(obj, "n2", int, where, required=False)
    i_max = _field(obj, "i_max", float, where, required=False)
    if n1 is None:
        try:
            size = planning.sample_size(design, planning.max_information(design))
        except ValueError as err:
            raise ConfigError(f"{where}: n1 missing and planning failed: {err}")
        n1, n2 = size.n1, size.n2
        if i_max is None:
            i_max = size.achieved_information
    if n2 is None:
        n2 = int(math.ceil(design.ratio * n1))
    truth_obj = obj.get("truth")
    if truth_obj is None:
        truth = design.params
    else:
        truth = NbParams(
            _field(truth_obj, "mu1", float, f"{where}.truth"),
            _field(truth_obj, "mu2", float, f"{where}.truth"),
            _field(truth_obj, "phi", float, f"{where}.truth"),
            design.ratio,
        )
    method = method_override or obj.get("method", "standard_wald")
    if method not in trial_sim.METHODS:
        raise ConfigError(f"{where}.method: unknown method {method!r}")
    try:
        return SimConfig(
            design=design,
            truth=truth,
            n1=n1,
            n2=n2,
            reps=_field(obj, "reps", int, where),
            seed=seed_override if seed_override is not None else _field(obj, "seed", int, where, required=False, default=0),
            method=method,
            i_max=i_max,
            scenario_id=str(obj.get("scenario_id", "scenario")),
        )
    except ValueError as err:
        raise ConfigError(f"{where}: {err}")


def cmd_simulate(args) -> int:
    obj = _load_json(args.spec)
    raw = obj["scenarios"] if isinstance(obj, dict) and "scenarios" in obj else obj
    if isinstance(raw, dict):
        raw = [raw]
    if not isinstance(raw, list) or not raw:
        raise ConfigError("simulate: expected a scenario object or non-empty list")
    method = "modified_small_sample" if args.small_sample else None
    configs = [
        parse_scenario(item, f"scenarios[{i}]", args.seed, method)
        for i, item in enumerate(raw)
    ]
    lines = [trial_sim.OperatingCharacteristics.CSV_HEADER]
    dump_rows = []
    for config in configs:
        oc = trial_sim.operating_characteristics(config, workers=args.threads)
        lines.append(oc.to_csv_row(config.scenario_id))
        if args.dump_reps:
            resolved = config.resolved()
            for rep in range(resolved.reps):
                out = trial_sim.run_replication(resolved, trial_sim._rep_rng(resolved.seed, rep))
                dump_rows.append(
                    f"{config.scenario_id},{rep},{out.stop_look if out.stop_look else ''},"
                    f"{int(out.rejected)},{out.info_used:.6f},{out.n_recruited},{out.duration:.6f}"
                )
    _write_output("\n".join(lines) + "\n", args.out)
    if args.dump_reps:
        header = "scenario_id,rep,stop_look,rejected,info,n_recruited,duration"
        Path(args.dump_reps).write_text("\n".join([header] + dump_rows) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_curves(args) -> int:
    obj = _load_json(args.spec)
    spec = parse_design_spec(obj, "design", args.spending)
    if args.step is None or args.step <= 0:
        raise ConfigError("curves: --step must be a positive number of years")
    n1 = _field(obj, "n1", int, "design", required=False)
    n2 = _field(obj, "n2", int, "design", required=False)
    if n1 is None:
        size = planning.sample_size(spec, planning.max_information(spec))
        n1, n2 = size.n1, size.n2
    if n2 is None:
        n2 = int(math.ceil(spec.ratio * n1))
    end = spec.exposure.study_end
    taus = np.arange(0.0, end + args.step / 2, args.step)
    if taus[-1] < end:
        taus = np.append(taus, end)
    curves = planning.calendar_curves(spec, n1, n2, taus)
    import io

    buf = io.StringIO()
    curves.write_csv(buf)
    _write_output(buf.getvalue(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gsnb",
        description="Group sequential designs for negative binomial outcomes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", required=True, help="input JSON file")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--spending", help="override spending: pocock|obf|custom:<path>")

    p = sub.add_parser("design", parents=[common], help="solve information, sample size, boundary")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("analyze", parents=[common], help="run interim analyses on data CSVs")
    p.add_argument("--data", nargs="+", required=True, help="cumulative per-look CSV snapshots")
    p.add_argument("--small-sample", action="store_true", help="use the small-sample modified test")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo operating characteristics")
    p.add_argument("--seed", type=int, help="override the root seed")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--small-sample", action="store_true", help="force the small-sample method")
    p.add_argument("--dump-reps", help="also write per-replication outcomes to this CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("curves", parents=[common], help="calendar-time proportion curves")
    p.add_argument("--step", type=float, required=True, help="grid step in years")
    p.set_defaults(func=cmd_curves)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ZeroEventsError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
