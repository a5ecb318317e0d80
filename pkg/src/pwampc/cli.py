"""Command-line front end: synthesis, simulation, comparison, table export,
friction identification.

Every command is deterministic: the same inputs produce byte-identical
outputs.  Exit codes: 0 success; nonzero codes per error family with a
machine-readable `error: <family>: <message>` line on stderr.
"""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import fileio, svg
from .errors import PwampcError, ValidationError
from .mpc import MpcConfig, export_explicit
from .plant import NonlinearFrictionPlant, PwaModel, identify_static_friction
from .sim import Scenario, build_controller, measure, resolve_plant, run
from .synthesis import certificates, design_controller

SCENARIO_OVERRIDES = {"duration", "Ts", "seed", "epsilon", "antiwindup"}
MPC_OVERRIDES = {"N", "Q", "R", "w_star", "gamma_range", "theta_max", "pid_gains"}


def _out_dir(args):
    out = args.out or os.environ.get("PWAMPC_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_model_arg(spec):
    if spec is None:
        raise ValidationError("--model is required")
    if Path(spec).exists():
        return fileio.load_model(spec)
    return resolve_plant(spec)


def _apply_overrides(scenario: Scenario, overrides):
    if not overrides:
        return scenario
    d = scenario.to_dict()
    for text in overrides:
        key, value = fileio.parse_override(text)
        if key in SCENARIO_OVERRIDES:
            d[key] = value
        elif key in MPC_OVERRIDES:
            d.setdefault("mpc", {})[key] = value
        else:
            raise ValidationError(f"unknown override key {key!r}")
    return Scenario.from_dict(d)


def _check_tuning(mpc: dict):
    """Type-check tuning overrides before any synthesis work starts."""
    if "N" in mpc and (int(mpc["N"]) != mpc["N"] or mpc["N"] < 1):
        raise ValidationError("N must be a positive integer")
    if "Q" in mpc:
        q = np.asarray(mpc["Q"], dtype=float)
        if q.ndim == 1 and q.size != 3 or q.ndim == 2 and q.shape != (3, 3):
            raise ValidationError("Q must be a 3-vector diagonal or 3x3 matrix")
    if "R" in mpc and not mpc["R"] > 0:
        raise ValidationError("R must be positive")
    if "gamma_range" in mpc:
        lo, hi = mpc["gamma_range"]
        if not (0 < lo < hi):
            raise ValidationError("gamma_range must satisfy 0 < lo < hi")


def cmd_design(args):
    model = _load_model_arg(args.model)
    if not isinstance(model, PwaModel):
        raise ValidationError("design requires a PWA model")
    tuning = {}
    for text in args.override or []:
        key, value = fileio.parse_override(text)
        if key not in MPC_OVERRIDES:
            raise ValidationError(f"unknown tuning key {key!r}")
        tuning[key] = value
    _check_tuning(tuning)
    kwargs = {}
    if "Q" in tuning:
        q = np.asarray(tuning["Q"], dtype=float)
        kwargs["Q"] = np.diag(q) if q.ndim == 1 else q
    for key in ("R", "w_star", "theta_max"):
        if key in tuning:
            kwargs[key] = tuning[key]
    if "gamma_range" in tuning:
        kwargs["gamma_range"] = tuple(tuning["gamma_range"])
    design = design_controller(model, robust=(args.kind == "mpc-robust"), **kwargs)
    certs = certificates(model, design)
    out = _out_dir(args)
    path = out / f"controller-{args.kind}.json"
    fileio.save_controller(model, design, path, certs)
    print(f"controller: {path}")
    print(f"gamma: {design.gamma:.6g}")
    print(f"spectral radius (outer loop): {certs['spectral_radius_mode1']:.6g}")
    print(f"spectral radius (low-speed loop): {certs['spectral_radius_mode2']:.6g}")
    print(f"decrease residual max: {max(certs['decrease_residual_max_mode1'], certs['decrease_residual_max_mode2']):.3e}")
    print(f"terminal set facets: {certs['terminal_set_rows']}")
    return 0


def _load_or_design(scenario, controller_path):
    """Controller artifact -> (model, design); the embedded model stays
    authoritative for prediction."""
    if controller_path:
        if scenario.controller == "pid":
            raise ValidationError("--controller is only meaningful for MPC scenarios")
        return fileio.load_controller(controller_path)
    return None, None


def cmd_simulate(args):
    if not args.scenario:
        raise ValidationError("--scenario is required")
    scenario = _apply_overrides(fileio.load_scenario(args.scenario), args.override)
    _check_tuning(scenario.mpc)
    ctrl_model, design = _load_or_design(scenario, args.controller)
    trace = run(scenario, design, ctrl_model)
    metrics = measure(trace)
    out = _out_dir(args)
    stem = scenario.name
    (out / f"{stem}.csv").write_text(trace.to_csv())
    fileio.save_metrics({scenario.name: metrics}, out / f"{stem}-metrics.json")
    plot = svg.tracking_plot(trace)
    (out / f"{stem}.svg").write_text(plot)
    print(f"trace: {out / (stem + '.csv')}")
    for key, value in metrics.to_dict().items():
        print(f"{key}: {value}")
    if "fault" in trace.meta:
        print(f"fault: {trace.meta['fault']}", file=sys.stderr)
        return 5
    return 0


def _compare_worker(payload):
    scenario_dict, controller = payload
    d = dict(scenario_dict)
    d["controller"] = controller
    d["name"] = f"{scenario_dict['name']}-{controller}"
    sc = Scenario.from_dict(d)
    trace = run(sc)
    return controller, trace, measure(trace)


def cmd_compare(args):
    if not args.scenario:
        raise ValidationError("--scenario is required")
    scenario = _apply_overrides(fileio.load_scenario(args.scenario), args.override)
    _check_tuning(scenario.mpc)
    controllers = args.controllers or [scenario.controller]
    payloads = [(scenario.to_dict(), c) for c in controllers]
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_compare_worker, payloads))
    else:
        results = [_compare_worker(p) for p in payloads]
    out = _out_dir(args)
    metrics = {c: m for c, _, m in results}
    fileio.save_metrics(metrics, out / f"{scenario.name}-compare.json")
    plot = svg.mismatch_plot([(c, tr) for c, tr, _ in results])
    (out / f"{scenario.name}-compare.svg").write_text(plot)
    header = f"{'controller':<12} {'overshoot':>10} {'rise':>8} {'sse':>10} {'osc':>10}"
    lines = [header, "-" * len(header)]
    for c, _, m in results:
        d = m.to_dict()
        fmt = lambda v: "nan" if v is None else f"{v:.5g}"
        lines.append(f"{c:<12} {fmt(d['overshoot_mm']):>10} {fmt(d['rise_time_s']):>8} "
                     f"{fmt(d['steady_state_error_mm']):>10} {fmt(d['oscillation_amplitude_mm']):>10}")
    table = "\n".join(lines)
    (out / f"{scenario.name}-compare.txt").write_text(table + "\n")
    print(table)
    return 0


def cmd_export_table(args):
    if not args.controller:
        raise ValidationError("--controller is required")
    model, design = fileio.load_controller(args.controller)
    cfg = MpcConfig(model=model, design=design)
    table = export_explicit(cfg)
    out = _out_dir(args)
    path = out / f"table-{design.kind}.json"
    fileio.save_table(table, path)
    by_source = {}
    for r in table.regions:
        by_source[r.source] = by_source.get(r.source, 0) + 1
    print(f"table: {path}")
    print(f"regions: {len(table.regions)} ({by_source})")
    print(f"seed coverage: {table.coverage:.4f}")
    print(f"online fallback: {table.fallback}")
    return 0


def cmd_identify(args):
    model = _load_model_arg(args.model or "nonlinear")
    if not isinstance(model, NonlinearFrictionPlant):
        raise ValidationError("identification runs against the nonlinear plant")
    amplitude = args.amplitude
    f_cp, f_cn = identify_static_friction(model, amplitude=amplitude, freq=args.freq)
    out = _out_dir(args)
    fileio.write_text(out / "identify.json", fileio.canonical_json(
        {"f_cp_est": f_cp, "f_cn_est": f_cn, "amplitude": amplitude, "freq": args.freq}))
    print(f"f_cp_est: {f_cp:.6g}")
    print(f"f_cn_est: {f_cn:.6g}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="pwampc",
                                description="Robust integral MPC for PWA friction plants")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--model")
        sp.add_argument("--scenario")
        sp.add_argument("--controller")
        sp.add_argument("--out")
        sp.add_argument("--override", action="append")
        sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("design", help="synthesize a controller artifact")
    common(sp)
    sp.add_argument("--kind", choices=("mpc-robust", "mpc-lqr"), default="mpc-robust")
    sp.set_defaults(func=cmd_design)

    sp = sub.add_parser("simulate", help="run one closed-loop scenario")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="run a scenario under several controllers")
    common(sp)
    sp.add_argument("--controllers", nargs="+")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("export-table", help="export the explicit lookup table")
    common(sp)
    sp.set_defaults(func=cmd_export_table)

    sp = sub.add_parser("identify", help="estimate static friction levels")
    common(sp)
    sp.add_argument("--amplitude", type=float, default=3.0)
    sp.add_argument("--freq", type=float, default=0.2)
    sp.set_defaults(func=cmd_identify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PwampcError as exc:
        print(f"error: {exc.family}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
