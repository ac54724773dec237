"""Command-line front end: train, run, check, sweep.

Exit codes: 0 success, 2 configuration problem, 3 failed verification
(certificate or run-level check), 4 diverged simulation.  Everything
printed for a run is also present in its CSV or summary file; the
console is a view, not a second source of truth.
"""

from __future__ import annotations

import argparse
import itertools
import math
import os
import shutil
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import dmp as dmp_mod
from .config import (
    Config,
    config_sha256,
    load_config,
    load_model_for,
    parse_config,
    resolve_config_path,
    to_scenario,
)
from .dmp import Demonstration, dmp_gain_certificate
from .errors import ConfigError
from .geometry import StateX, Twist
from .ibvs import estimate_region_bounds, gain_certificate, reference_from_goal
from .lyapunov import mlf_constants, ultimate_bound
from .recording import summarize, write_manifest, write_run_csv, write_summary
from .sim import run as run_scenario
from .switchctl import dwell_time

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK = 3
EXIT_DIVERGED = 4

OUT_ENV_VAR = "SWITCHED_SERVO_OUT"


def _out_dir(arg: str | None, stem: str) -> Path:
    if arg:
        return Path(arg)
    base = os.environ.get(OUT_ENV_VAR)
    return Path(base) / stem if base else Path("runs") / stem


def _fmt(x: float) -> str:
    return f"{x:.6g}"


# ---------------------------------------------------------------------------
# train


def _forcing_residual(model: dmp_mod.DmpModel, demo: Demonstration) -> float:
    """RMS gap between fitted forcing and its regression targets."""
    g = model.gains
    gamma, lam = g.gamma(), g.lam()
    t0 = demo.t[0]
    total = 0.0
    for k in range(demo.count):
        target = g.tau**2 * demo.xi_dot[k] + gamma @ demo.e_p[k] + g.tau * (lam @ demo.xi[k])
        z_p = dmp_mod.canonical(demo.t[k], t0, g.alpha_zp, g.tau)
        z_o = dmp_mod.canonical(demo.t[k], t0, g.alpha_zo, g.tau)
        pred = dmp_mod.forcing(model, z_p, z_o)
        total += float(np.sum((pred - target) ** 2))
    return math.sqrt(total / demo.count)


def reproduction_rmse(model: dmp_mod.DmpModel, demo: Demonstration) -> tuple[float, float]:
    """Positional RMSE of a rollout against the demonstration, absolute and
    as a fraction of the demonstrated path length."""
    x0 = StateX(demo.e_p[0], Twist.from_vector(demo.xi[0], "desired"))
    duration = float(demo.t[-1] - demo.t[0])
    dt = float(np.median(np.diff(demo.t)))
    times, states, _ = dmp_mod.rollout(model, x0, duration, dt)
    sim_p = np.array([s.e_p[:3] for s in states])
    demo_p = np.column_stack(
        [np.interp(times, demo.t - demo.t[0], demo.e_p[:, i]) for i in range(3)]
    )
    rmse = math.sqrt(float(np.mean(np.sum((sim_p - demo_p) ** 2, axis=1))))
    length = demo.path_length()
    return rmse, rmse / length if length > 0 else math.inf


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.demo_csv:
        demo = dmp_mod.load_demo_csv(args.demo_csv)
    else:
        demo = dmp_mod.minjerk_demo(
            config.start_pose, config.goal_pose, config.demo.duration, config.demo.rate
        )
    basis_p = dmp_mod.build_basis(config.n_basis_p, config.dmp_gains.alpha_zp)
    basis_o = dmp_mod.build_basis(config.n_basis_o, config.dmp_gains.alpha_zo)
    model = dmp_mod.learn_weights(demo, config.dmp_gains, basis_p, basis_o)
    out = Path(args.out) if args.out else config.model_path
    if out is None:
        raise ConfigError("no output path: pass --out or set dmp.model in the config")
    rmse, frac = reproduction_rmse(model, demo)
    out.parent.mkdir(parents=True, exist_ok=True)
    dmp_mod.save_model(model, out)
    print(f"model written: {out}")
    print(f"forcing residual (rms): {_fmt(_forcing_residual(model, demo))}")
    print(f"reproduction rmse: {_fmt(rmse)} m ({_fmt(100 * frac)}% of path length)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run


def _execute_run(config: Config, scenario_src: Path, out_dir: Path) -> int:
    scenario = to_scenario(config)
    result = run_scenario(scenario)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario_copy = out_dir / "scenario.yaml"
    if Path(scenario_src).resolve() != scenario_copy.resolve():
        shutil.copyfile(scenario_src, scenario_copy)
    summary = summarize(result, scenario.dt)
    summary["scenario"] = str(scenario_src)
    summary["config_sha256"] = config_sha256(str(scenario_src))
    summary["tool_version"] = __version__
    write_run_csv(out_dir / "run.csv", result.records)
    write_summary(out_dir / "summary.json", summary)
    write_manifest(
        out_dir / "manifest.json",
        scenario_path=scenario_src,
        scenario_copy=scenario_copy.name,
        model_path=config.model_path,
        out_dir=out_dir,
        tool_version=__version__,
        sha256=summary["config_sha256"],
    )
    print(f"wrote {out_dir}/run.csv ({summary['n_ticks']} ticks)")
    print(f"switches: {summary['n_switches']}")
    for sw in summary["switches"]:
        print(f"  {sw['t']:.4f} s  {sw['event']}")
    if summary["compensation"]:
        comp = summary["compensation"]
        print(f"compensation: t_c = {_fmt(comp['t_c'])} s at t = {_fmt(comp['t_switch'])} s")
    print(f"final |e_p| = {_fmt(summary['final']['e_p_norm'])}")
    if result.diverged:
        print("result: diverged")
        return EXIT_DIVERGED
    if summary["failed_checks"]:
        print(f"result: failed checks: {', '.join(summary['failed_checks'])}")
        return EXIT_CHECK
    print("result: ok (converged, dwell verified, envelopes passed)")
    return EXIT_OK


def cmd_run(args) -> int:
    config = load_config(args.config)
    src = resolve_config_path(args.config)
    return _execute_run(config, src, _out_dir(args.out, src.stem))


# ---------------------------------------------------------------------------
# check


def cmd_check(args) -> int:
    config = load_config(args.config)
    dmp_cert = dmp_gain_certificate(config.dmp_gains, config.sim.epsilon2)
    verdict = "pass" if dmp_cert.passed else "FAIL"
    damped = "yes" if dmp_cert.critically_damped else "no"
    print(f"dmp_certificate: {verdict} (lambda_d = {_fmt(dmp_cert.lambda_d)}, critically damped: {damped})")

    ref = reference_from_goal(config.marker, config.goal_pose, config.intrinsics)
    bounds = estimate_region_bounds(config.marker, config.goal_pose, config.intrinsics, ref)
    ibvs_cert = gain_certificate(config.ibvs_gains, bounds)
    tag = "pass" if ibvs_cert.passed else "flagged"
    print(f"ibvs_certificate: {tag} (lambda_v = {_fmt(ibvs_cert.lambda_v)}) [warning only]")

    consts = mlf_constants(
        config.dmp_gains,
        config.sim.epsilon2,
        config.marker,
        config.goal_pose,
        config.intrinsics,
        ref,
        config.epsilon1,
    )
    print(
        f"mlf_constants: mu = {_fmt(consts.mu)}, kappa_lo = {_fmt(consts.kappa_lo)}, "
        f"kappa_hi = {_fmt(consts.kappa_hi)}"
    )

    if config.check is not None:
        mu, beta_lo, eps = config.check.mu, config.check.beta_lo, config.check.eps
    else:
        # fall back on the estimated jump factor and the certified decay rate
        mu, beta_lo = consts.mu, dmp_cert.lambda_d
        eps = 0.01 * beta_lo
    tau_formula = dwell_time(mu, beta_lo, eps)
    print(f"dwell_time(mu = {_fmt(mu)}, beta_lo = {_fmt(beta_lo)}, eps = {_fmt(eps)}) = {_fmt(tau_formula)} s")
    tau_configured = config.switch_cfg.tau_a
    if abs(tau_configured - tau_formula) > 1e-3:
        print(
            f"note: scenario overrides tau_a = {_fmt(tau_configured)} s; the formula above "
            f"gives {_fmt(tau_formula)} s (documented discrepancy)"
        )
    else:
        print(f"tau_a = {_fmt(tau_configured)} s (matches formula)")

    if config.model_path is not None and config.model_path.is_file():
        model = load_model_for(config)
        bound = ultimate_bound(
            consts.kappa_hi, consts.kappa_lo, config.switch_cfg.n0, model.theta_bound(), eps
        )
        print(f"ultimate_bound = {_fmt(bound)} (forcing bound {_fmt(model.theta_bound())})")
    else:
        print("ultimate_bound: skipped (no trained model on disk)")

    if not dmp_cert.passed or not math.isfinite(tau_formula):
        return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def _parse_overrides(pairs: list[str]) -> list[tuple[str, list]]:
    overrides = []
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value[,value...], got {pair!r}")
        key, _, values = pair.partition("=")
        parsed = [yaml.safe_load(v) for v in values.split(",")]
        overrides.append((key.strip(), parsed))
    return overrides


def _apply_override(raw: dict, dotted: str, value) -> None:
    node = raw
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {dotted}: {part} is not a section")
    node[parts[-1]] = value


def cmd_sweep(args) -> int:
    src = resolve_config_path(args.config)
    raw = yaml.safe_load(src.read_text()) or {}
    overrides = _parse_overrides(args.set or [])
    if not overrides:
        raise ConfigError("sweep needs at least one --set key=value,value")
    keys = [k for k, _ in overrides]
    grid = list(itertools.product(*(vals for _, vals in overrides)))
    base_out = _out_dir(args.out, f"{src.stem}-sweep")
    worst = EXIT_OK
    rows = []
    for idx, combo in enumerate(grid):
        variant = yaml.safe_load(src.read_text()) or {}
        for key, value in zip(keys, combo):
            _apply_override(variant, key, value)
        config = parse_config(variant, src)
        run_dir = base_out / f"run_{idx:02d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        variant_path = run_dir / "scenario.yaml"
        variant_path.write_text(yaml.safe_dump(variant, sort_keys=False))
        print(f"[{idx}] {dict(zip(keys, combo))}")
        code = _execute_run(config, variant_path, run_dir)
        rows.append({"index": idx, "overrides": dict(zip(keys, combo)), "exit": code})
        worst = max(worst, code)
    write_summary(base_out / "sweep_summary.json", {"format": "sweep-summary", "version": 1, "runs": rows})
    print(f"sweep: {len(rows)} runs, worst exit {worst}")
    return worst


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switched-servo",
        description="Switched visual servoing with a learned movement-primitive fallback.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a movement-primitive model and write it to disk")
    p_train.add_argument("config", help="scenario file or bundled scenario name")
    p_train.add_argument("--demo-csv", help="demonstration CSV; default is the synthetic minimum-jerk demo")
    p_train.add_argument("--out", help="model output path; default is dmp.model from the config")
    p_train.set_defaults(func=cmd_train)

    p_run = sub.add_parser("run", help="simulate a scenario and write CSV, summary, and manifest")
    p_run.add_argument("config", help="scenario file or bundled scenario name")
    p_run.add_argument("--out", help=f"output directory (default runs/<name>, or ${OUT_ENV_VAR}/<name>)")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="evaluate gain certificates and dwell-time arithmetic")
    p_check.add_argument("config", help="scenario file or bundled scenario name")
    p_check.set_defaults(func=cmd_check)

    p_sweep = sub.add_parser("sweep", help="run a grid of config overrides")
    p_sweep.add_argument("config", help="scenario file or bundled scenario name")
    p_sweep.add_argument("--set", action="append", metavar="KEY=V1,V2", help="dotted key and value list")
    p_sweep.add_argument("--out", help="sweep output directory")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
