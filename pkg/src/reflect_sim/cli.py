"""Command-line entry point: ``reflect-sim <subcommand> [options]``.

Exit status is 0 on success, 2 when a study or check fails, 1 on usage or
configuration errors.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import harness
from .bounds import BoundInputs, local_time_bound_AB, local_time_bound_convex
from .errors import ConfigurationError, ReflectSimError, SubstepTooCoarseError
from .geometry import (TruncatedDomain, certify_condition_A, certify_condition_B, choose_delta,
                       cone_certificate, domain_from_dict)
from .paths import SampledPath, TimeGrid, sample_brownian
from .sde import solve_euler, solve_wong_zakai
from .skorokhod import SkorohodSolution, solve_discrete, verify

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


def _dumps(obj) -> str:
    # json uses repr for floats, the shortest string that round-trips exactly
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``key=value`` overrides; dotted keys reach into nested sections."""
    cfg = json.loads(json.dumps(cfg))
    for item in overrides or []:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.split(".")
        node = cfg
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise UsageError(f"override {key!r} does not address a config section")
            node = node[p]
        node[parts[-1]] = _parse_value(value)
    return cfg


def load_config(args) -> dict:
    if not args.config:
        raise UsageError("--config is required for this subcommand")
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file {path} not found")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    cfg = apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if cfg.get("version") != 1:
        raise ConfigurationError('config needs "version": 1')
    unknown = set(cfg) - set(harness.StudyConfig.__dataclass_fields__)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(out: Path, cfg: dict) -> None:
    (out / "config.echo.json").write_text(_dumps(cfg))


# ---------------------------------------------------------------- subcommands

def cmd_converge(args) -> int:
    raw = load_config(args)
    cfg = harness.StudyConfig.from_dict(raw)
    out = _outdir(args)
    _echo(out, cfg.to_dict())
    rep = harness.strong_error_study(cfg, workers=args.workers)
    (out / "report.json").write_text(_dumps(rep.to_dict()))
    (out / "levels.csv").write_text(rep.levels_csv())
    harness.write_plot(rep, out / "plot.svg")
    pt = rep.pointwise_fit["slope"] if rep.pointwise_fit else float("nan")
    sup = rep.sup_fit["slope"] if rep.sup_fit else float("nan")
    print(f"converge: {'PASS' if rep.passed else 'FAIL'} pointwise slope {pt:.4f}, "
          f"sup slope {sup:.4f}, aborted {rep.aborted}/{cfg.paths}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_moments(args) -> int:
    cfg = harness.StudyConfig.from_dict(load_config(args))
    out = _outdir(args)
    _echo(out, cfg.to_dict())
    rep = harness.moment_growth_study(cfg, workers=args.workers)
    (out / "report.json").write_text(_dumps(rep))
    slope = rep["increment_fit"]["slope"] if rep["increment_fit"] else float("nan")
    print(f"moments: {'PASS' if rep['passed'] else 'FAIL'} increment slope {slope:.4f}")
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def cmd_bounds(args) -> int:
    if args.config:
        cfg = harness.StudyConfig.from_dict(load_config(args))
        out = _outdir(args)
        _echo(out, cfg.to_dict())
        rep = harness.bound_validation_study(cfg, windows=args.windows, workers=args.workers)
        (out / "report.json").write_text(_dumps(rep.to_dict()))
        print(f"bounds: {'PASS' if rep.passed else 'FAIL'} {rep.violations} violations in "
              f"{rep.windows_tested} windows, worst ratio {rep.worst_ratio:.3e}")
        return EXIT_OK if rep.passed else EXIT_FAIL

    r0 = math.inf if args.r0 is None else args.r0
    if args.R0 is not None:
        if args.sup_xi is None:
            raise UsageError("--R0 needs --sup-xi")
        inp = BoundInputs(args.q, args.omega, args.sup_osc, R0=args.R0, sup_xi=args.sup_xi)
        value, kind = local_time_bound_convex(inp), "convex"
    else:
        if args.beta is None or args.delta is None:
            raise UsageError("give --beta and --delta (or --R0 and --sup-xi)")
        inp = BoundInputs(args.q, args.omega, args.sup_osc, args.beta, args.delta, r0)
        value, kind = local_time_bound_AB(inp), "AB"
    result = {"kind": kind, "value": value, "overflow": math.isinf(value),
              "inputs": {k: v for k, v in vars(inp).items() if v is not None}}
    text = _dumps(result)
    sys.stdout.write(text)
    if args.out:
        (_outdir(args) / "report.json").write_text(text)
    return EXIT_OK


def cmd_check_domain(args) -> int:
    cfg = load_config(args)
    if "domain" not in cfg:
        raise ConfigurationError("config lacks a domain section")
    dom = domain_from_dict(cfg["domain"])
    seed = cfg.get("seed", 0)
    out = _outdir(args)
    _echo(out, cfg)
    certs = [certify_condition_A(dom, samples=args.samples, seed=seed).to_dict()]
    if isinstance(dom, TruncatedDomain) and dom.base.convex:
        certs.append(dict(cone_certificate(dom, samples=args.samples, seed=seed).to_dict(), method="cone"))
        delta = dom.inner_radius / 2.0
        certs.append(dict(certify_condition_B(dom, delta, samples=args.samples, seed=seed).to_dict(),
                          method="search"))
    elif args.delta is not None:
        certs.append(dict(certify_condition_B(dom, args.delta, samples=args.samples, seed=seed).to_dict(),
                          method="search"))
    else:
        certs.append(dict(choose_delta(dom, samples=args.samples, seed=seed).to_dict(), method="search"))
    ok = all(c["status"] == "certified" for c in certs)
    report = {"domain": dom.to_dict(), "convex": dom.convex, "certificates": certs, "passed": ok}
    (out / "report.json").write_text(_dumps(report))
    summary = ", ".join(f"{c['condition']}:{c['status']}" for c in certs)
    print(f"check-domain: {'PASS' if ok else 'FAIL'} {summary}")
    return EXIT_OK if ok else EXIT_FAIL


def _read_path_csv(path: str) -> SampledPath:
    with open(path) as fh:
        return SampledPath.from_csv(fh)


def cmd_verify(args) -> int:
    cfg = load_config(args)
    dom = domain_from_dict(cfg["domain"])
    if args.input:
        w = _read_path_csv(args.input)
    else:
        if "x0" not in cfg:
            raise ConfigurationError("verify without --input needs x0 in the config")
        N = max(cfg.get("levels", [256]))
        B = sample_brownian(dom.dimension, TimeGrid(cfg.get("T", 1.0), N), cfg.get("seed", 0))
        w = SampledPath(B.grid, np.asarray(cfg["x0"], dtype=np.float64) + B.values)
    out = _outdir(args)
    _echo(out, cfg)
    sol = solve_discrete(dom, w, cfg.get("substeps", 1))
    rep = verify(dom, w, sol)
    with open(out / "solution.csv", "w") as fh:
        sol.to_csv(fh)
    (out / "report.json").write_text(_dumps(vars(rep)))
    print(f"verify: {rep.status.upper()} boundary {rep.boundary_violation:.2e}, "
          f"identity {rep.identity_residual:.2e}, interior pushes {rep.interior_pushes}, "
          f"cone {rep.cone_violation:.2e}")
    return EXIT_OK if rep.status == "pass" else EXIT_FAIL


def cmd_simulate(args) -> int:
    cfg = harness.StudyConfig.from_dict(load_config(args))
    dom, coeff = cfg.build()
    out = _outdir(args)
    _echo(out, cfg.to_dict())
    N = cfg.levels[-1]
    B = sample_brownian(coeff.noise_dim, TimeGrid(cfg.T, N), cfg.seed)
    runs = {
        "wong_zakai": solve_wong_zakai(dom, coeff, B, N, cfg.substeps, cfg.x0, cfg.integrator),
        "euler": solve_euler(dom, coeff, B, N, cfg.x0),
    }
    report = {"level": N, "seed": cfg.seed}
    ok = True
    for name, traj in runs.items():
        with open(out / f"{name}.csv", "w") as fh:
            traj.to_csv(fh)
        rep = verify(dom, traj.Y, SkorohodSolution(traj.X, traj.Phi, traj.tv))
        ok &= rep.status == "pass"
        report[name] = {"X_T": traj.X.values[-1], "local_time_T": float(traj.tv[-1]),
                        "pushes": len(traj.push_records), "verify": vars(rep)}
    report["passed"] = ok
    (out / "report.json").write_text(_dumps(report))
    print(f"simulate: {'PASS' if ok else 'FAIL'} level {N}, "
          f"local time {report['wong_zakai']['local_time_T']:.6g} (wong-zakai), "
          f"{report['euler']['local_time_T']:.6g} (euler)")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON study config")
    common.add_argument("--out", default=None, help="output directory (created if absent)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: $REFLECT_SIM_WORKERS or 1)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry; dotted keys for nested sections")

    p = argparse.ArgumentParser(prog="reflect-sim", description="Reflecting SDE simulation and studies.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="one Wong-Zakai and one Euler trajectory")
    sub.add_parser("converge", parents=[common], help="coupled strong-error study")
    sub.add_parser("moments", parents=[common], help="moment growth over dyadic windows")
    s = sub.add_parser("check-domain", parents=[common], help="certify exterior-sphere and normal-direction conditions")
    s.add_argument("--samples", type=int, default=200)
    s.add_argument("--delta", type=float, default=None)
    s = sub.add_parser("verify", parents=[common], help="solve a Skorohod problem and check its properties")
    s.add_argument("--input", help="driver path CSV (t,x1,..); default: x0 plus a seeded Brownian path")
    b = sub.add_parser("bounds", parents=[common],
                       help="evaluate a local-time bound, or validate it empirically with --config")
    b.add_argument("--q", type=float, default=1.0)
    b.add_argument("--omega", type=float, default=0.0)
    b.add_argument("--sup-osc", dest="sup_osc", type=float, default=0.0)
    b.add_argument("--beta", type=float)
    b.add_argument("--delta", type=float)
    b.add_argument("--r0", type=float, help="exterior sphere radius (omit for convex domains)")
    b.add_argument("--R0", type=float, help="inner ball radius (convex variant)")
    b.add_argument("--sup-xi", dest="sup_xi", type=float)
    b.add_argument("--windows", type=int, default=None, help="windows per path for the empirical study")
    return p


COMMANDS = {"simulate": cmd_simulate, "converge": cmd_converge, "moments": cmd_moments,
            "bounds": cmd_bounds, "check-domain": cmd_check_domain, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.out is None and args.command != "bounds":
        args.out = "out"
    try:
        return COMMANDS[args.command](args)
    except SubstepTooCoarseError as exc:
        print(f"reflect-sim: solver aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (UsageError, ConfigurationError, ReflectSimError, ValueError, KeyError, TypeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"reflect-sim: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
