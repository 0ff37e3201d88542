"""Command line entry point ``parastab``.

Exit codes: 0 success, 2 validation error, 3 blow-up, 4 failed certificate or monitor.
Errors are reported on stderr as a single line ``parastab: error code=<n> kind=<kind> <message>``.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from ._validation import BlowUpError, CertificateError, HypothesisError, UncontrollableError
from .analysis import composite_bound, decay_fit, energy_monitors
from .artifacts import plot_norms, write_json
from .config import ConfigError, parse_config
from .estimator import RapidStabilizer
from .simulator import ProblemSpec, Trajectory, simulate

EXIT_OK, EXIT_VALIDATION, EXIT_BLOWUP, EXIT_MONITOR = 0, 2, 3, 4

DEMO_CONFIG = {
    "problem": {"coefficients": {"constant": {"a": 1.0, "b": -1.0}}, "q": 1.0, "delta": 1.0,
                "nonlinearity": {"kind": "burgers"}},
    "numerics": {"M": 400, "dt": 1e-4, "T_end": 3.0, "cadence": 100},
    "strategy": {"kind": "wait_then_control", "rho": "certificate"},
    "initial": {"sine_combo": [[1, 1.0], [2, 0.5]], "scale_H10_rho": 5.0},
}


class Failure(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


def stabilizer_from_config(cfg) -> RapidStabilizer:
    p, d, n = cfg.problem, cfg.design, cfg.numerics
    return RapidStabilizer(q=p["q"], delta=p["delta"], coefficients=p["coefficients"],
                           nonlinearity=p["nonlinearity"]["kind"], nl_coef=p["nonlinearity"].get("lambda", 1.0),
                           M=n["M"], N=d["N"], pole_strategy=d["pole_strategy"], tail_reference=d["tail_reference"],
                           s2_variant=d["s2_variant"], ntilde_cap=d["ntilde_cap"], certify=d["certify"])


def run_design(cfg, out: Path):
    est = stabilizer_from_config(cfg)
    try:
        est.fit()
    except UncontrollableError as exc:
        raise Failure(EXIT_VALIDATION, "uncontrollable", f"Kalman rank test failed: {exc}") from None
    except CertificateError as exc:
        raise Failure(EXIT_MONITOR, "certificate", str(exc)) from None
    write_json(out / "design.json", est.design_.to_dict(est.modal_))
    if est.certificate_ is not None:
        write_json(out / "certificate.json", est.certificate_.to_dict())
    return est


def _initial(cfg, est):
    init = dict(cfg.initial)
    factor = init.pop("scale_H10_rho", None)
    if factor is not None:
        rho = None if est is None or est.certificate_ is None else est.certificate_.rho
        if rho is None or rho == float("inf"):
            raise Failure(EXIT_VALIDATION, "validation", "initial.scale_H10_rho needs a finite certified radius")
        init["scale_H10"] = factor * rho
    return init


def run_simulation(cfg, out: Path, plot: bool, est=None):
    needs_design = cfg.strategy["kind"] != "open_loop"
    if needs_design and est is None:
        est = run_design(cfg, out)
    if est is None and "scale_H10_rho" in cfg.initial:
        est = run_design(cfg, out)
    cert = None if est is None else est.certificate_
    rho = None if cert is None else cert.rho
    sim_cfg = cfg.sim_config(initial=_initial(cfg, est), rho=rho)
    try:
        traj = simulate(sim_cfg, est.design_ if (est and needs_design) else None, cert if needs_design else None,
                        est.basis_ if est else None)
    except BlowUpError as exc:
        if exc.trajectory is not None:
            exc.trajectory.to_csv(out / "trajectory.csv")
        raise Failure(EXIT_BLOWUP, "blowup", str(exc)) from None
    traj.to_csv(out / "trajectory.csv")
    traj.write_checkpoints(out)
    if plot:
        plot_norms(traj, out / "norms.svg", delta=cfg.problem["delta"], M=None if cert is None else cert.M)
    return est, traj


def _window(cfg, traj):
    if cfg.analysis["window"] is not None:
        return tuple(cfg.analysis["window"])
    t0 = traj.T1 or 0.0
    T = float(traj.t[-1])
    return (t0 + 0.1 * (T - t0), t0 + 0.9 * (T - t0))


def run_analysis(cfg, traj: Trajectory, out: Path, est=None) -> bool:
    delta = float(cfg.problem["delta"])
    controlled = cfg.strategy["kind"] != "open_loop"
    report = {}
    decay = decay_fit(traj, cfg.analysis["column"], _window(cfg, traj), delta if controlled else None)
    report["decay"] = decay.to_dict()
    ok = decay.passed
    if est is not None and cfg.analysis["monitors"]:
        cert = est.certificate_ if controlled else None
        mon = energy_monitors(traj, est.problem_, certificate=cert)
        report["monitors"] = mon.to_dict()
        ok = ok and mon.passed
        if traj.T1 is not None and cert is not None and cert.rho == cert.rho:
            cb = composite_bound(traj, delta, cert.rho, cert.M, tau=min(1.0, float(traj.t[-1])))
            report["composite_bound"] = cb.to_dict()
            ok = ok and cb.passed
    if traj.T1 is not None:
        report["T1"] = traj.T1
    if traj.reduced is not None:
        report["mode_defect"] = traj.mode_defect()
    report["pass"] = bool(ok)
    write_json(out / "analysis.json", report)
    return ok


def _load(args):
    if args.command == "demo" and args.config is None:
        cfg = parse_config(DEMO_CONFIG)
    elif args.config is None:
        raise Failure(EXIT_VALIDATION, "validation", "--config is required")
    else:
        cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, numerics={**cfg.numerics, "seed": int(args.seed)})
    return cfg


def execute(args) -> int:
    cfg = _load(args)
    out = Path(args.out or cfg.output["directory"])
    out.mkdir(parents=True, exist_ok=True)
    plot = bool(args.plot or cfg.output["plot"])
    if args.command == "design":
        run_design(cfg, out)
        return EXIT_OK
    if args.command == "simulate":
        run_simulation(cfg, out, plot)
        return EXIT_OK
    if args.command == "analyze":
        if args.trajectory:
            traj = Trajectory.from_csv(args.trajectory)
            return EXIT_OK if run_analysis(cfg, traj, out) else EXIT_MONITOR
        est, traj = run_simulation(cfg, out, plot)
        if est is None:  # open loop: monitors only need the problem data
            est = stabilizer_from_config(cfg)
            _attach_problem(est)
        return EXIT_OK if run_analysis(cfg, traj, out, est) else EXIT_MONITOR
    # demo
    est = run_design(cfg, out)
    est, traj = run_simulation(cfg, out, True, est)
    return EXIT_OK if run_analysis(cfg, traj, out, est) else EXIT_MONITOR


def _attach_problem(est):
    est.problem_ = ProblemSpec(est._coefficient_field(), float(est.q), est._nonlinearity(), float(est.delta))
    est.certificate_ = None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parastab", description="Boundary rapid stabilization toolkit")
    parser.add_argument("command", choices=["design", "simulate", "analyze", "demo"])
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--out", help="output directory (default: output.directory of the config)")
    parser.add_argument("--plot", action="store_true", help="write an SVG of the norm decay")
    parser.add_argument("--seed", type=int, help="override numerics.seed")
    parser.add_argument("--trajectory", help="analyze: existing trajectory CSV instead of simulating")
    return parser


def _fail(code, kind, message) -> int:
    line = " ".join(str(message).split())
    print(f"parastab: error code={code} kind={kind} {line}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return execute(args)
    except Failure as exc:
        return _fail(exc.code, exc.kind, exc)
    except (ConfigError, HypothesisError) as exc:
        return _fail(EXIT_VALIDATION, "validation", exc)
    except UncontrollableError as exc:
        return _fail(EXIT_VALIDATION, "uncontrollable", exc)
    except CertificateError as exc:
        return _fail(EXIT_MONITOR, "certificate", exc)
    except ValueError as exc:
        return _fail(EXIT_VALIDATION, "validation", exc)


def thread_cap() -> int:
    """Sweep parallelism from ``PARASTAB_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("PARASTAB_THREADS", "1")))
    except ValueError:
        return 1


def run_sweep(func, items) -> list:
    """Apply ``func`` to every item with at most ``PARASTAB_THREADS`` workers; results keep input order."""
    items = list(items)
    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        return list(pool.map(func, items))


if __name__ == "__main__":
    sys.exit(main())
