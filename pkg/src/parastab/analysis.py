"""Post-processing of trajectories: decay fits, Lyapunov traces and energy monitors.

Everything here is a pure function of a :class:`~parastab.simulator.Trajectory`
(plus the certificate where one is needed), so re-running an analysis never
changes its verdict.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .certificate import StabilityCertificate
from .nonlinearity import Nonlinearity
from .simulator import ProblemSpec, Trajectory
from .sturm_liouville import POINCARE

RATE_FACTOR = 0.9


@dataclass(frozen=True)
class DecayReport:
    fitted_rate: float
    fit_window: tuple[float, float]
    r_squared: float
    overshoot_M: float
    target_delta: float | None
    passed: bool
    intercept: float = 0.0
    nonpositive: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fit_window"] = list(self.fit_window)
        d["pass"] = d.pop("passed")
        return _jsonable(d)


def fit_exponential(t, values) -> tuple[float, float, float]:
    """Least-squares ``log(values) = c - rate * t``; returns ``(rate, c, r^2)``."""
    t = np.asarray(t, dtype=float)
    logv = np.log(np.asarray(values, dtype=float))
    A = np.column_stack([np.ones_like(t), -t])
    (c, rate), *_ = np.linalg.lstsq(A, logv, rcond=None)
    resid = logv - A @ np.array([c, rate])
    ss_tot = float(np.sum((logv - logv.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - float(resid @ resid) / ss_tot)
    return float(rate), float(c), r2


def decay_fit(trajectory: Trajectory, column: str = "h1_y", window=None, target_delta: float | None = None,
              min_points: int = 10) -> DecayReport:
    """Fit the exponential decay rate of one snapshot column over ``window``.

    The default window is ``[0.1 T, 0.9 T]``. A positive rate means decay.
    ``overshoot_M`` is ``max ||y(t)|| e^{rate t} / ||y(0)||`` over the window.
    """
    t = trajectory.t
    vals = trajectory.column(column)
    if window is None:
        window = (0.1 * t[-1], 0.9 * t[-1])
    lo, hi = float(window[0]), float(window[1])
    if lo < t[0] - 1e-12 or hi > t[-1] + 1e-12 or lo >= hi:
        raise ValueError(f"fit window [{lo}, {hi}] lies outside the trajectory [{t[0]}, {t[-1]}]")
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if np.count_nonzero(sel) < min_points:
        raise ValueError(f"fit window holds {np.count_nonzero(sel)} snapshots, need >= {min_points}")
    ts, vs = t[sel], vals[sel]
    if np.any(vs <= 0):
        # identically zero data decays at any rate
        return DecayReport(math.inf, (lo, hi), 1.0, 0.0, target_delta, True, nonpositive=True)
    rate, c, r2 = fit_exponential(ts, vs)
    overshoot = float(np.max(vs * np.exp(rate * ts)) / vals[0]) if vals[0] > 0 else math.nan
    passed = True if target_delta is None else rate >= RATE_FACTOR * target_delta
    return DecayReport(rate, (lo, hi), r2, overshoot, target_delta, bool(passed), c)


@dataclass(frozen=True)
class MonitorResult:
    max_violation: float
    passed: bool
    applicable: bool = True
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"max_violation": self.max_violation, "pass": self.passed, "applicable": self.applicable}
        out.update(self.detail)
        return _jsonable(out)


NOT_APPLICABLE = MonitorResult(0.0, True, False)


@dataclass(frozen=True)
class LyapunovTrace:
    t: np.ndarray
    V: np.ndarray
    weighted: np.ndarray  # e^{2 delta t} V
    monotone: MonitorResult
    sandwich: MonitorResult


def _sandwich_bounds(cert: StabilityCertificate, coeffs_bounds: tuple[float, float]):
    s_min = cert.selection.lyapunov.sigma_min
    s_max = cert.selection.lyapunov.sigma_max
    lam1, lamN = float(cert.lambdas[0]), float(cert.lambdas[cert.Ntilde - 1])
    a_lo, a_hi = coeffs_bounds
    lower = min(s_min, min(s_min / lamN, 1.0)) * min(1.0, a_lo)
    upper = max(s_max, max(s_max / lam1, 1.0)) * max(1.0, a_hi)
    return lower, upper


def lyapunov_trace(trajectory: Trajectory, certificate: StabilityCertificate, slack: float = 1e-2,
                   start: float = 0.0, sandwich_tol: float = 1e-3) -> LyapunovTrace:
    """``V(t)`` with the check that ``e^{2 delta t} V(t)`` never rises by more than ``slack`` per snapshot.

    The sandwich compares ``V`` with ``u^2 + ||w||_{H1_0}^2`` through the
    constants ``k1^2 = min a`` and ``k2^2 = max a + max(-b)/pi^2``.
    """
    V = trajectory.column("V")
    if np.all(np.isnan(V)):
        raise ValueError("trajectory carries no Lyapunov values; simulate with a certificate")
    t = trajectory.t
    sel = t >= start - 1e-12
    t, V = t[sel], V[sel]
    weighted = np.exp(2.0 * certificate.delta * t) * V
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(weighted[:-1] > 0, np.diff(weighted) / weighted[:-1], 0.0)
    uptick = float(max(0.0, rel.max())) if len(rel) else 0.0
    monotone = MonitorResult(uptick, uptick <= slack, detail={"slack": slack})

    c = certificate.constants
    lower, upper = _sandwich_bounds(certificate, (c.k1**2, c.k2**2))
    u = trajectory.column("u")[sel]
    base = u * u + trajectory.column("h1_w")[sel] ** 2
    lo_v = np.where(base > 0, (lower * base - V) / np.where(base > 0, base, 1.0), 0.0)
    hi_v = np.where(base > 0, (V - upper * base) / np.where(base > 0, base, 1.0), 0.0)
    worst = float(max(0.0, (lo_v / lower).max(), (hi_v / upper).max())) if len(base) else 0.0
    sandwich = MonitorResult(worst, worst <= sandwich_tol, detail={"lower": lower, "upper": upper})
    return LyapunovTrace(t, V, weighted, monotone, sandwich)


def l2_decay_rate(problem: ProblemSpec, grid_nodes=None) -> float | None:
    """``pi^2 min a - (q + max b)``: the uncontrolled L2 contraction rate, or None without an estimate."""
    if problem.nonlinearity.kind == "custom":
        return None
    x = np.linspace(0.0, 1.0, 401) if grid_nodes is None else grid_nodes
    a_min = float(np.min(problem.coeffs.a(x)))
    b_max = float(np.max(problem.coeffs.b(x)))
    return POINCARE * a_min - (problem.q + b_max)


@dataclass(frozen=True)
class EnergyMonitorReport:
    l2_decay: MonitorResult
    l2_monotone: MonitorResult
    h1_bounded: MonitorResult
    lyapunov_monotone: MonitorResult = NOT_APPLICABLE
    lmi_runtime: MonitorResult = NOT_APPLICABLE

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self._items().values())

    def _items(self):
        return {"l2_decay": self.l2_decay, "l2_monotone": self.l2_monotone, "h1_bounded": self.h1_bounded,
                "lyapunov_monotone": self.lyapunov_monotone, "lmi_runtime": self.lmi_runtime}

    def to_dict(self) -> dict:
        out = {k: v.to_dict() for k, v in self._items().items()}
        out["pass"] = self.passed
        return out


def _uncontrolled_segment(trajectory: Trajectory) -> np.ndarray:
    t = trajectory.t
    T1 = trajectory.T1
    if T1 is None:
        return np.ones_like(t, dtype=bool)
    return t <= T1 + 1e-12


def energy_monitors(trajectory: Trajectory, problem: ProblemSpec, tol: float = 1e-3, monotone_slack: float = 1e-10,
                    tau: float | None = None, certificate: StabilityCertificate | None = None) -> EnergyMonitorReport:
    """Dissipativity monitors on the uncontrolled part of a run.

    ``l2_decay`` checks ``||y(t)|| <= e^{-r t} ||y0|| (1 + tol)`` with
    ``r = pi^2 min a - (q + max b)``; ``l2_monotone`` checks snapshot-to-snapshot
    non-increase with relative slack ``monotone_slack``; ``h1_bounded`` checks
    that after ``tau`` the H1 norm never exceeds twice its value at ``tau``.
    """
    seg = _uncontrolled_segment(trajectory)
    t = trajectory.t[seg]
    l2 = trajectory.column("l2_y")[seg]
    h1 = trajectory.column("h1_y")[seg]
    rate = l2_decay_rate(problem)
    if rate is None or len(t) < 2:
        l2_decay = l2_mono = NOT_APPLICABLE
    elif l2[0] == 0:
        l2_decay = l2_mono = MonitorResult(0.0, bool(np.all(l2 == 0)))
    else:
        bound = np.exp(-rate * t) * l2[0] * (1.0 + tol)
        viol = float(max(0.0, np.max((l2 - bound) / l2[0])))
        l2_decay = MonitorResult(viol, viol == 0.0, detail={"rate": rate, "ratio_end": float(l2[-1] / l2[0])})
        rel = np.diff(l2) / l2[:-1]
        worst = float(max(0.0, rel.max()))
        l2_mono = MonitorResult(worst, worst <= monotone_slack, detail={"slack": monotone_slack})
    tau = (0.1 * t[-1] if len(t) else 0.0) if tau is None else tau
    after = t >= tau - 1e-12
    if rate is None or not after.any():
        h1b = NOT_APPLICABLE
    else:
        ref = h1[after][0]
        peak = float(h1[after].max())
        viol = 0.0 if ref == 0 else max(0.0, peak / ref - 2.0)
        h1b = MonitorResult(viol, viol == 0.0, detail={"tau": tau})
    lyap = NOT_APPLICABLE
    lmi = NOT_APPLICABLE
    if certificate is not None and not np.all(np.isnan(trajectory.column("V"))):
        start = 0.0 if trajectory.T1 is None else trajectory.T1
        lyap = lyapunov_trace(trajectory, certificate, start=start).monotone
        lmi = lmi_runtime_monitor(trajectory, certificate, problem.nonlinearity).result
    return EnergyMonitorReport(l2_decay, l2_mono, h1b, lyap, lmi)


@dataclass(frozen=True)
class LMIRuntimeReport:
    values: np.ndarray
    threshold: float
    first_exceedance: float | None
    result: MonitorResult


def lmi_runtime_monitor(trajectory: Trajectory, certificate: StabilityCertificate,
                        nonlinearity: Nonlinearity) -> LMIRuntimeReport:
    """``Nt (1 + lambda_Nt) C0 c(||y||_inf)^2`` at each controlled snapshot against ``1/Nt``."""
    t = trajectory.t
    start = 0.0 if trajectory.T1 is None else trajectory.T1
    sel = t >= start - 1e-12
    linf = trajectory.column("linf_y")[sel]
    values = np.array([certificate.lmi_value(s, nonlinearity.envelope) for s in linf])
    thr = certificate.lmi_threshold
    over = np.flatnonzero(values >= thr)
    first = float(t[sel][over[0]]) if len(over) else None
    peak = float(values.max()) if len(values) else 0.0
    res = MonitorResult(max(0.0, peak - thr), len(over) == 0,
                        detail={"peak": peak, "threshold": thr, "first_exceedance": first})
    return LMIRuntimeReport(values, thr, first, res)


@dataclass(frozen=True)
class CompositeBound:
    L: float
    L_hat: float
    T1: float
    max_ratio: float
    passed: bool

    def to_dict(self) -> dict:
        return _jsonable({"L": self.L, "L_hat": self.L_hat, "T1": self.T1, "max_ratio": self.max_ratio,
                          "pass": self.passed})


def composite_bound(trajectory: Trajectory, delta: float, rho: float, M: float, c1: float = POINCARE,
                    tau: float = 1.0, column: str = "h1_y") -> CompositeBound:
    """Global envelope of a wait-then-control run.

    ``L`` is the smallest constant with ``||y(t)|| <= L e^{-c1 t / 2}`` on the
    uncontrolled stretch ``[min(tau, T1), T1]``, measured from the run;
    ``L_hat = max{L, L e^{(delta - c1/2) T1}, rho M e^{delta T1}}`` and the
    check is ``||y(t)|| <= L_hat e^{-delta (t - tau)}`` for ``t >= tau``.
    """
    if trajectory.T1 is None:
        raise ValueError("trajectory has no recorded switch time")
    T1 = float(trajectory.T1)
    t = trajectory.t
    y = trajectory.column(column)
    pre = (t >= min(tau, T1) - 1e-12) & (t <= T1 + 1e-12)
    L = float(np.max(y[pre] * np.exp(0.5 * c1 * t[pre])))
    L_hat = max(L, L * math.exp((delta - 0.5 * c1) * T1), rho * M * math.exp(delta * T1))
    post = t >= tau - 1e-12
    ratio = y[post] / (L_hat * np.exp(-delta * (t[post] - tau)))
    worst = float(ratio.max()) if len(ratio) else 0.0
    return CompositeBound(L, L_hat, T1, worst, worst <= 1.0)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def report_json(report) -> str:
    data = report.to_dict() if hasattr(report, "to_dict") else report
    return json.dumps(_jsonable(data), indent=2, sort_keys=True)
