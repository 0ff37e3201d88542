"""Acceptance checks, one per criterion, each printing a single PASS/FAIL line.

Run with pytest, or directly as ``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from parastab import (AlwaysOn, CoefficientField, Grid, Nonlinearity, OpenLoop, ProblemSpec, RapidStabilizer,
                      SimConfig, WaitThenControl, build_basis, build_reduced_system, decay_fit, energy_monitors,
                      growth_envelope_check, kalman_controllability, lmi_runtime_monitor, modal_coefficients,
                      place_poles, simulate)
from parastab.analysis import composite_bound, lyapunov_trace

# tolerances
EIG_REL = 1e-3
ORTHO = 1e-6
IDENTITY_REL = 1e-2
KALMAN_REL = 1e-2
POLE_REL = 1e-6
LYAP_RESIDUAL = 1e-8
GROWTH_RATE, GROWTH_REL = 4.13, 0.05
RATE_FACTOR = 0.9
V_SLACK = 1e-2
RATIO_SLACK = 1e-3
MONOTONE_SLACK = 1e-10
MODE_DEFECT = 1e-4
RICHARDSON = (3.5, 4.5)

# problem instances: a = 1, b = -1 throughout; q = 1 is Burgers, q = 2 is Allen-Cahn with kappa = 1
M, DT = 400, 1e-4
BURGERS_DELTA = 5.0  # large enough that the first mode needs feedback
AC_DELTA = 4.5
SMOOTH_Y0 = [[1, 1.0], [2, 0.5]]

RESULTS: dict[int, tuple[bool, str]] = {}


def report(k: int, passed: bool, detail: str) -> bool:
    line = f"CRITERION {k:2d}: {'PASS' if passed else 'FAIL'} | {detail}"
    RESULTS[k] = (passed, line)
    print(line)
    return passed


@lru_cache(maxsize=None)
def coeffs():
    return CoefficientField.constant(1.0, -1.0)


@lru_cache(maxsize=None)
def basis(guard=True):
    return build_basis(coeffs(), Grid(M), resolution_guard=guard)


@lru_cache(maxsize=None)
def stabilizer(q, delta, nonlinearity, reference="continuous", strategy="preserve"):
    return RapidStabilizer(q=q, delta=delta, nonlinearity=nonlinearity, M=M, tail_reference=reference,
                           pole_strategy=strategy).fit()


def _run(est, initial, T_end, strategy=None, dt=DT, form="w", cadence=100, certificate=True):
    cfg = SimConfig(est.problem_, M=M, dt=dt, T_end=T_end, initial=initial,
                    strategy=strategy if strategy is not None else AlwaysOn(), form=form, cadence=cadence)
    return simulate(cfg, est.design_, est.certificate_ if certificate else None, est.basis_)


def _open_loop(q, nl, initial, T_end, cadence=1):
    cfg = SimConfig(ProblemSpec(coeffs(), q, nl), M=M, dt=DT, T_end=T_end, initial=initial, strategy=OpenLoop(),
                    cadence=cadence)
    return simulate(cfg, basis=basis())


@lru_cache(maxsize=None)
def linear_closed_loop():
    est = stabilizer(15.0, 1.0, "zero", reference="discrete")
    return est, _run(est, {"eigenmode": {"n": 1, "amplitude": 0.1}}, 3.0)


def criterion_1():
    b = basis()
    n = np.arange(1, 11)
    exact = n**2 * np.pi**2 + 1
    rel = float(np.max(np.abs(b.lambdas[:10] - exact) / exact))
    phi = b.phi[:, 1:-1]
    ortho = float(np.max(np.abs(b.grid.h * phi @ phi.T - np.eye(b.mode_count))))
    ok = rel < EIG_REL and ortho < ORTHO
    return report(1, ok, f"max rel eig err {rel:.2e} (< {EIG_REL:g}), orthonormality defect {ortho:.2e} (< {ORTHO:g})")


def criterion_2():
    mc = modal_coefficients(basis(), coeffs(), 15.0)
    defect = float(mc.identity_defect[:10].max())
    return report(2, defect < IDENTITY_REL, f"max rel gap |a_n+(q-l_n)b_n| vs a(0)|phi_n'(0)|, n<=10: {defect:.2e}")


def criterion_3():
    b = basis()
    mc = modal_coefficients(b, coeffs(), 15.0)
    rs = build_reduced_system(mc, b, 15.0, 1.0, 2)
    rep = kalman_controllability(rs.A0, rs.B0, rs)
    design = place_poles(rs, "shifted")
    poles = design.closed_loop_poles()
    target = np.array([-5.0, -4.0, -3.0])
    pole_err = float(np.max(np.abs(poles - target) / np.abs(target)))
    ok = rep.det != 0 and rep.relative_gap < KALMAN_REL and pole_err < POLE_REL
    return report(3, ok, f"det {rep.det:.6g}, closed-form gap {rep.relative_gap:.2e}, pole rel err {pole_err:.1e}")


def criterion_4():
    cases = [("burgers d=1", stabilizer(1.0, 1.0, "burgers")),
             (f"burgers d={BURGERS_DELTA:g}", stabilizer(1.0, BURGERS_DELTA, "burgers")),
             (f"allen-cahn d={AC_DELTA:g}", stabilizer(2.0, AC_DELTA, "allen_cahn")),
             ("linear q=15 (discrete tails)", stabilizer(15.0, 1.0, "zero", reference="discrete"))]
    ok, parts = True, []
    for name, est in cases:
        c = est.certificate_
        sel = c.selection
        F = sel.extended.F
        bound = 1.0 / (4.0 * np.linalg.norm(F + c.delta * np.eye(F.shape[0]), 2))
        good = (sel.lyapunov.residual <= LYAP_RESIDUAL and sel.lyapunov.sigma_min > 0
                and sel.lyapunov.sigma_min >= bound and sel.cond1 <= 0 and sel.cond2 <= 0 and c.sigma > 0
                and c.rho > 0)
        ok &= bool(good)
        parts.append(f"{name}: Nt={c.Ntilde} res={sel.lyapunov.residual:.1e} smin={sel.lyapunov.sigma_min:.2e}"
                     f">={bound:.2e} slacks=({sel.cond1:.2e},{sel.cond2:.2e}) rho={c.rho:.2e}")
    return report(4, ok, "; ".join(parts))


def criterion_5():
    ol = _open_loop(15.0, Nonlinearity.zero(), {"eigenmode": {"n": 1, "amplitude": 0.1}}, 0.5, cadence=50)
    growth = -decay_fit(ol, "l2_y", (0.05, 0.45)).fitted_rate
    est, tr = linear_closed_loop()
    fit = decay_fit(tr, "h1_y", (0.3, 2.7), target_delta=1.0)
    lt = lyapunov_trace(tr, est.certificate_, slack=V_SLACK)
    ok = abs(growth - GROWTH_RATE) <= GROWTH_REL * GROWTH_RATE and fit.passed and lt.monotone.passed
    return report(5, ok, f"open-loop growth {growth:.4f} (4.13 +/- 5%), closed-loop H1 rate {fit.fitted_rate:.3f} "
                         f"(>= 0.9), max e^(2dt)V uptick {lt.monotone.max_violation:.2e} (<= 1e-2), "
                         f"Ntilde={est.certificate_.Ntilde}")


@lru_cache(maxsize=None)
def burgers_local():
    est = stabilizer(1.0, BURGERS_DELTA, "burgers")
    rho = est.certificate_.rho
    return est, _run(est, {"sine_combo": SMOOTH_Y0, "scale_H10": rho}, 2.0)


def criterion_6():
    est, tr = burgers_local()
    fit = decay_fit(tr, "h1_y", target_delta=BURGERS_DELTA)
    lmi = lmi_runtime_monitor(tr, est.certificate_, est.problem_.nonlinearity)
    ok = fit.passed and lmi.result.passed
    return report(6, ok, f"delta={BURGERS_DELTA:g}, rho={est.certificate_.rho:.3e}, H1 rate {fit.fitted_rate:.3f} "
                         f"(>= {RATE_FACTOR * BURGERS_DELTA:g}), LMI peak {lmi.result.detail['peak']:.2e} "
                         f"< 1/Nt = {lmi.threshold:.3e}")


def criterion_7():
    tr = _open_loop(1.0, Nonlinearity.burgers(), {"sine_combo": [[1, 0.5]]}, 0.2)
    l2 = tr.column("l2_y")
    ratio = float(l2[-1] / l2[0])
    bound = math.exp(-0.2 * math.pi**2) * (1 + RATIO_SLACK)
    rise = float(np.max(np.diff(l2) / l2[:-1]))
    ok = ratio <= bound and rise <= MONOTONE_SLACK
    return report(7, ok, f"L2 ratio {ratio:.6f} <= {bound:.6f}, max per-step relative rise {rise:.2e} (<= 1e-10)")


def criterion_8():
    est = stabilizer(1.0, BURGERS_DELTA, "burgers")
    c = est.certificate_
    tr = _run(est, {"sine_combo": SMOOTH_Y0, "scale_H10": 5.0 * c.rho}, 3.0, WaitThenControl(rho=c.rho))
    finite = tr.T1 is not None and math.isfinite(tr.T1)
    if not finite:
        return report(8, False, "no switch time recorded")
    T = float(tr.t[-1])
    fit = decay_fit(tr, "h1_y", (tr.T1 + 0.1 * (T - tr.T1), tr.T1 + 0.9 * (T - tr.T1)), target_delta=BURGERS_DELTA)
    cb = composite_bound(tr, BURGERS_DELTA, c.rho, c.M, tau=1.0)
    ok = fit.passed and cb.passed
    return report(8, ok, f"T1={tr.T1:.4f}, post-switch rate {fit.fitted_rate:.3f} (>= {RATE_FACTOR * BURGERS_DELTA:g}), "
                         f"L_hat={cb.L_hat:.3e}, max ||y||/(L_hat e^(-d(t-1))) = {cb.max_ratio:.2e}")


def criterion_9():
    tr = _open_loop(2.0, Nonlinearity.allen_cahn(1.0), {"sine_combo": [[1, 0.5]]}, 0.2)
    l2 = tr.column("l2_y")
    ratio = float(l2[-1] / l2[0])
    bound = math.exp(-0.2 * (math.pi**2 - 1)) * (1 + RATIO_SLACK)
    est = stabilizer(2.0, AC_DELTA, "allen_cahn")
    cl = _run(est, {"sine_combo": SMOOTH_Y0, "scale_H10": est.certificate_.rho}, 2.0)
    fit = decay_fit(cl, "h1_y", target_delta=AC_DELTA)
    env = growth_envelope_check(Nonlinearity.allen_cahn(1.0), samples=200)
    ok = ratio <= bound and fit.passed and env.passed
    return report(9, ok, f"open-loop L2 ratio {ratio:.6f} <= {bound:.6f}, closed-loop (d={AC_DELTA:g}) rate "
                         f"{fit.fitted_rate:.3f} (>= {RATE_FACTOR * AC_DELTA:g}), envelope max ratio {env.max_ratio:.3f}")


def _richardson_ratio():
    est = stabilizer(15.0, 1.0, "zero", reference="discrete")
    finals = []
    for dt in (4e-3, 2e-3, 1e-3):
        tr = _run(est, {"sine_combo": SMOOTH_Y0}, 0.2, dt=dt, cadence=int(round(0.2 / dt)), certificate=False)
        finals.append(tr.checkpoints[max(tr.checkpoints)])
    return float(np.max(np.abs(finals[0] - finals[1])) / np.max(np.abs(finals[1] - finals[2])))


def criterion_10():
    est, tr = linear_closed_loop()
    defects = [tr.mode_defect(), burgers_local()[1].mode_defect()]
    mode = float(max(defects))
    tw = _run(est, {"eigenmode": {"n": 1, "amplitude": 0.1}}, 1.0, certificate=False)
    ty = _run(est, {"eigenmode": {"n": 1, "amplitude": 0.1}}, 1.0, form="y", certificate=False)
    wy = float(np.max(np.abs(tw.column("l2_y") - ty.column("l2_y"))))
    wy_tol = 10 * DT**2 + 1e-6
    ratio = _richardson_ratio()
    again = _run(est, {"eigenmode": {"n": 1, "amplitude": 0.1}}, 1.0, certificate=False)
    fresh = RapidStabilizer(q=15.0, delta=1.0, nonlinearity="zero", M=M, tail_reference="discrete").fit()
    same = tw.to_csv() == again.to_csv() and fresh.certificate_.to_json() == est.certificate_.to_json()
    ok = mode <= MODE_DEFECT and wy <= wy_tol and RICHARDSON[0] <= ratio <= RICHARDSON[1] and same
    return report(10, ok, f"mode defect {mode:.2e} (<= 1e-4), W/Y gap {wy:.2e} (<= {wy_tol:.2e}), Richardson "
                          f"{ratio:.3f} in [3.5, 4.5], byte-identical reruns {same}")


def test_criterion_1():
    assert criterion_1(), RESULTS[1][1]


def test_criterion_2():
    assert criterion_2(), RESULTS[2][1]


def test_criterion_3():
    assert criterion_3(), RESULTS[3][1]


def test_criterion_4():
    assert criterion_4(), RESULTS[4][1]


def test_criterion_5():
    assert criterion_5(), RESULTS[5][1]


def test_criterion_6():
    assert criterion_6(), RESULTS[6][1]


def test_criterion_7():
    assert criterion_7(), RESULTS[7][1]


def test_criterion_8():
    assert criterion_8(), RESULTS[8][1]


def test_criterion_9():
    assert criterion_9(), RESULTS[9][1]


def test_criterion_10():
    assert criterion_10(), RESULTS[10][1]


if __name__ == "__main__":
    for k in range(1, 11):
        globals()[f"criterion_{k}"]()
