"""Time integration of the boundary-controlled equation.

Two equivalent state forms are supported. ``"w"`` integrates the homogenised
field ``w = y - (1 - x) u`` together with ``u``; ``"y"`` integrates ``y`` with
the Dirichlet value ``y(t, 0) = u(t)`` fed through the first stencil. Both use
Crank-Nicolson on ``-A + q`` and second-order Adams-Bashforth on the remaining
terms (nonlinearity, lifting source, feedback), with an Euler start.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._validation import BlowUpError, check_scalar
from .certificate import StabilityCertificate, lyapunov_value
from .controller import ControllerDesign, source_profile
from .nonlinearity import Nonlinearity, random_h10_field
from .sturm_liouville import CoefficientField, Grid, GridFunction, SpectralBasis, build_basis, norm, seminorm_h1

BLOWUP = 1e12


@dataclass(frozen=True)
class ProblemSpec:
    coeffs: CoefficientField
    q: float
    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity.zero)
    delta: float = 1.0

    def __post_init__(self):
        check_scalar(self.q, "q")
        check_scalar(self.delta, "delta", positive=True)


@dataclass(frozen=True)
class OpenLoop:
    name = "open_loop"


@dataclass(frozen=True)
class AlwaysOn:
    name = "always_on"


@dataclass(frozen=True)
class WaitThenControl:
    """Stay uncontrolled until ``||y||_{H1_0} <= rho`` at a snapshot, or until ``T1`` if given."""

    rho: float | None = None
    T1: float | None = None
    name = "wait_then_control"

    def __post_init__(self):
        if (self.rho is None) == (self.T1 is None):
            raise ValueError("WaitThenControl needs exactly one of rho or T1")


@dataclass(frozen=True)
class SimConfig:
    problem: ProblemSpec
    M: int = 400
    dt: float = 1e-4
    T_end: float = 1.0
    initial: dict | GridFunction | None = None
    strategy: OpenLoop | AlwaysOn | WaitThenControl = field(default_factory=AlwaysOn)
    form: str = "w"
    cadence: int = 100
    checkpoint_every: int = 0  # in snapshots; 0 keeps only the first and last fields
    seed: int = 0

    def __post_init__(self):
        check_scalar(self.dt, "dt", positive=True)
        check_scalar(self.T_end, "T_end", positive=True)
        check_scalar(self.cadence, "cadence", integer=True, positive=True)
        if self.form not in ("w", "y"):
            raise ValueError(f"form must be 'w' or 'y', got {self.form!r}")

    @property
    def steps(self) -> int:
        return int(round(self.T_end / self.dt))


def initial_condition(spec, grid: Grid, basis: SpectralBasis | None = None, seed: int | None = None) -> GridFunction:
    """Build ``y0`` from ``{"eigenmode": {"n", "amplitude"}}``, ``{"sine_combo": [[k, amp], ...]}``
    or ``{"random_H10": {"norm", "seed"}}``; ``{"scale_H10": value}`` may be added to rescale any of them."""
    if isinstance(spec, GridFunction):
        vals = spec.values.copy()
    else:
        if not isinstance(spec, dict):
            raise ValueError(f"unknown initial condition spec {spec!r}")
        kinds = [k for k in spec if k != "scale_H10"]
        if len(kinds) != 1:
            raise ValueError(f"initial condition needs exactly one kind, got {kinds}")
        kind, body = kinds[0], spec[kinds[0]]
        if kind == "eigenmode":
            if basis is None:
                raise ValueError("eigenmode initial condition needs a spectral basis")
            vals = float(body.get("amplitude", 1.0)) * basis.eigenfunction(int(body["n"])).values
        elif kind == "sine_combo":
            vals = np.zeros(grid.node_count)
            for k, amp in body:
                vals = vals + float(amp) * np.sin(int(k) * np.pi * grid.nodes)
        elif kind == "random_H10":
            s = body.get("seed", seed if seed is not None else 0)
            vals = random_h10_field(grid, np.random.default_rng(int(s)))
            vals *= float(body["norm"]) / seminorm_h1(vals, grid.h)
        else:
            raise ValueError(f"unknown initial condition kind {kind!r}")
        vals = np.array(vals, dtype=float)
        if "scale_H10" in spec:
            vals[0] = vals[-1] = 0.0
            vals *= float(spec["scale_H10"]) / seminorm_h1(vals, grid.h)
    vals[0] = vals[-1] = 0.0
    return GridFunction(grid, vals)


SNAPSHOT_FIELDS = ("t", "u", "l2_y", "h1_y", "linf_y", "l2_w", "h1_w", "V")


@dataclass
class Trajectory:
    """Snapshot table plus full ``y`` fields at checkpoint times.

    ``h1_y`` is ``||y||_{L2} + ||y'||_{L2}``; ``h1_w`` is the ``H1_0`` seminorm.
    ``reduced`` holds the co-integrated ``(u, Y_1..Y_N)`` when feedback is on.
    """

    table: np.ndarray  # (snapshots, 8)
    modes: np.ndarray  # (snapshots, K)
    reduced: np.ndarray | None = None
    checkpoints: dict = field(default_factory=dict)
    T1: float | None = None
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        if name.startswith("mode_"):
            return self.modes[:, int(name[5:]) - 1]
        return self.table[:, SNAPSHOT_FIELDS.index(name)]

    @property
    def t(self) -> np.ndarray:
        return self.table[:, 0]

    def __len__(self) -> int:
        return len(self.table)

    @property
    def mode_count(self) -> int:
        return self.modes.shape[1]

    def mode_defect(self) -> float:
        """``sup_t |Y_n(t) - <w(t), phi_n>|`` over the feedback modes."""
        if self.reduced is None:
            return math.nan
        n = min(self.reduced.shape[1] - 1, self.mode_count)
        diff = self.reduced[:, 1: n + 1] - self.modes[:, :n]
        mask = np.all(np.isfinite(self.reduced), axis=1)
        return float(np.max(np.abs(diff[mask]))) if mask.any() else math.nan

    def header(self) -> list[str]:
        return list(SNAPSHOT_FIELDS) + [f"mode_{k}" for k in range(1, self.mode_count + 1)]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        for row, modes in zip(self.table, self.modes):
            writer.writerow([_fmt(v) for v in row] + [_fmt(v) for v in modes])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if tuple(header[: len(SNAPSHOT_FIELDS)]) != SNAPSHOT_FIELDS:
            raise ValueError(f"unexpected trajectory header {header[:len(SNAPSHOT_FIELDS)]}")
        data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
        k = len(SNAPSHOT_FIELDS)
        return cls(data[:, :k].copy(), data[:, k:].copy())

    def write_checkpoints(self, directory) -> list[str]:
        import os

        names = []
        for t, y in sorted(self.checkpoints.items()):
            name = f"field_t{t:.6f}.csv"
            x = np.linspace(0.0, 1.0, len(y))
            with open(os.path.join(directory, name), "w", newline="") as fh:
                fh.write("x,y\n")
                fh.writelines(f"{_fmt(a)},{_fmt(b)}\n" for a, b in zip(x, y))
            names.append(name)
        return names


def _fmt(v: float) -> str:
    return "nan" if not np.isfinite(v) else repr(float(v))


class _Plant:
    """Matrices and projections shared by both state forms."""

    def __init__(self, config: SimConfig, basis: SpectralBasis, design: ControllerDesign | None,
                 certificate: StabilityCertificate | None, mode_count: int):
        grid = basis.grid
        self.grid, self.h, self.x = grid, grid.h, grid.nodes
        self.nl = config.problem.nonlinearity
        q = config.problem.q
        op = basis.operator
        self.op = op
        n = grid.M - 1
        L = sp.diags([-op.offdiag, q - op.diag, -op.offdiag], [-1, 0, 1], format="csc")
        eye = sp.identity(n, format="csc")
        dt = config.dt
        self.rhs_mat = (eye + 0.5 * dt * L).tocsr()
        self.solve = spla.splu((eye - 0.5 * dt * L).tocsc()).solve
        self.beta = op.a_left / grid.h**2  # weight of y(0) in the first interior stencil
        self.lift = 1.0 - self.x[1:-1]
        self.source = source_profile(config.problem.coeffs, grid, q)[1:-1]
        self.design = design
        self.cert = certificate
        self.K = None if design is None else design.K
        self.N = 0 if design is None else design.N
        self.record_modes = mode_count
        self.phi_rec = basis.phi[:mode_count, 1:-1] * grid.h
        self.phi_ctl = basis.phi[: self.N, 1:-1] * grid.h
        if design is not None:
            red = design.reduced
            self.a_n = red.A0[1:, 0]
            self.b_n = red.B0[1:]
            self.mu = q - red.lambdas
            self.k_scalar = design.k_scalar
        if certificate is not None:
            Nt = certificate.Ntilde
            if basis.mode_count < Nt:
                raise ValueError(f"basis has {basis.mode_count} modes, certificate needs {Nt}")
            self.phi_V = basis.phi[:Nt, 1:-1] * grid.h
            self.lam_V = basis.lambdas[:Nt]
            self.P = certificate.P


def simulate(config: SimConfig, design: ControllerDesign | None = None,
             certificate: StabilityCertificate | None = None, basis: SpectralBasis | None = None,
             mode_count: int | None = None) -> Trajectory:
    """Integrate ``config`` up to ``T_end``, recording a snapshot every ``cadence`` steps.

    Raises :class:`BlowUpError` carrying the partial trajectory once a norm
    exceeds ``1e12`` or turns non-finite.
    """
    strategy = config.strategy
    if not isinstance(strategy, OpenLoop) and design is None:
        raise ValueError(f"strategy {strategy.name} requires a controller design")
    grid = Grid(config.M) if basis is None else basis.grid
    if grid.M != config.M:
        raise ValueError(f"basis grid M={grid.M} does not match config M={config.M}")
    need = max([design.N if design else 1, certificate.Ntilde if certificate else 1, mode_count or 1])
    if basis is None or basis.mode_count < need:
        basis = build_basis(config.problem.coeffs, grid, max(need, min(10, grid.M // 4)), resolution_guard=False)
    if mode_count is None:
        mode_count = certificate.Ntilde if certificate else (design.N if design else min(10, basis.mode_count))
    plant = _Plant(config, basis, design, certificate, mode_count)
    y0 = initial_condition(config.initial if config.initial is not None else {"eigenmode": {"n": 1, "amplitude": 0.1}},
                           grid, basis, config.seed)
    stepper = _WStepper(plant, config.dt) if config.form == "w" else _YStepper(plant, config.dt)
    with np.errstate(over="ignore", invalid="ignore"):  # blow-up is detected from the norms
        return _run(config, plant, stepper, y0)


def _run(config, plant, stepper, y0):
    strategy = config.strategy
    steps, cadence, dt = config.steps, config.cadence, config.dt
    on = isinstance(strategy, AlwaysOn)
    waiting = isinstance(strategy, WaitThenControl)
    T1 = 0.0 if on else None
    stepper.reset(y0.values[1:-1].copy(), 0.0, controlled=on)
    rows, modes, reduced, checkpoints = [], [], [], {}
    n_snap = steps // cadence + 1
    for step in range(steps + 1):
        if step % cadence == 0:
            t = step * dt
            snap = _snapshot(plant, stepper, t)
            rows.append(snap[0])
            modes.append(snap[1])
            reduced.append(stepper.reduced_state())
            idx = len(rows) - 1
            if idx == 0 or idx == n_snap - 1 or (config.checkpoint_every and idx % config.checkpoint_every == 0):
                checkpoints[t] = stepper.y_full()
            if not np.all(np.isfinite(snap[0][1:7])) or np.max(np.abs(snap[0][1:7])) > BLOWUP:
                traj = _assemble(rows, modes, reduced, checkpoints, T1, config, plant)
                raise BlowUpError(f"blow-up at t={t:.6g}: norm above {BLOWUP:g} or non-finite", traj, t)
            if waiting and not stepper.controlled:
                # the H1_0 seminorm of y, which vanishes at both ends while uncontrolled
                hit = (strategy.rho is not None and seminorm_h1(stepper.y_full(), plant.h) <= strategy.rho) or (
                    strategy.T1 is not None and t >= strategy.T1 - 0.5 * dt)
                if hit:
                    T1 = t
                    stepper.reset(stepper.y_full()[1:-1].copy(), 0.0, controlled=True)
                    reduced[-1] = stepper.reduced_state()
        if step == steps:
            break
        stepper.step()
    return _assemble(rows, modes, reduced, checkpoints, T1, config, plant)


def _assemble(rows, modes, reduced, checkpoints, T1, config, plant):
    red = None
    if plant.design is not None:
        red = np.array([r if r is not None else np.full(plant.N + 1, np.nan) for r in reduced])
    meta = {
        "M": config.M,
        "dt": config.dt,
        "T_end": config.T_end,
        "form": config.form,
        "strategy": config.strategy.name,
        "q": config.problem.q,
        "delta": config.problem.delta,
        "nonlinearity": config.problem.nonlinearity.describe(),
    }
    return Trajectory(np.array(rows), np.array(modes).reshape(len(rows), plant.record_modes), red, checkpoints, T1,
                      meta)


def _snapshot(plant: _Plant, stepper, t: float):
    u = stepper.u
    y = stepper.y_full()
    w = y.copy()
    w[1:-1] -= plant.lift * u
    w[0] = 0.0
    h = plant.h
    l2_y = math.sqrt(np.trapezoid(y * y, dx=h))
    semi_y = seminorm_h1(y, h)
    l2_w = math.sqrt(h * w[1:-1] @ w[1:-1])
    h1_w = seminorm_h1(w, h)
    V = math.nan
    if plant.cert is not None:
        Y = np.concatenate([[u], plant.phi_V @ w[1:-1]])
        V = lyapunov_value(plant.P, Y, plant.op.energy(w), plant.lam_V)
    row = np.array([t, u, l2_y, l2_y + semi_y, float(np.max(np.abs(y))), l2_w, h1_w, V])
    return row, plant.phi_rec @ w[1:-1]


class _Stepper:
    """Shared AB2 bookkeeping; subclasses supply the explicit right-hand side."""

    def __init__(self, plant: _Plant, dt: float):
        self.p, self.dt = plant, dt

    def reset(self, interior, u, controlled):
        self.u = float(u)
        self.controlled = bool(controlled) and self.p.design is not None
        self._set_interior(interior)
        self.prev = None  # explicit terms of the previous step
        self.Y = None
        if self.controlled:
            self.Y = np.concatenate([[self.u], self.p.phi_ctl @ self.w_interior()])
            self.Y_prev = None

    def feedback(self, w_int) -> float:
        if not self.controlled:
            return 0.0
        return float(self.p.K @ np.concatenate([[self.u], self.p.phi_ctl @ w_int]))

    def reduced_state(self):
        return None if self.Y is None else self.Y.copy()

    def _ab2(self, now, prev):
        return now if prev is None else 1.5 * now - 0.5 * prev

    def _advance_reduced(self, f_int):
        """The modal ODE ``Y' = (A0 + B0 K) Y + (0, <f, phi_n>)`` under the same splitting."""
        p = self.p
        v = p.K @ self.Y
        expl = np.concatenate([[v], p.a_n * self.Y[0] + p.b_n * v + p.phi_ctl @ f_int])
        rhs = self._ab2(expl, self.Y_prev)
        self.Y_prev = expl
        half = 0.5 * self.dt * p.mu
        modes = ((1.0 + half) * self.Y[1:] + self.dt * rhs[1:]) / (1.0 - half)
        self.Y = np.concatenate([[self.Y[0] + self.dt * rhs[0]], modes])


class _WStepper(_Stepper):
    def _set_interior(self, y_int):
        self.w = y_int - self.p.lift * self.u

    def w_interior(self):
        return self.w

    def y_full(self):
        y = np.empty(self.p.grid.node_count)
        y[0], y[-1] = self.u, 0.0
        y[1:-1] = self.w + self.p.lift * self.u
        return y

    def step(self):
        p, dt = self.p, self.dt
        y = self.y_full()
        f_int = p.nl.interior(y, p.h)
        v = self.feedback(self.w)
        expl = f_int
        if self.controlled:
            expl = expl + p.source * self.u - p.lift * v
        now = (expl, v)
        e = self._ab2(now[0], None if self.prev is None else self.prev[0])
        dv = self._ab2(now[1], None if self.prev is None else self.prev[1])
        if self.controlled:
            self._advance_reduced(f_int)
        self.w = p.solve(p.rhs_mat @ self.w + dt * e)
        self.u = self.u + dt * dv if self.controlled else 0.0
        self.prev = now


class _YStepper(_Stepper):
    def _set_interior(self, y_int):
        self.y = y_int

    def w_interior(self):
        return self.y - self.p.lift * self.u

    def y_full(self):
        y = np.empty(self.p.grid.node_count)
        y[0], y[-1] = self.u, 0.0
        y[1:-1] = self.y
        return y

    def step(self):
        p, dt = self.p, self.dt
        f_int = p.nl.interior(self.y_full(), p.h)
        w_int = self.w_interior()
        v = self.feedback(w_int)
        dv = self._ab2(v, None if self.prev is None else self.prev[1])
        e = self._ab2(f_int, None if self.prev is None else self.prev[0])
        if self.controlled:
            self._advance_reduced(f_int)
        u_new = self.u + dt * dv if self.controlled else 0.0
        rhs = p.rhs_mat @ self.y + dt * e
        rhs[0] += dt * p.beta * 0.5 * (self.u + u_new)  # trapezoidal boundary coupling
        self.y = p.solve(rhs)
        self.u = u_new
        self.prev = (f_int, v)


@dataclass(frozen=True)
class ClosedLoopState:
    """``w`` (vanishing at both ends), boundary value ``u`` and time ``t``.

    ``history`` carries the explicit terms of the previous step for the
    two-step scheme; ``None`` means the next step starts with Euler.
    """

    w: GridFunction
    u: float
    t: float = 0.0
    history: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        v = self.w.values
        if v[0] != 0.0 or v[-1] != 0.0:
            raise ValueError("w must vanish at both ends")

    @property
    def y(self) -> GridFunction:
        return GridFunction(self.w.grid, self.w.values + (1.0 - self.w.grid.nodes) * self.u)


def imex_step(state: ClosedLoopState, dt: float, problem: ProblemSpec, basis: SpectralBasis,
              design: ControllerDesign | None = None, mode: str = "closed") -> ClosedLoopState:
    """Advance ``(w, u)`` by one step of the W-form scheme.

    ``mode="open"`` forces ``K = 0`` and ``u = 0``. Each call refactorises the
    implicit matrix; :func:`simulate` is the efficient path for many steps.
    """
    if mode not in ("open", "closed"):
        raise ValueError(f"mode must be 'open' or 'closed', got {mode!r}")
    closed = mode == "closed"
    if closed and design is None:
        raise ValueError("closed-loop step requires a controller design")
    cfg = SimConfig(problem, M=basis.grid.M, dt=dt, T_end=dt, strategy=AlwaysOn() if closed else OpenLoop())
    plant = _Plant(cfg, basis, design if closed else None, None, 1)
    stepper = _WStepper(plant, dt)
    stepper.reset(state.y.values[1:-1].copy(), state.u if closed else 0.0, controlled=closed)
    stepper.prev = state.history
    with np.errstate(over="ignore", invalid="ignore"):
        stepper.step()
    w = np.zeros(basis.grid.node_count)
    w[1:-1] = stepper.w
    if not (np.all(np.isfinite(w)) and math.isfinite(stepper.u)) or np.max(np.abs(w)) > BLOWUP:
        raise BlowUpError(f"blow-up at t={state.t + dt:.6g}", None, state.t + dt)
    return ClosedLoopState(GridFunction(basis.grid, w), float(stepper.u), state.t + dt, stepper.prev)


def with_strategy(config: SimConfig, strategy) -> SimConfig:
    return replace(config, strategy=strategy)
