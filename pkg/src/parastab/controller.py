"""Finite-dimensional reduction, controllability and pole placement.

The boundary value ``u`` is lifted into the interior with ``(1 - x) u`` and the
homogenised state ``w = y - (1 - x) u`` is expanded in the eigenbasis. The
first ``N`` modes together with ``u`` form the reduced state
``Y_N = (u, w_1, ..., w_N)`` driven by ``dY/dt = (A0 + B0 K) Y + R``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import UncontrollableError, check_scalar
from .sturm_liouville import CoefficientField, Grid, GridFunction, SpectralBasis

IDENTITY_TOL = 0.05


def lifting_profile(grid: Grid) -> GridFunction:
    return GridFunction(grid, 1.0 - grid.nodes)


def source_profile(coeffs: CoefficientField, grid: Grid, q: float) -> np.ndarray:
    """Nodal values of ``q D(1) - A D(1) = (q + b)(1 - x) - a'``."""
    x = grid.nodes
    return (q + np.asarray(coeffs.b(x), dtype=float)) * (1.0 - x) - coeffs.derivative_of_a(x)


@dataclass(frozen=True)
class ModalCoefficients:
    a_coeffs: np.ndarray
    b_coeffs: np.ndarray
    trace: np.ndarray  # a_n + (q - lambda_n) b_n
    boundary_flux: np.ndarray  # a(0) * phi_n'(0)
    q: float

    @property
    def count(self) -> int:
        return len(self.a_coeffs)

    @property
    def identity_defect(self) -> np.ndarray:
        """Relative mismatch of ``|a_n + (q - lambda_n) b_n|`` against ``a(0)|phi_n'(0)|``."""
        return np.abs(np.abs(self.trace) - np.abs(self.boundary_flux)) / np.abs(self.boundary_flux)


def modal_coefficients(basis: SpectralBasis, coeffs: CoefficientField, q: float, m: int | None = None,
                       *, check_count: int | None = 10) -> ModalCoefficients:
    """Quadrature of ``a_n = <(q+b)(1-x) - a', phi_n>`` and ``b_n = -<1-x, phi_n>``.

    The boundary-trace identity is verified on the first ``check_count`` modes;
    a defect beyond 5% means the basis is under-resolved.
    """
    m = basis.mode_count if m is None else m
    if m > basis.mode_count:
        raise ValueError(f"m={m} exceeds resolved mode count {basis.mode_count}")
    grid = basis.grid
    a_n = basis.coefficients(source_profile(coeffs, grid, q), m)
    b_n = -basis.coefficients(1.0 - grid.nodes, m)
    trace = a_n + (q - basis.lambdas[:m]) * b_n
    flux = float(coeffs.a(np.array([0.0]))[0]) * basis.dphi0[:m]
    out = ModalCoefficients(a_n, b_n, trace, flux, float(q))
    k = m if check_count is None else min(m, check_count)
    worst = float(out.identity_defect[:k].max()) if k else 0.0
    if worst > IDENTITY_TOL:
        raise ValueError(f"boundary-trace identity defect {worst:.3%} exceeds 5%: basis under-resolved")
    return out


def select_mode_count(basis: SpectralBasis, q: float, delta: float) -> int:
    """Smallest admissible ``N >= 2`` with ``q - lambda_n < -2 delta`` for all ``n > N``."""
    check_scalar(delta, "delta", positive=True)
    slow = q - basis.lambdas >= -2.0 * delta
    if slow[-1]:
        raise ValueError("basis too small: the last resolved mode still has q - lambda >= -2 delta")
    return max(2, int(np.count_nonzero(slow)))


@dataclass(frozen=True)
class ReducedSystem:
    A0: np.ndarray
    B0: np.ndarray
    N: int
    q: float
    delta: float
    lambdas: np.ndarray  # lambda_1..lambda_N
    dphi0: np.ndarray
    a0: float  # a(0)


def build_reduced_system(coeffs: ModalCoefficients, basis: SpectralBasis, q: float, delta: float, N: int,
                         a_at_zero: float = 1.0) -> ReducedSystem:
    if N > coeffs.count:
        raise ValueError(f"N={N} exceeds the {coeffs.count} available modal coefficients")
    lam = basis.lambdas[:N]
    A0 = np.zeros((N + 1, N + 1))
    A0[1:, 0] = coeffs.a_coeffs[:N]
    A0[1:, 1:] = np.diag(q - lam)
    B0 = np.concatenate([[1.0], coeffs.b_coeffs[:N]])
    return ReducedSystem(A0, B0, N, float(q), float(delta), lam.copy(), basis.dphi0[:N].copy(), float(a_at_zero))


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    cols = [np.asarray(B, dtype=float)]
    for _ in range(len(cols[0]) - 1):
        cols.append(A @ cols[-1])
    return np.column_stack(cols)


@dataclass(frozen=True)
class KalmanReport:
    rank: int
    det: float
    closed_form: float | None
    condition: float

    @property
    def relative_gap(self) -> float:
        if self.closed_form is None or self.det == 0:
            return math.nan
        return abs(self.det - self.closed_form) / abs(self.det)


def vandermonde(values) -> float:
    v = np.asarray(values, dtype=float)
    out = 1.0
    for j in range(len(v)):
        for i in range(j):
            out *= v[j] - v[i]
    return out


def kalman_controllability(A0: np.ndarray, B0: np.ndarray, system: ReducedSystem | None = None,
                           tol: float = 1e-12) -> KalmanReport:
    """Rank and determinant of ``[B0, A0 B0, ..., A0^N B0]``.

    When the structured reduced system is supplied, the closed form
    ``prod_j a(0) phi_j'(0) * VdM(q - lambda_1, ..., q - lambda_N)`` is returned
    for cross-checking (sign per the eigenfunction orientation ``phi_j'(0) > 0``).
    """
    C = controllability_matrix(A0, B0)
    with np.errstate(over="ignore"):  # large N overflows the determinant; the rank test still applies
        det = float(np.linalg.det(C))
    svals = np.linalg.svd(C, compute_uv=False)
    rank = int(np.sum(svals > tol * max(1.0, svals[0])))
    cond = float(svals[0] / svals[-1]) if svals[-1] > 0 else math.inf
    closed = None
    if system is not None:
        with np.errstate(over="ignore"):
            closed = float(np.prod(system.a0 * system.dphi0)) * vandermonde(system.q - system.lambdas)
    return KalmanReport(rank, det, closed, cond)


def _target_poles(system: ReducedSystem, strategy: str) -> tuple[np.ndarray, np.ndarray]:
    """Targets plus a mask of reduced-state entries whose open-loop eigenvalue is kept."""
    delta, N = system.delta, system.N
    if strategy == "shifted":
        return -2.0 * delta - np.arange(1, N + 2, dtype=float), np.zeros(N + 1, dtype=bool)
    if strategy == "preserve":
        open_loop = np.concatenate([[0.0], system.q - system.lambdas])
        keep = open_loop < -2.0 * delta
        keep[0] = False
        targets = open_loop.copy()
        moved = np.flatnonzero(~keep)
        shifts = -2.0 * delta - np.arange(1, len(moved) + 1, dtype=float)
        # shifted targets must stay distinct from the kept ones
        taken = set(np.round(open_loop[keep], 12))
        j = 0
        for idx in moved:
            while round(shifts[j], 12) in taken:
                shifts = shifts - 1.0
            targets[idx] = shifts[j]
            j += 1
        return targets, keep
    raise ValueError(f"unknown pole strategy {strategy!r}")


def ackermann(A: np.ndarray, B: np.ndarray, poles, max_condition: float = 1e12) -> np.ndarray:
    """Gain row ``K`` with ``spec(A + B K) = poles`` for a single input."""
    n = A.shape[0]
    C = controllability_matrix(A, B)
    svals = np.linalg.svd(C, compute_uv=False)
    cond = svals[0] / svals[-1] if svals[-1] > 0 else math.inf
    if cond > max_condition:
        raise UncontrollableError(f"controllability matrix ill-conditioned (cond={cond:.3g})")
    coeffs = np.real(np.poly(np.asarray(poles)))
    pA = np.zeros_like(A)
    for c in coeffs:
        pA = pA @ A + c * np.eye(n)
    e_last = np.zeros(n)
    e_last[-1] = 1.0
    row = np.linalg.solve(C.T, e_last)
    return -(row @ pA)


@dataclass(frozen=True)
class ControllerDesign:
    reduced: ReducedSystem
    K: np.ndarray
    k_scalar: float
    target_poles: np.ndarray
    kalman_det: float
    kalman_closed_form: float | None
    strategy: str

    @property
    def N(self) -> int:
        return self.reduced.N

    @property
    def closed_loop(self) -> np.ndarray:
        return self.reduced.A0 + np.outer(self.reduced.B0, self.K)

    def closed_loop_poles(self) -> np.ndarray:
        return np.sort(np.linalg.eigvals(self.closed_loop).real)

    def to_dict(self, coeffs: ModalCoefficients | None = None) -> dict:
        out = {
            "N": self.N,
            "K": self.K.tolist(),
            "k": self.k_scalar,
            "target_poles": np.sort(self.target_poles).tolist(),
            "kalman_det": self.kalman_det,
            "pole_strategy": self.strategy,
        }
        if coeffs is not None:
            out["a_coeffs"] = coeffs.a_coeffs[: self.N].tolist()
            out["b_coeffs"] = coeffs.b_coeffs[: self.N].tolist()
        return out


def place_poles(system: ReducedSystem, strategy: str = "preserve", kalman_tol: float = 1e-12) -> ControllerDesign:
    """Assign the closed-loop spectrum of ``A0 + B0 K``.

    ``strategy="shifted"`` targets ``-2 delta - 1, ..., -2 delta - (N + 1)``.
    ``strategy="preserve"`` keeps every open-loop eigenvalue already below
    ``-2 delta`` (zero gain on that mode) and shifts only the others; this keeps
    ``|K|`` and ``||P||`` small enough for a finite certificate.
    """
    report = kalman_controllability(system.A0, system.B0, system)
    if report.rank < system.N + 1 or abs(report.det) <= kalman_tol:
        raise UncontrollableError(
            f"uncontrollable at this resolution: rank {report.rank} of {system.N + 1}, det={report.det:.3g}")
    targets, keep = _target_poles(system, strategy)
    active = np.flatnonzero(~keep)
    K = np.zeros(system.N + 1)
    sub_A = system.A0[np.ix_(active, active)]
    K[active] = ackermann(sub_A, system.B0[active], targets[active])
    closed = system.A0 + np.outer(system.B0, K)
    got = np.sort(np.linalg.eigvals(closed).real)
    want = np.sort(targets)
    if np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want))) > 1e-6:
        raise UncontrollableError("pole placement lost accuracy; closed-loop spectrum misses the targets")
    k_scalar = scalar_gain(K, system.B0[1:])
    return ControllerDesign(system, K, k_scalar, targets, report.det, report.closed_form, strategy)


def scalar_gain(K: np.ndarray, b_coeffs: np.ndarray) -> float:
    """``k = k_0 + sum_j k_j b_j``: the memory-kernel exponent of the boundary feedback."""
    K = np.asarray(K, dtype=float).ravel()
    return float(K[0] + K[1:] @ np.asarray(b_coeffs, dtype=float)[: len(K) - 1])


def scalar_gain_k(design: ControllerDesign, coeffs: ModalCoefficients) -> float:
    return scalar_gain(design.K, coeffs.b_coeffs)
