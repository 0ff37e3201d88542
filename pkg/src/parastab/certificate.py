"""Lyapunov certificate for the closed loop.

The reduced state is extended to ``Y = (u, w_1, ..., w_Ntilde)`` with the block
lower-triangular matrix ``F``; ``P`` solves ``F^T P + P F + 2 delta P = -I`` and
``V = Y^T P Y + sum_{n > Ntilde} lambda_n w_n^2``. The truncation level
``Ntilde`` is the smallest one satisfying both scalar LMI conditions, after
which the smallness level ``sigma``, the radius ``rho`` and the overshoot
constant ``M_hat`` follow in closed form.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from ._validation import CertificateError
from .controller import ControllerDesign, ModalCoefficients, source_profile
from .sturm_liouville import CoefficientField, SobolevConstants, SpectralBasis

DIRECT_SOLVE_MAX = 40  # largest matrix order solved by dense linearisation
SIGMA_MARGIN = 1e-6


@dataclass(frozen=True)
class ExtendedMatrix:
    F: np.ndarray
    N: int
    Ntilde: int

    @property
    def top_left(self) -> np.ndarray:
        return self.F[: self.N + 1, : self.N + 1]

    @property
    def bottom_left(self) -> np.ndarray:
        return self.F[self.N + 1:, : self.N + 1]

    @property
    def A2(self) -> np.ndarray:
        return self.F[self.N + 1:, self.N + 1:]


def build_extended_matrix(design: ControllerDesign, coeffs: ModalCoefficients, basis: SpectralBasis, q: float,
                          Ntilde: int) -> ExtendedMatrix:
    N = design.N
    if Ntilde <= N:
        raise ValueError(f"Ntilde={Ntilde} must exceed N={N}")
    if Ntilde > min(coeffs.count, basis.mode_count):
        raise ValueError(f"insufficient modes: Ntilde={Ntilde} needs {Ntilde} resolved modes")
    F = np.zeros((Ntilde + 1, Ntilde + 1))
    F[: N + 1, : N + 1] = design.closed_loop
    tail = slice(N, Ntilde)
    F[N + 1:, 0] = coeffs.a_coeffs[tail]
    F[N + 1:, : N + 1] += np.outer(coeffs.b_coeffs[tail], design.K)
    F[N + 1:, N + 1:] = np.diag(q - basis.lambdas[tail])
    return ExtendedMatrix(F, N, Ntilde)


@dataclass(frozen=True)
class LyapunovSolution:
    P: np.ndarray
    residual: float
    sigma_min: float
    sigma_max: float
    method: str


def _symmetric_pairs(n):
    return [(i, j) for i in range(n) for j in range(i, n)]


def lyapunov_direct(F: np.ndarray, delta: float) -> np.ndarray:
    """Dense solve of the Lyapunov equation in the ``n(n+1)/2`` symmetric unknowns."""
    n = F.shape[0]
    G = F + delta * np.eye(n)
    pairs = _symmetric_pairs(n)
    index = {p: k for k, p in enumerate(pairs)}
    L = np.zeros((len(pairs), len(pairs)))
    rhs = np.zeros(len(pairs))
    # (G^T P + P G)_{ij} = sum_k G_{ki} P_{kj} + P_{ik} G_{kj}
    for row, (i, j) in enumerate(pairs):
        for k in range(n):
            if G[k, i] != 0.0:
                L[row, index[(min(k, j), max(k, j))]] += G[k, i]
            if G[k, j] != 0.0:
                L[row, index[(min(i, k), max(i, k))]] += G[k, j]
        rhs[row] = -1.0 if i == j else 0.0
    p = np.linalg.solve(L, rhs)
    P = np.empty((n, n))
    for k, (i, j) in enumerate(pairs):
        P[i, j] = P[j, i] = p[k]
    return P


def lyapunov_residual(F: np.ndarray, P: np.ndarray, delta: float) -> float:
    R = F.T @ P + P @ F + 2.0 * delta * P + np.eye(F.shape[0])
    return float(np.max(np.abs(R)))


def solve_lyapunov(F, delta: float, method: str = "auto") -> LyapunovSolution:
    """Solve ``F^T P + P F + 2 delta P = -I``.

    ``method="direct"`` linearises the equation in the symmetric unknowns;
    ``"bartels-stewart"`` calls the Schur-based solver in scipy. ``"auto"``
    picks direct for orders up to 40.
    """
    F = F.F if isinstance(F, ExtendedMatrix) else np.asarray(F, dtype=float)
    n = F.shape[0]
    shifted = np.linalg.eigvals(F).real.max() + delta
    if shifted >= 0:
        raise CertificateError(f"F + delta I is not Hurwitz (spectral abscissa {shifted:.4g})")
    if method == "auto":
        method = "direct" if n <= DIRECT_SOLVE_MAX else "bartels-stewart"
    if method == "direct":
        P = lyapunov_direct(F, delta)
    elif method == "bartels-stewart":
        G = F + delta * np.eye(n)
        P = sla.solve_continuous_lyapunov(G.T, -np.eye(n))
    else:
        raise ValueError(f"unknown Lyapunov method {method!r}")
    P = 0.5 * (P + P.T)
    ev = np.linalg.eigvalsh(P)
    if ev[0] <= 0:
        raise CertificateError("Lyapunov solution is not positive definite")
    return LyapunovSolution(P, lyapunov_residual(F, P, delta), float(ev[0]), float(ev[-1]), method)


def lift_l2_squared(grid) -> float:
    return float(np.trapezoid((1.0 - grid.nodes) ** 2, dx=grid.h))


def tail_sums(coeffs: ModalCoefficients, basis: SpectralBasis, design: ControllerDesign, Ntilde: int,
              problem_coeffs: CoefficientField, *, reference: str = "continuous", s2_variant: str = "squared",
              tol: float = 1e-8) -> tuple[float, float]:
    """``S1 = sum_{n > Ntilde} a_n^2`` and ``S2 = |K|^p sum_{n > Ntilde} b_n^2`` by Parseval complement.

    ``reference="continuous"`` subtracts the partial sums from the trapezoid
    L2 norms of the profiles (certifying the PDE); ``"discrete"`` uses the
    interior-node norm, which is the exact Parseval total of the semi-discrete
    system. ``s2_variant`` selects ``p = 2`` (``"squared"``) or ``p = 1`` (``"literal"``).
    """
    grid = basis.grid
    g = source_profile(problem_coeffs, grid, coeffs.q)
    lift = 1.0 - grid.nodes
    if reference == "continuous":
        g2 = float(np.trapezoid(g * g, dx=grid.h))
        d2 = lift_l2_squared(grid)
    elif reference == "discrete":
        g2 = float(grid.h * g[1:-1] @ g[1:-1])
        d2 = float(grid.h * lift[1:-1] @ lift[1:-1])
    else:
        raise ValueError(f"unknown tail reference {reference!r}")
    s1 = g2 - float(np.sum(coeffs.a_coeffs[:Ntilde] ** 2))
    sb = d2 - float(np.sum(coeffs.b_coeffs[:Ntilde] ** 2))
    scale = max(1.0, g2, d2)
    for name, val in (("S1", s1), ("sum b_n^2", sb)):
        if val < -tol * scale:
            raise CertificateError(f"negative Parseval complement for {name} ({val:.3g}): quadrature/basis mismatch")
    s1, sb = max(s1, 0.0), max(sb, 0.0)
    knorm = float(np.linalg.norm(design.K))
    if s2_variant == "squared":
        factor = knorm**2
    elif s2_variant == "literal":
        factor = knorm
    else:
        raise ValueError(f"unknown S2 variant {s2_variant!r}")
    return s1, sb * factor


def condition_one(S1: float, S2: float, sigma_max: float, Ntilde: int) -> float:
    """Largest eigenvalue of ``(-1 + 2 S1 + 2 S2 + 1/Nt) I + P^T P / Nt``."""
    return -1.0 + 2.0 * S1 + 2.0 * S2 + 1.0 / Ntilde + sigma_max**2 / Ntilde


def condition_two(q: float, delta: float, lam_next: float, Ntilde: int) -> float:
    """``2q + 2 delta - lambda + lambda/Nt + 1/Nt`` at ``lambda = lambda_{Nt+1}``.

    The expression decreases in ``lambda`` for ``Nt >= 2``, so the first tail
    mode is the binding one.
    """
    return 2.0 * q + 2.0 * delta - lam_next + lam_next / Ntilde + 1.0 / Ntilde


@dataclass(frozen=True)
class NtildeSelection:
    Ntilde: int
    extended: ExtendedMatrix
    lyapunov: LyapunovSolution
    S1: float
    S2: float
    cond1: float
    cond2: float

    @property
    def lmi_margin(self) -> float:
        return max(self.cond1, self.cond2)


def _evaluate(design, coeffs, basis, q, delta, Nt, problem_coeffs, reference, s2_variant, method):
    ext = build_extended_matrix(design, coeffs, basis, q, Nt)
    lyap = solve_lyapunov(ext, delta, method)
    S1, S2 = tail_sums(coeffs, basis, design, Nt, problem_coeffs, reference=reference, s2_variant=s2_variant)
    c1 = condition_one(S1, S2, lyap.sigma_max, Nt)
    c2 = condition_two(q, delta, float(basis.lambdas[Nt]), Nt)
    return NtildeSelection(Nt, ext, lyap, S1, S2, c1, c2)


def select_ntilde(design: ControllerDesign, coeffs: ModalCoefficients, basis: SpectralBasis, q: float, delta: float,
                  problem_coeffs: CoefficientField, *, cap: int | None = None, reference: str = "continuous",
                  s2_variant: str = "squared", method: str = "auto") -> NtildeSelection:
    """Smallest ``Ntilde`` in ``(N, cap]`` meeting both truncation conditions."""
    limit = min(coeffs.count, basis.mode_count) - 1  # lambda_{Nt+1} must be resolved
    cap = limit if cap is None else min(cap, limit)
    last = None
    for Nt in range(design.N + 1, cap + 1):
        # sigma_max^2 / Nt >= 0, so a positive remainder rules Nt out without solving for P
        S1, S2 = tail_sums(coeffs, basis, design, Nt, problem_coeffs, reference=reference, s2_variant=s2_variant)
        if -1.0 + 2.0 * S1 + 2.0 * S2 + 1.0 / Nt > 0.0 and Nt < cap:
            continue
        last = _evaluate(design, coeffs, basis, q, delta, Nt, problem_coeffs, reference, s2_variant, method)
        if last.cond1 <= 0.0 and last.cond2 <= 0.0:
            return last
    if last is None:
        raise CertificateError(f"no admissible Ntilde: cap {cap} <= N={design.N}")
    raise CertificateError(
        f"no Ntilde <= {cap} satisfies the truncation conditions "
        f"(at Ntilde={cap}: cond1 slack {last.cond1:.4g}, cond2 slack {last.cond2:.4g})")


def smallness_level(envelope: Callable[[float], float], Ntilde: int, lam_Nt: float, C0: float,
                    margin: float = SIGMA_MARGIN, samples: int = 64) -> float:
    """Largest ``sigma`` with ``Nt (1 + lambda_Nt) C0 c(sigma)^2 <= (1 - margin) / Nt`` (bisection).

    Returns ``inf`` for an identically zero envelope (linear problem).
    """
    bound = (1.0 - margin) / (Ntilde**2 * (1.0 + lam_Nt) * C0)

    def excess(s):
        return envelope(s) ** 2 - bound

    probe = np.geomspace(1e-12, 1e6, samples)
    vals = np.array([envelope(s) for s in probe])
    if np.all(vals == 0.0):
        return math.inf
    if np.any(np.diff(vals) <= 0) or envelope(0.0) != 0.0:
        raise ValueError("growth envelope must be strictly increasing with c(0) = 0")
    lo, hi = 0.0, 1.0
    while excess(hi) <= 0:
        hi *= 2.0
        if hi > 1e12:
            return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) <= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return lo


def overshoot_constant(consts: SobolevConstants, s_min: float, s_max: float, lam1: float, lam_Nt: float) -> float:
    upper = consts.k2 * max(s_max, max(s_max / lam1, 1.0))
    lower = consts.k1 * min(s_min, min(s_min / lam_Nt, 1.0))
    return math.sqrt(upper / lower)


def theoretical_sigma_bounds(ext: ExtendedMatrix, design: ControllerDesign, coeffs: ModalCoefficients,
                             basis: SpectralBasis, q: float, delta: float) -> tuple[float, float]:
    """Bounds ``sigma_1 >= sigma_max(P)`` and ``sigma_2 <= sigma_min(P)`` built from the matrix blocks.

    ``sigma_1 = M3^2 int (1+t)^2 e^{-2 delta t} dt`` with ``M3`` sampled as
    ``sup_t ||e^{(F + delta I)t}|| e^{delta t} / (1 + t)``.
    """
    n = ext.F.shape[0]
    G = ext.F + delta * np.eye(n)
    ts = np.linspace(0.0, 40.0 / delta, 801)
    M3 = max(np.linalg.norm(sla.expm(G * t), 2) * math.exp(delta * t) / (1.0 + t) for t in ts)
    a = 2.0 * delta
    sigma1 = M3**2 * (1.0 / a + 2.0 / a**2 + 2.0 / a**3)
    M2 = float(np.sum(coeffs.a_coeffs**2)) + float(np.linalg.norm(design.K)) * (1.0 + float(np.sum(coeffs.b_coeffs**2)))
    top = np.linalg.norm(design.closed_loop + delta * np.eye(design.N + 1), 2)
    sigma2 = 1.0 / (4.0 * (max(top, basis.lambdas[ext.Ntilde - 1] - q + delta) + M2))
    return float(sigma1), float(sigma2)


@dataclass(frozen=True)
class StabilityCertificate:
    design: ControllerDesign
    selection: NtildeSelection
    constants: SobolevConstants
    lambdas: np.ndarray = field(repr=False)  # lambda_1 .. lambda_{Ntilde+1}
    sigma: float
    rho: float
    M_hat: float
    M: float
    M_hat_theory: float
    sigma_bounds: tuple[float, float]
    delta: float
    q: float
    reference: str
    s2_variant: str

    @property
    def Ntilde(self) -> int:
        return self.selection.Ntilde

    @property
    def P(self) -> np.ndarray:
        return self.selection.lyapunov.P

    @property
    def lmi_threshold(self) -> float:
        return 1.0 / self.Ntilde

    def lmi_value(self, linf: float, envelope: Callable[[float], float]) -> float:
        """``Nt (1 + lambda_Nt) C0 c(linf)^2``, to be kept below ``1/Nt`` along trajectories."""
        lam_Nt = float(self.lambdas[self.Ntilde - 1])
        return self.Ntilde * (1.0 + lam_Nt) * self.constants.C0 * envelope(linf) ** 2

    def to_dict(self) -> dict:
        sel = self.selection
        return {
            "N": self.design.N,
            "Ntilde": self.Ntilde,
            "K": self.design.K.tolist(),
            "k": self.design.k_scalar,
            "P": self.P.ravel().tolist(),
            "sigma_min": sel.lyapunov.sigma_min,
            "sigma_max": sel.lyapunov.sigma_max,
            "S1": sel.S1,
            "S2": sel.S2,
            "C0": self.constants.C0,
            "sigma": _finite_or_none(self.sigma),
            "rho": _finite_or_none(self.rho),
            "M_hat": self.M_hat,
            "M": self.M,
            "lmi_margins": {"cond1": sel.cond1, "cond2": sel.cond2},
            "lyapunov_residual": sel.lyapunov.residual,
            "M_hat_theory": self.M_hat_theory,
            "delta": self.delta,
            "tail_reference": self.reference,
            "s2_variant": self.s2_variant,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _finite_or_none(x):
    return float(x) if math.isfinite(x) else None


def compute_smallness(design: ControllerDesign, selection: NtildeSelection, basis: SpectralBasis,
                      consts: SobolevConstants, envelope: Callable[[float], float], coeffs: ModalCoefficients,
                      q: float, delta: float, *, reference: str = "continuous", s2_variant: str = "squared",
                      with_theory: bool = True) -> StabilityCertificate:
    Nt = selection.Ntilde
    lam = basis.lambdas
    sigma = smallness_level(envelope, Nt, float(lam[Nt - 1]), consts.C0)
    lyap = selection.lyapunov
    M_hat = overshoot_constant(consts, lyap.sigma_min, lyap.sigma_max, float(lam[0]), float(lam[Nt - 1]))
    rho = sigma / (consts.c_tilde2**2 * consts.d_norm * M_hat)
    if with_theory:
        s1, s2 = theoretical_sigma_bounds(selection.extended, design, coeffs, basis, q, delta)
        M_hat_theory = overshoot_constant(consts, s2, s1, float(lam[0]), float(lam[Nt - 1]))
    else:
        s1 = s2 = M_hat_theory = math.nan
    return StabilityCertificate(
        design=design, selection=selection, constants=consts, lambdas=lam[: Nt + 1].copy(), sigma=sigma, rho=rho,
        M_hat=M_hat, M=consts.d_norm * M_hat, M_hat_theory=M_hat_theory, sigma_bounds=(s1, s2), delta=float(delta),
        q=float(q), reference=reference, s2_variant=s2_variant)


def certify(design: ControllerDesign, coeffs: ModalCoefficients, basis: SpectralBasis, problem_coeffs: CoefficientField,
            consts: SobolevConstants, envelope: Callable[[float], float], q: float, delta: float, *,
            cap: int | None = None, reference: str = "continuous", s2_variant: str = "squared",
            with_theory: bool = True) -> StabilityCertificate:
    selection = select_ntilde(design, coeffs, basis, q, delta, problem_coeffs, cap=cap, reference=reference,
                              s2_variant=s2_variant)
    return compute_smallness(design, selection, basis, consts, envelope, coeffs, q, delta, reference=reference,
                             s2_variant=s2_variant, with_theory=with_theory)


def lyapunov_value(P: np.ndarray, Y: np.ndarray, energy: float, lambdas: np.ndarray) -> float:
    """``Y^T P Y + sum_{n > Ntilde} lambda_n w_n^2``.

    The tail is taken as ``<A w, w> - sum_{n <= Ntilde} lambda_n w_n^2`` with
    ``Y = (u, w_1, ..., w_Ntilde)``, which is exact for the discrete operator.
    """
    modes = Y[1:]
    tail = energy - float(np.dot(lambdas[: len(modes)], modes * modes))
    return float(Y @ P @ Y) + max(tail, 0.0)
