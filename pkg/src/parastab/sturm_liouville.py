"""Discrete Sturm-Liouville operator ``A f = -((a f')' + b f)`` with Dirichlet ends.

Second-order conservative finite differences on a uniform grid of ``[0, 1]``,
trapezoid quadrature for every inner product. Because the assembled matrix is
symmetric, the discrete eigenvectors are exactly orthonormal in the discrete
inner product ``h * sum(f g)`` over interior nodes, which is also what the
trapezoid rule gives for functions vanishing at both ends.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ._validation import HypothesisError, check_finite_vector, check_index, check_scalar

LIFT_NORM = (3.0 + math.sqrt(3.0)) / 3.0  # ||1-x||_{L2} + ||(1-x)'||_{L2}
POINCARE = math.pi**2


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``node_count = M + 1`` nodes on ``[0, 1]``."""

    M: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        check_scalar(self.M, "M", integer=True)
        if self.M < 8:
            raise ValueError(f"grid needs M >= 8 intervals, got {self.M}")
        nodes = np.linspace(0.0, 1.0, self.M + 1)
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)

    @property
    def node_count(self) -> int:
        return self.M + 1

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])


@dataclass(frozen=True)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = check_finite_vector(self.values, "values", self.grid.node_count).copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, grid: Grid, func: Callable) -> "GridFunction":
        return cls(grid, np.broadcast_to(func(grid.nodes), grid.nodes.shape).astype(float))

    @classmethod
    def from_interior(cls, grid: Grid, interior, left=0.0, right=0.0) -> "GridFunction":
        return cls(grid, np.concatenate([[left], np.asarray(interior, float), [right]]))

    def __add__(self, other):
        return GridFunction(self.grid, self.values + _values(other))

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - _values(other))

    def __mul__(self, scalar):
        return GridFunction(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


def _values(f):
    return f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=float)


def _as_callable(value) -> Callable:
    if callable(value):
        return value
    c = float(value)
    return lambda x: np.full_like(np.asarray(x, dtype=float), c)


@dataclass(frozen=True)
class CoefficientField:
    """Diffusion ``a(x)`` and potential ``b(x)``; ``a_deriv`` is finite-differenced if omitted."""

    a: Callable
    b: Callable
    a_deriv: Callable | None = None
    description: dict | None = field(default=None, compare=False)

    @classmethod
    def constant(cls, a: float = 1.0, b: float = -1.0) -> "CoefficientField":
        return cls(
            _as_callable(a),
            _as_callable(b),
            _as_callable(0.0),
            description={"constant": {"a": float(a), "b": float(b)}},
        )

    @classmethod
    def polynomial(cls, a_coeffs, b_coeffs) -> "CoefficientField":
        """Coefficients in increasing powers of ``x``."""
        pa = np.polynomial.Polynomial(np.asarray(a_coeffs, dtype=float))
        pb = np.polynomial.Polynomial(np.asarray(b_coeffs, dtype=float))
        return cls(
            pa,
            pb,
            pa.deriv(),
            description={"polynomial": {"a": list(map(float, a_coeffs)), "b": list(map(float, b_coeffs))}},
        )

    def derivative_of_a(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.a_deriv is not None:
            return np.broadcast_to(self.a_deriv(x), x.shape).astype(float)
        eps = 1e-6
        return (np.asarray(self.a(x + eps)) - np.asarray(self.a(x - eps))) / (2 * eps)

    def check(self, grid: Grid) -> None:
        a_vals = np.asarray(self.a(np.concatenate([grid.nodes, grid.midpoints])), dtype=float)
        b_vals = np.asarray(self.b(grid.nodes), dtype=float)
        if not np.all(np.isfinite(a_vals)) or not np.all(np.isfinite(b_vals)):
            raise HypothesisError("coefficients must be finite on the grid")
        if a_vals.min() <= 0:
            raise HypothesisError(f"hypothesis 'min a(x) > 0' violated: min a = {a_vals.min():.6g}")
        if b_vals.max() >= 0:
            raise HypothesisError(f"hypothesis 'max b(x) < 0' violated: max b = {b_vals.max():.6g}")


@dataclass(frozen=True)
class SturmLiouvilleOperator:
    """Symmetric tridiagonal matrix acting on the ``M - 1`` interior nodal values."""

    grid: Grid
    coeffs: CoefficientField
    diag: np.ndarray
    offdiag: np.ndarray
    a_left: float  # a at the first half-cell, couples node 1 to the boundary value

    def toarray(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def tosparse(self) -> sp.csc_matrix:
        return sp.diags([self.offdiag, self.diag, self.offdiag], [-1, 0, 1], format="csc")

    def apply(self, interior: np.ndarray) -> np.ndarray:
        out = self.diag * interior
        out[:-1] += self.offdiag * interior[1:]
        out[1:] += self.offdiag * interior[:-1]
        return out

    def energy(self, f) -> float:
        """``<A f, f>`` in the discrete inner product; equals ``sum_n lambda_n <f, phi_n>^2``."""
        inner = _values(f)[1:-1]
        return float(self.grid.h * inner @ self.apply(inner))


def assemble_operator(coeffs: CoefficientField, grid: Grid) -> SturmLiouvilleOperator:
    coeffs.check(grid)
    h = grid.h
    a_mid = np.asarray(coeffs.a(grid.midpoints), dtype=float)
    b_int = np.asarray(coeffs.b(grid.interior), dtype=float)
    diag = (a_mid[:-1] + a_mid[1:]) / h**2 - b_int
    offdiag = -a_mid[1:-1] / h**2
    return SturmLiouvilleOperator(grid, coeffs, diag, offdiag, float(a_mid[0]))


@dataclass(frozen=True)
class SpectralBasis:
    grid: Grid
    lambdas: np.ndarray
    phi: np.ndarray  # (m, M+1), rows are eigenfunctions including the zero end values
    dphi0: np.ndarray
    operator: SturmLiouvilleOperator = field(repr=False, compare=False)

    @property
    def mode_count(self) -> int:
        return len(self.lambdas)

    def eigenfunction(self, n: int) -> GridFunction:
        check_index(n, self.mode_count)
        return GridFunction(self.grid, self.phi[n - 1])

    def coefficients(self, f, count: int | None = None) -> np.ndarray:
        """All inner products ``<f, phi_n>`` for ``n = 1..count``."""
        count = self.mode_count if count is None else count
        # phi vanishes at both ends, so the trapezoid end weights drop out
        return self.grid.h * (self.phi[:count, 1:-1] @ _values(f)[1:-1])

    def energy(self, f) -> float:
        return self.operator.energy(f)


def _one_sided_derivative(values: np.ndarray, h: float) -> np.ndarray:
    # fourth-order forward difference at x = 0, rows are functions
    v = values
    return (-25 * v[:, 0] + 48 * v[:, 1] - 36 * v[:, 2] + 16 * v[:, 3] - 3 * v[:, 4]) / (12 * h)


def eigendecompose(operator: SturmLiouvilleOperator, m: int, *, resolution_guard: bool = True) -> SpectralBasis:
    """First ``m`` eigenpairs, ascending; eigenfunctions L2-normalised with ``phi_n'(0) > 0``.

    With ``resolution_guard`` the request is limited to ``m <= M/4`` so that the
    discrete eigenpairs approximate the continuous ones; without it any
    ``m <= M - 1`` is allowed (the discrete system is then treated on its own terms).
    """
    grid = operator.grid
    check_scalar(m, "m", integer=True, positive=True)
    limit = grid.M // 4 if resolution_guard else grid.M - 1
    if m > limit:
        raise ValueError(f"m={m} exceeds the resolution limit {limit} for M={grid.M}")
    lam, vecs = sla.eigh_tridiagonal(operator.diag, operator.offdiag, select="i", select_range=(0, m - 1))
    gaps = np.diff(lam)
    if len(gaps) and gaps.min() <= 1e-10 * max(1.0, abs(lam[-1])):
        raise ValueError("eigenvalues are not simple at this resolution; refine the grid")
    phi = np.zeros((m, grid.node_count))
    phi[:, 1:-1] = vecs.T / math.sqrt(grid.h)
    phi *= np.where(phi[:, 1] < 0, -1.0, 1.0)[:, None]
    dphi0 = _one_sided_derivative(phi, grid.h)
    return SpectralBasis(grid, lam, phi, dphi0, operator)


def project(f: GridFunction, basis: SpectralBasis, n: int) -> float:
    check_index(n, basis.mode_count)
    return float(np.trapezoid(_values(f) * basis.phi[n - 1], dx=basis.grid.h))


def inner(f, g, grid: Grid) -> float:
    return float(np.trapezoid(_values(f) * _values(g), dx=grid.h))


def seminorm_h1(values: np.ndarray, h: float) -> float:
    """``||f'||_{L2}`` from cell differences (midpoint rule)."""
    d = np.diff(values) / h
    return float(math.sqrt(h * d @ d))


def norm(f: GridFunction, kind: str = "L2") -> float:
    """Grid norms.

    ``H1_0`` is the seminorm ``||f'||_{L2}`` and requires zero end values;
    ``H1`` is ``||f||_{L2} + ||f'||_{L2}`` for functions with arbitrary end values.
    """
    v, h = f.values, f.grid.h
    if kind == "L2":
        return float(math.sqrt(np.trapezoid(v * v, dx=h)))
    if kind == "Linf":
        return float(np.max(np.abs(v)))
    if kind == "H1_0":
        scale = max(1.0, float(np.max(np.abs(v))))
        if abs(v[0]) > 1e-12 * scale or abs(v[-1]) > 1e-12 * scale:
            raise ValueError("H1_0 norm requested for a function that does not vanish at both ends")
        return seminorm_h1(v, h)
    if kind == "H1":
        return norm(f, "L2") + seminorm_h1(v, h)
    raise ValueError(f"unknown norm kind {kind!r}")


@dataclass(frozen=True)
class SobolevConstants:
    c1: float
    c2: float
    c_tilde2: float
    c3: float
    k1: float
    k2: float
    d_norm: float
    C0: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def sobolev_constants(coeffs: CoefficientField, basis: SpectralBasis) -> SobolevConstants:
    nodes = basis.grid.nodes
    a_vals = np.asarray(coeffs.a(nodes), dtype=float)
    b_vals = np.asarray(coeffs.b(nodes), dtype=float)
    k1 = math.sqrt(a_vals.min())
    k2 = math.sqrt(a_vals.max() + max(0.0, float((-b_vals).max())) / POINCARE)
    root2 = math.sqrt(2.0)
    return SobolevConstants(
        c1=POINCARE,
        c2=root2,
        c_tilde2=root2,
        c3=root2,
        k1=k1,
        k2=k2,
        d_norm=LIFT_NORM,
        C0=2.0 * max(k2**2, LIFT_NORM**2),
    )


def build_basis(coeffs: CoefficientField, grid: Grid, m: int | None = None, *, resolution_guard: bool = True) -> SpectralBasis:
    """Assemble and diagonalise in one call; ``m`` defaults to the resolution limit."""
    if m is None:
        m = grid.M // 4 if resolution_guard else grid.M - 1
    return eigendecompose(assemble_operator(coeffs, grid), m, resolution_guard=resolution_guard)
