"""Nonlinear terms ``f(y)`` with their growth envelopes ``c``.

The envelope bounds ``||f(y)||_{L2} <= c(||y||_inf) ||y||_{H1}``; it must be
strictly increasing with ``c(0) = 0`` (the zero term uses ``c = 0``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .sturm_liouville import Grid, GridFunction, norm

KINDS = ("zero", "burgers", "allen_cahn", "custom")


@dataclass(frozen=True)
class Nonlinearity:
    """``kind`` is one of ``zero``, ``burgers``, ``allen_cahn``, ``custom``.

    ``coef`` is the cubic coefficient for Allen-Cahn. A custom term supplies
    ``func(x, y) -> f`` on nodal arrays and its envelope ``envelope_func``.
    """

    kind: str = "zero"
    coef: float = 1.0
    func: Callable | None = None
    envelope_func: Callable | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown nonlinearity {self.kind!r}; expected one of {KINDS}")
        if self.kind == "custom" and (self.func is None or self.envelope_func is None):
            raise ValueError("custom nonlinearity needs both func and envelope_func")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def burgers(cls):
        return cls("burgers")

    @classmethod
    def allen_cahn(cls, coef: float = 1.0):
        return cls("allen_cahn", float(coef))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def envelope(self, s: float) -> float:
        s = abs(float(s))
        if self.kind == "zero":
            return 0.0
        if self.kind == "burgers":
            return s
        if self.kind == "allen_cahn":
            return abs(self.coef) * s * s
        return float(self.envelope_func(s))

    def interior(self, y: np.ndarray, h: float) -> np.ndarray:
        """``f`` at the interior nodes from full nodal values (boundary values included)."""
        if self.kind == "zero":
            return np.zeros(len(y) - 2)
        if self.kind == "burgers":
            # skew-symmetric split: -(1/3)(y Dy + D(y^2)), D centred
            yi = y[1:-1]
            dy = (y[2:] - y[:-2]) / (2.0 * h)
            dy2 = (y[2:] ** 2 - y[:-2] ** 2) / (2.0 * h)
            return -(yi * dy + dy2) / 3.0
        if self.kind == "allen_cahn":
            return -self.coef * y[1:-1] ** 3
        x = np.linspace(0.0, 1.0, len(y))
        return np.asarray(self.func(x, y), dtype=float)[1:-1]

    def evaluate(self, y: GridFunction) -> GridFunction:
        return GridFunction.from_interior(y.grid, self.interior(y.values, y.grid.h))

    def describe(self) -> dict:
        if self.kind == "allen_cahn":
            return {"kind": self.kind, "lambda": self.coef}
        return {"kind": self.kind}


def evaluate_nonlinearity(nl: Nonlinearity, y: GridFunction) -> GridFunction:
    return nl.evaluate(y)


@dataclass(frozen=True)
class EnvelopeReport:
    max_ratio: float
    samples: int
    passed: bool

    def to_dict(self) -> dict:
        return {"max_ratio": self.max_ratio, "samples": self.samples, "pass": self.passed}


def random_h10_field(grid: Grid, rng: np.random.Generator, modes: int = 24, decay: float = 1.0) -> np.ndarray:
    """Random sine series with coefficients damped like ``n^{-decay-1}``; zero at both ends."""
    n = np.arange(1, modes + 1)
    c = rng.standard_normal(modes) / n ** (decay + 1.0)
    vals = np.sin(np.pi * np.outer(grid.nodes, n)) @ c
    vals[0] = vals[-1] = 0.0
    return vals


def growth_envelope_check(nl: Nonlinearity, samples: int = 200, grid: Grid | None = None, seed: int = 0,
                          amplitudes=(1e-3, 1e1), tol: float = 1e-6) -> EnvelopeReport:
    """Sample ``||f(y)|| / (c(||y||_inf) ||y||_{H1})`` over random fields across amplitudes."""
    if samples < 100:
        raise ValueError("growth envelope check needs at least 100 samples")
    grid = Grid(200) if grid is None else grid
    rng = np.random.default_rng(seed)
    scales = np.geomspace(amplitudes[0], amplitudes[1], samples)
    worst = 0.0
    for s in scales:
        vals = random_h10_field(grid, rng)
        vals *= s / max(np.max(np.abs(vals)), 1e-300)
        y = GridFunction(grid, vals)
        fy = norm(nl.evaluate(y), "L2")
        denom = nl.envelope(norm(y, "Linf")) * norm(y, "H1")
        if fy == 0.0:
            continue
        ratio = math.inf if denom == 0.0 else fy / denom
        worst = max(worst, ratio)
    return EnvelopeReport(float(worst), samples, bool(worst <= 1.0 + tol))
