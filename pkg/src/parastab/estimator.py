"""scikit-learn style front end.

``RapidStabilizer.fit`` runs the whole design chain (basis, modal
coefficients, pole placement, certificate) and ``transform`` maps nodal fields
to the reduced coordinates ``(u, w_1, ..., w_Ntilde)``.
``DecayRateEstimator`` fits exponential decay to sampled norms.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .analysis import fit_exponential
from .certificate import certify
from .config import coefficients_from_spec
from .controller import build_reduced_system, modal_coefficients, place_poles, select_mode_count
from .nonlinearity import Nonlinearity
from .simulator import ProblemSpec, SimConfig, simulate
from .sturm_liouville import CoefficientField, Grid, build_basis, sobolev_constants


class RapidStabilizer(TransformerMixin, BaseEstimator):
    """Boundary feedback design with a Lyapunov certificate.

    Parameters
    ----------
    q, delta : float
        Reaction coefficient and target decay rate.
    coefficients : dict or CoefficientField, optional
        ``{"constant": {"a": .., "b": ..}}`` or ``{"polynomial": ...}``; defaults to ``a = 1, b = -1``.
    nonlinearity : str
        ``"zero"``, ``"burgers"`` or ``"allen_cahn"`` (cubic coefficient ``nl_coef``).
    M : int
        Grid intervals.
    N : int, optional
        Number of controlled modes; chosen from the spectrum when omitted.
    pole_strategy : {"preserve", "shifted"}
    tail_reference : {"continuous", "discrete"}
        ``"discrete"`` certifies the semi-discrete system and lifts the ``M/4`` mode limit.
    certify : bool
        Skip the certificate when False (design only).
    """

    def __init__(self, q=1.0, delta=1.0, coefficients=None, nonlinearity="burgers", nl_coef=1.0, M=400, N=None,
                 pole_strategy="preserve", tail_reference="continuous", s2_variant="squared", ntilde_cap=None,
                 certify=True, theory_bounds=True):
        self.q = q
        self.delta = delta
        self.coefficients = coefficients
        self.nonlinearity = nonlinearity
        self.nl_coef = nl_coef
        self.M = M
        self.N = N
        self.pole_strategy = pole_strategy
        self.tail_reference = tail_reference
        self.s2_variant = s2_variant
        self.ntilde_cap = ntilde_cap
        self.certify = certify
        self.theory_bounds = theory_bounds

    def _coefficient_field(self) -> CoefficientField:
        c = self.coefficients
        if c is None:
            return CoefficientField.constant(1.0, -1.0)
        if isinstance(c, CoefficientField):
            return c
        return coefficients_from_spec(c)

    def _nonlinearity(self) -> Nonlinearity:
        if isinstance(self.nonlinearity, Nonlinearity):
            return self.nonlinearity
        if self.nonlinearity == "allen_cahn":
            return Nonlinearity.allen_cahn(self.nl_coef)
        return Nonlinearity(self.nonlinearity)

    def fit(self, X=None, y=None):
        """Build the design; ``X`` and ``y`` are ignored."""
        coeffs = self._coefficient_field()
        grid = Grid(int(self.M))
        guard = self.tail_reference != "discrete"
        basis = build_basis(coeffs, grid, resolution_guard=guard)
        modal = modal_coefficients(basis, coeffs, float(self.q))
        N = select_mode_count(basis, float(self.q), float(self.delta)) if self.N is None else int(self.N)
        reduced = build_reduced_system(modal, basis, float(self.q), float(self.delta), N,
                                       a_at_zero=float(coeffs.a(np.array([0.0]))[0]))
        self.problem_ = ProblemSpec(coeffs, float(self.q), self._nonlinearity(), float(self.delta))
        self.basis_ = basis
        self.modal_ = modal
        self.constants_ = sobolev_constants(coeffs, basis)
        self.design_ = place_poles(reduced, self.pole_strategy)
        self.certificate_ = None
        if self.certify:
            self.certificate_ = certify(self.design_, modal, basis, coeffs, self.constants_,
                                        self.problem_.nonlinearity.envelope, float(self.q), float(self.delta),
                                        cap=self.ntilde_cap, reference=self.tail_reference,
                                        s2_variant=self.s2_variant, with_theory=self.theory_bounds)
        self.n_features_in_ = grid.node_count
        return self

    @property
    def n_modes_(self) -> int:
        check_is_fitted(self, "design_")
        return self.certificate_.Ntilde if self.certificate_ is not None else self.design_.N

    def transform(self, X):
        """Rows of nodal ``y`` values to ``(u, <w, phi_1>, ..., <w, phi_K>)`` with ``w = y - (1 - x) u``."""
        check_is_fitted(self, "design_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} nodal values per row, got {X.shape[1]}")
        u = X[:, 0]
        w = X - np.outer(u, 1.0 - self.basis_.grid.nodes)
        modes = np.array([self.basis_.coefficients(row, self.n_modes_) for row in w])
        return np.column_stack([u, modes])

    def lyapunov(self, X) -> np.ndarray:
        """Lyapunov function at each row of nodal values (needs a certificate)."""
        from .certificate import lyapunov_value

        check_is_fitted(self, "certificate_")
        if self.certificate_ is None:
            raise ValueError("fitted without a certificate")
        Y = self.transform(X)
        X = check_array(X, dtype=float)
        op = self.basis_.operator
        out = []
        for row, yv in zip(X, Y):
            w = row - yv[0] * (1.0 - self.basis_.grid.nodes)
            out.append(lyapunov_value(self.certificate_.P, yv, op.energy(w), self.basis_.lambdas))
        return np.array(out)

    def simulate(self, initial=None, T_end=1.0, strategy=None, dt=1e-4, form="w", cadence=100, seed=0,
                 with_lyapunov=True):
        check_is_fitted(self, "design_")
        from .simulator import AlwaysOn

        cfg = SimConfig(self.problem_, M=int(self.M), dt=dt, T_end=T_end, initial=initial,
                        strategy=strategy if strategy is not None else AlwaysOn(), form=form, cadence=cadence,
                        seed=seed)
        cert = self.certificate_ if with_lyapunov else None
        return simulate(cfg, self.design_, cert, self.basis_)


class DecayRateEstimator(RegressorMixin, BaseEstimator):
    """Log-linear fit ``norm(t) ~ exp(c - rate t)``.

    ``fit(t, norms)`` sets ``rate_``, ``intercept_`` and ``r2_``; ``predict``
    returns the fitted norms. A positive rate means decay.
    """

    def __init__(self, window=None):
        self.window = window

    def fit(self, X, y):
        X, y = check_X_y(np.asarray(X, dtype=float).reshape(len(y), -1), y, dtype=float)
        t = X[:, 0]
        if self.window is not None:
            sel = (t >= self.window[0]) & (t <= self.window[1])
            t, y = t[sel], y[sel]
        if len(t) < 2:
            raise ValueError("need at least two samples to fit a rate")
        if np.any(y <= 0):
            raise ValueError("norms must be positive for a log-linear fit")
        self.rate_, self.intercept_, self.r2_ = fit_exponential(t, y)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "rate_")
        t = check_array(np.asarray(X, dtype=float).reshape(-1, 1) if np.ndim(X) == 1 else X, dtype=float)[:, 0]
        return np.exp(self.intercept_ - self.rate_ * t)
