"""Bounded Landesman-Lazer nonlinearities and their Nemytskii operators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import InconsistencyError, NonconformingNonlinearityError, PreconditionError
from .spectral import CoefField, SpectralBasis, gauss_legendre_panels, spectral_gap

STANDARD = "standard"
DUAL = "dual"


@dataclass(frozen=True)
class NonlinearitySpec:
    """A pointwise map ``f(x, t)`` with its declared constants.

    ``f``, ``dfdt`` and ``F`` (the antiderivative in ``t`` vanishing at 0)
    take ``x`` of shape (Q, dim) and ``t`` broadcastable against (..., Q).
    """

    name: str
    f: Callable
    dfdt: Callable
    F: Callable
    fbar: float
    funder: float
    lipschitz: float
    sup: float
    orientation: str = STANDARD
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.orientation not in (STANDARD, DUAL):
            raise PreconditionError(f"orientation must be {STANDARD!r} or {DUAL!r}")

    @property
    def side(self) -> int:
        """-1 when the branches bifurcate below mu_k, +1 when above."""
        return -1 if self.orientation == STANDARD else 1

    def mirrored(self) -> "NonlinearitySpec":
        """The nonlinearity ``(x, t) -> -f(x, -t)`` governing ``v = -u``."""
        f, df, F = self.f, self.dfdt, self.F
        return replace(
            self,
            name=f"mirror({self.name})",
            f=lambda x, t: -f(x, -np.asarray(t)),
            dfdt=lambda x, t: df(x, -np.asarray(t)),
            F=lambda x, t: F(x, -np.asarray(t)),
            fbar=self.funder,
            funder=self.fbar,
        )


def _xfree(g):
    return lambda x, t: g(np.asarray(t, dtype=float))


def tanh_nonlinearity(c: float, orientation: str = STANDARD) -> NonlinearitySpec:
    """``f = c tanh(t)``; for ``c < 0`` the limits are declared with ``|c|``."""
    a = abs(c)
    return NonlinearitySpec(
        name="tanh",
        f=_xfree(lambda t: c * np.tanh(t)),
        dfdt=_xfree(lambda t: c * _sech2(t)),
        F=_xfree(lambda t: c * _logcosh(t)),
        fbar=a,
        funder=a,
        lipschitz=a,
        sup=a,
        orientation=orientation,
        params={"c": c},
    )


def arctan_nonlinearity(c: float, orientation: str = STANDARD, fbar: float | None = None) -> NonlinearitySpec:
    """``f = c (2/pi) arctan(t)``; the limit is approached only like ``1/t``."""
    k = 2.0 * c / math.pi
    a = abs(c) if fbar is None else fbar
    return NonlinearitySpec(
        name="arctan",
        f=_xfree(lambda t: k * np.arctan(t)),
        dfdt=_xfree(lambda t: k / (1.0 + t**2)),
        F=_xfree(lambda t: k * (t * np.arctan(t) - 0.5 * np.log1p(t**2))),
        fbar=a,
        funder=a,
        lipschitz=abs(k),
        sup=abs(c),
        orientation=orientation,
        params={"c": c},
    )


def modulated_tanh(c_min: float, c_max: float, orientation: str = STANDARD) -> NonlinearitySpec:
    """``f = c(x) tanh(t)`` with ``c(x) = c_min + (c_max - c_min) sin^2(x_1)``."""
    if not 0 < c_min <= c_max:
        raise PreconditionError("need 0 < c_min <= c_max")

    def cx(x):
        return c_min + (c_max - c_min) * np.sin(np.asarray(x)[:, 0]) ** 2

    return NonlinearitySpec(
        name="modulated_tanh",
        f=lambda x, t: cx(x) * np.tanh(t),
        dfdt=lambda x, t: cx(x) * _sech2(t),
        F=lambda x, t: cx(x) * _logcosh(t),
        fbar=c_min,
        funder=c_min,
        lipschitz=c_max,
        sup=c_max,
        orientation=orientation,
        params={"c_min": c_min, "c_max": c_max},
    )


def asymmetric_tanh(c_plus: float, c_minus: float, orientation: str = STANDARD) -> NonlinearitySpec:
    """``c_plus tanh(t)`` for ``t >= 0`` and ``c_minus tanh(t)`` for ``t < 0`` (same sign)."""
    if c_plus * c_minus <= 0:
        raise PreconditionError("c_plus and c_minus must be nonzero with the same sign")

    def coeff(t):
        return np.where(t >= 0, c_plus, c_minus)

    return NonlinearitySpec(
        name="asymmetric_tanh",
        f=_xfree(lambda t: coeff(t) * np.tanh(t)),
        dfdt=_xfree(lambda t: coeff(t) * _sech2(t)),
        F=_xfree(lambda t: coeff(t) * _logcosh(t)),
        fbar=abs(c_plus),
        funder=abs(c_minus),
        lipschitz=max(abs(c_plus), abs(c_minus)),
        sup=max(abs(c_plus), abs(c_minus)),
        orientation=orientation,
        params={"c_plus": c_plus, "c_minus": c_minus},
    )


def constant_nonlinearity(g: float) -> NonlinearitySpec:
    """``f = g``: affine control case, not of Landesman-Lazer type."""
    return NonlinearitySpec(
        name="constant",
        f=_xfree(lambda t: np.full_like(t, g)),
        dfdt=_xfree(np.zeros_like),
        F=_xfree(lambda t: g * t),
        fbar=0.0,
        funder=0.0,
        lipschitz=0.0,
        sup=abs(g),
        params={"g": g},
    )


def zero_nonlinearity() -> NonlinearitySpec:
    spec = constant_nonlinearity(0.0)
    return replace(spec, name="zero", params={})


def _sech2(t):
    e = np.exp(-2.0 * np.abs(t))
    return 4.0 * e / (1.0 + e) ** 2


def _logcosh(t):
    t = np.abs(t)
    return t + np.log1p(np.exp(-2.0 * t)) - math.log(2.0)


REGISTRY = {
    "tanh": tanh_nonlinearity,
    "arctan": arctan_nonlinearity,
    "modulated_tanh": modulated_tanh,
    "asymmetric_tanh": asymmetric_tanh,
    "constant": constant_nonlinearity,
    "zero": zero_nonlinearity,
}


def make_nonlinearity(name: str, orientation: str = STANDARD, **params) -> NonlinearitySpec:
    """Look up a built-in nonlinearity by name."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise PreconditionError(f"unknown nonlinearity {name!r}; known: {sorted(REGISTRY)}") from None
    if name in ("constant", "zero"):
        spec = factory(**params)
        return replace(spec, orientation=orientation)
    return factory(orientation=orientation, **params)


# --- Nemytskii operator ---------------------------------------------------


def nemytskii(basis: SpectralBasis, spec: NonlinearitySpec, coef) -> np.ndarray:
    """Coefficients of ``f(x, u(x))`` for a stack of coefficient vectors (..., N)."""
    values = basis.synthesize(coef)
    return basis.project(spec.f(basis.nodes, values))


def nemytskii_jacobian(basis: SpectralBasis, spec: NonlinearitySpec, coef) -> np.ndarray:
    """Galerkin derivative ``(f_t(x, u) phi_i, phi_j)`` for one coefficient vector."""
    values = basis.synthesize(coef)
    d = spec.dfdt(basis.nodes, values) * basis.weights
    return basis.phi.T @ (d[:, None] * basis.phi)


def evaluate_nemytskii(spec: NonlinearitySpec, u: CoefField) -> CoefField:
    return CoefField(nemytskii(u.basis, spec, u.coef), u.basis)


def nemytskii_bound(spec: NonlinearitySpec, basis: SpectralBasis) -> float:
    """``sup|f| sqrt(|Omega|)``, an H-norm bound for every Nemytskii image."""
    return spec.sup * math.sqrt(basis.domain.measure)


def lipschitz_estimate(spec: NonlinearitySpec, basis: SpectralBasis, samples: int = 64, rng=None, scale: float = 5.0) -> float:
    """V -> H Lipschitz constant ``L_f / sqrt(mu_1)``, cross-checked on random pairs."""
    ltilde = spec.lipschitz / math.sqrt(float(basis.eigenvalues[0]))
    rng = np.random.default_rng(0) if rng is None else rng
    decay = 1.0 / basis.eigenvalues
    a = scale * rng.standard_normal((samples, basis.N)) * decay
    b = a + rng.standard_normal((samples, basis.N)) * decay * rng.uniform(1e-3, 2.0, (samples, 1))
    df = np.linalg.norm(nemytskii(basis, spec, a) - nemytskii(basis, spec, b), axis=1)
    dv = np.sqrt(np.sum(basis.eigenvalues * (a - b) ** 2, axis=1))
    worst = float(np.max(df / dv))
    if worst > ltilde + 1e-9:
        raise InconsistencyError(f"measured Lipschitz ratio {worst:.6g} exceeds declared {ltilde:.6g}")
    return ltilde


# --- smallness condition ---------------------------------------------------


def m_beta(beta: float, M: float = 1.0) -> float:
    """``M * int_0^inf (2 + tau^-1/2) exp(-beta tau / 4) dtau`` in closed form."""
    return M * (8.0 / beta + 2.0 * math.sqrt(math.pi / beta))


def m_beta_quadrature(beta: float, M: float = 1.0) -> float:
    # tau = s^2 removes the endpoint singularity
    val, _ = quad(lambda s: (4.0 * s + 2.0) * math.exp(-beta * s * s / 4.0), 0.0, math.inf, epsabs=1e-14, epsrel=1e-13)
    return M * val


def smallness_margin(spec: NonlinearitySpec, basis: SpectralBasis, k: int, M: float = 1.0):
    """Return ``(M_beta, 1 - M_beta L_f / sqrt(mu_1))``; positive margin is admissible."""
    beta = spectral_gap(basis, k)
    closed = m_beta(beta, M)
    numeric = m_beta_quadrature(beta, M)
    if abs(closed - numeric) > 1e-8 * max(1.0, closed):
        raise InconsistencyError(f"M_beta closed form {closed!r} vs quadrature {numeric!r}")
    margin = 1.0 - closed * spec.lipschitz / math.sqrt(float(basis.eigenvalues[0]))
    return closed, margin


# --- Landesman-Lazer conditions ---------------------------------------------


@dataclass(frozen=True)
class LLReport:
    orientation: str
    upper_margin: float
    lower_margin: float
    passed: bool


def verify_landesman_lazer(spec: NonlinearitySpec, t_probe: float = 10.0, tol: float = 1e-8, x=None, t_max: float = 1e6) -> LLReport:
    """Check the declared asymptotic limits of ``f`` on ``t >= t_probe``.

    ``upper_margin`` measures the ``t -> +inf`` limit, ``lower_margin`` the
    ``t -> -inf`` one; both are nonnegative when the condition holds.
    """
    if not t_probe > 0:
        raise PreconditionError("t_probe must be positive")
    if not (spec.fbar > 0 and spec.funder > 0):
        raise NonconformingNonlinearityError(
            f"declared limits fbar={spec.fbar}, funder={spec.funder} must be positive"
        )
    if x is None:
        x = np.linspace(0.0, math.pi, 65)[:, None]
    ts = np.geomspace(t_probe, max(t_max, t_probe), 200)
    tt = np.broadcast_to(ts[:, None], (len(ts), len(x)))
    plus = spec.f(x, tt)
    minus = spec.f(x, -tt)
    if spec.orientation == STANDARD:
        upper = float(plus.min() - spec.fbar)
        lower = float(-spec.funder - minus.max())
    else:
        upper = float(-spec.fbar - plus.max())
        lower = float(minus.min() - spec.funder)
    passed = upper >= -tol and lower >= -tol
    report = LLReport(spec.orientation, upper, lower, passed)
    if not passed:
        raise NonconformingNonlinearityError(
            f"{spec.name} violates the {spec.orientation} Landesman-Lazer limits "
            f"(margins {upper:.3g} at +inf, {lower:.3g} at -inf)"
        )
    return report


def landesman_lazer_margin(spec: NonlinearitySpec, basis: SpectralBasis, s: float, v: CoefField, u: CoefField, eps: float):
    """``(int f(x, s v + u) v, int (fbar v+ + funder v-) - eps)`` by quadrature."""
    vv = v.values()
    uu = u.values()
    lhs = float(np.sum(basis.weights * spec.f(basis.nodes, s * vv + uu) * vv))
    rhs = float(np.sum(basis.weights * (spec.fbar * np.maximum(vv, 0) + spec.funder * np.maximum(-vv, 0)))) - eps
    return lhs, rhs


def l1_norm(basis: SpectralBasis, coef, panels: int | None = None) -> np.ndarray:
    """L1 norms of fields on a quadrature much finer than the basis one."""
    L = basis.domain.length
    if panels is None:
        panels = 512 if basis.domain.dim == 1 else 96
    x1, w1 = gauss_legendre_panels(L, panels, order=4)
    if basis.domain.dim == 1:
        pts, wts = x1[:, None], w1
    else:
        gx, gy = np.meshgrid(x1, x1, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        wts = np.outer(w1, w1).ravel()
    vals = np.asarray(coef) @ basis.eval_modes(pts).T
    return np.abs(vals) @ wts
