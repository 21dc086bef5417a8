"""Time integration of the Galerkin parabolic system ``u_t + B u = f(u)``."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, PreconditionError
from .nonlinearity import NonlinearitySpec, nemytskii
from .spectral import CoefField, SpectralBasis, SpectralSplit, default_time_step

SERIES_CUTOFF = 0.02


def phi1(z):
    """``(e^z - 1)/z`` with the removable singularity at 0 filled in."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + 0.5 * z, np.expm1(safe) / safe)


def product_weights(b, h):
    """Weights of the exponential product-trapezoid rule on one step.

    With ``g`` linear on ``[0, h]``::

        int_0^h exp(-b (h - s)) g(s) ds = w0 g(0) + w1 g(h)

    Returns ``(exp(-b h), w0, w1)``; exact for affine ``g``.
    """
    z = np.asarray(b, dtype=float) * h
    small = np.abs(z) < SERIES_CUTOFF
    zs = np.where(small, 1.0, z)
    em = -np.expm1(-zs)  # 1 - e^{-z}
    psi0 = np.where(small, 0.5 - z / 3 + z**2 / 8 - z**3 / 30 + z**4 / 144, (em - zs * np.exp(-zs)) / zs**2)
    psi1 = np.where(small, 0.5 - z / 6 + z**2 / 24 - z**3 / 120 + z**4 / 720, em / zs - psi0)
    return np.exp(-z), h * psi0, h * psi1


def convolve_forward(b, t, g, start: int = 0):
    """``S_n = int_{t_start}^{t_n} exp(-b (t_n - tau)) g(tau) dtau`` for ``n >= start``.

    ``g`` has shape (len(t), N) and is treated as piecewise linear in time;
    rows before ``start`` are zero.
    """
    out = np.zeros_like(g)
    for n in range(start, len(t) - 1):
        e, w0, w1 = product_weights(b, t[n + 1] - t[n])
        out[n + 1] = e * out[n] + w0 * g[n] + w1 * g[n + 1]
    return out


def convolve_backward(b, t, g, end: int | None = None):
    """``R_n = int_{t_n}^{t_end} exp(b (tau - t_n)) g(tau) dtau`` for ``n <= end``."""
    end = len(t) - 1 if end is None else end
    tr = -t[: end + 1][::-1]
    part = convolve_forward(-np.asarray(b), tr, g[: end + 1][::-1])[::-1]
    out = np.zeros_like(g)
    out[: end + 1] = part
    return out


def vector_field(basis: SpectralBasis, spec: NonlinearitySpec, lam: float, coef) -> np.ndarray:
    """``-(mu_j - lambda) a_j + (f(u), phi_j)`` for coefficient stacks."""
    coef = np.asarray(coef, dtype=float)
    return -(basis.eigenvalues - lam) * coef + nemytskii(basis, spec, coef)


@dataclass
class IntegratorConfig:
    h: float | None = None
    record_every: int = 1

    def __post_init__(self):
        if self.h is not None and not self.h > 0:
            raise PreconditionError("step size h must be positive")

    def step_for(self, basis: SpectralBasis) -> float:
        return default_time_step(basis) if self.h is None else self.h


@dataclass(eq=False)
class TrajectorySegment:
    t: np.ndarray
    coef: np.ndarray
    lam: float
    basis: SpectralBasis

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise PreconditionError("trajectory time grid must be strictly increasing")

    @property
    def end(self) -> CoefField:
        return CoefField(self.coef[-1], self.basis)

    def h_norms(self) -> np.ndarray:
        return np.linalg.norm(self.coef, axis=1)

    def v_norms(self) -> np.ndarray:
        return np.sqrt(self.coef**2 @ self.basis.eigenvalues)

    def energies(self, spec: NonlinearitySpec) -> np.ndarray:
        return energy_coef(self.basis, spec, self.lam, self.coef)

    def to_csv(self, path, spec: NonlinearitySpec):
        header = ["t"] + [f"a_{j + 1}" for j in range(self.basis.N)] + ["H_norm", "V_norm", "energy"]
        table = np.column_stack([self.t, self.coef, self.h_norms(), self.v_norms(), self.energies(spec)])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in table:
                w.writerow([f"{v:.12e}" for v in row])


def exp_euler(basis, spec, lam, coef, h):
    """One exponential-Euler step on raw coefficient stacks."""
    r = basis.eigenvalues - lam
    return np.exp(-r * h) * coef + h * phi1(-r * h) * nemytskii(basis, spec, coef)


def step(split: SpectralSplit, spec: NonlinearitySpec, u: CoefField, h: float) -> CoefField:
    """Linear part exact, nonlinearity frozen over the step."""
    if not h > 0:
        raise PreconditionError("h must be positive")
    return CoefField(exp_euler(u.basis, spec, split.lam, u.coef, h), u.basis)


def integrate(basis, spec, lam, coef, horizon, h, record_every=1):
    """Raw integrator used by ``evolve``; ``coef`` may be a (..., N) stack."""
    n = max(1, int(np.ceil(horizon / h - 1e-9)))
    h = horizon / n
    a = np.array(coef, dtype=float)
    ts, states = [0.0], [a.copy()]
    for i in range(1, n + 1):
        a = exp_euler(basis, spec, lam, a, h)
        if not np.all(np.isfinite(a)):
            raise DivergenceError(f"solution blew up at t={i * h:.6g}", time=i * h)
        if i % record_every == 0 or i == n:
            ts.append(i * h)
            states.append(a.copy())
    return np.array(ts), np.array(states)


def evolve(split: SpectralSplit, spec: NonlinearitySpec, u0: CoefField, horizon: float, config: IntegratorConfig | None = None) -> TrajectorySegment:
    if not horizon > 0:
        raise PreconditionError("horizon must be positive")
    config = config or IntegratorConfig()
    t, coef = integrate(u0.basis, spec, split.lam, u0.coef, horizon, config.step_for(u0.basis), config.record_every)
    return TrajectorySegment(t, coef, split.lam, u0.basis)


def energy_coef(basis: SpectralBasis, spec: NonlinearitySpec, lam: float, coef) -> np.ndarray:
    coef = np.asarray(coef, dtype=float)
    quadratic = 0.5 * (coef**2 @ (basis.eigenvalues - lam))
    potential = spec.F(basis.nodes, basis.synthesize(coef)) @ basis.weights
    return quadratic - potential


def energy(spec: NonlinearitySpec, lam: float, u: CoefField) -> float:
    """``1/2 ||u||_V^2 - lam/2 |u|_H^2 - int F(x, u)``, a Lyapunov functional of the flow."""
    return float(energy_coef(u.basis, spec, lam, u.coef))


def duhamel_residual(split: SpectralSplit, spec: NonlinearitySpec, traj: TrajectorySegment) -> float:
    """Max X^alpha defect of the variation-of-constants formula on the trajectory.

    The forcing is interpolated linearly between nodes and integrated exactly
    against the exponential kernel, so the defect measures the integrator
    alone.
    """
    t = traj.t - traj.t[0]
    b = split.rates
    g = nemytskii(traj.basis, spec, traj.coef)
    conv = convolve_forward(b, t, g)
    free = np.exp(-np.outer(t, b)) * traj.coef[0]
    res = (traj.coef - free - conv) * split.alpha_weights()
    worst = 0.0
    for part in ("u", "c", "s"):
        idx = split.index(part)
        if len(idx):
            worst = max(worst, float(np.max(np.linalg.norm(res[1:, idx], axis=1), initial=0.0)))
    return worst

