"""Lyapunov-Perron construction of the center manifold graph.

For a center coordinate ``y`` the full-line solution ``gamma_y`` is the
fixed point of the integral operator

    (T x)(t) = e^{-B_c t} y + int_0^t e^{-B_c (t-s)} P_c f(x(s)) ds
             + int_{-inf}^t e^{-B_s (t-s)} P_s f(x(s)) ds
             - int_t^{inf} e^{-B_u (t-s)} P_u f(x(s)) ds

on trajectories weighted by ``exp(-beta |t| / 2)``, and the graph is
``xi(y) = gamma_y(0) - y``.  Time is truncated to ``[-T, T]``; beyond the
window the forcing is frozen at its end value, which makes affine problems
exact.  Each mode is integrated with the exponential product rule, so the
stiff stable modes need no time-step restriction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad_vec
from scipy.interpolate import LinearNDInterpolator, interp1d
from scipy.spatial import ConvexHull

from .errors import ContractionFailure, ExtrapolationError, InconclusiveError, InconsistencyError, PreconditionError
from .nonlinearity import NonlinearitySpec, m_beta, nemytskii, nemytskii_bound
from .semiflow import IntegratorConfig, convolve_backward, convolve_forward, integrate
from .spectral import SpectralSplit


@dataclass
class LPConfig:
    """Discretisation of the Lyapunov-Perron fixed-point problem.

    ``window`` defaults to ``32 / beta_k``; ``grading = 2`` puts node density
    proportional to ``|t|^{-1/2}`` near the origin.
    """

    window: float | None = None
    nodes_per_unit: float = 40.0
    grading: float = 2.0
    tol: float = 1e-10
    max_iter: int = 60
    M: float = 1.0

    def __post_init__(self):
        if not self.tol > 0:
            raise PreconditionError("fixed-point tolerance must be positive")

    def window_for(self, split: SpectralSplit) -> float:
        T = 32.0 / split.beta if self.window is None else self.window
        if T < 8.0 / split.beta - 1e-12:
            raise PreconditionError(f"window T={T} below the minimum 8/beta={8.0 / split.beta}")
        return T


def time_grid(split: SpectralSplit, config: LPConfig) -> np.ndarray:
    T = config.window_for(split)
    n = max(8, int(math.ceil(config.nodes_per_unit * T)))
    half = T * np.linspace(0.0, 1.0, n + 1) ** config.grading
    return np.concatenate([-half[::-1], half[1:]])


@dataclass(eq=False)
class WeightedTrajectory:
    """Coefficients of a full-line trajectory sampled on a symmetric grid."""

    t: np.ndarray
    coef: np.ndarray
    weight: float
    iterations: int = 0
    ratios: list = field(default_factory=list)
    increment: float = 0.0

    @property
    def zero(self) -> int:
        return len(self.t) // 2

    def norm(self, split: SpectralSplit) -> float:
        return weighted_norm(split, self.t, self.coef, self.weight)


def weighted_norm(split, t, coef, weight):
    """``sup_t e^{-weight |t|} ||x(t)||_alpha``; batched over a middle axis if present."""
    a = np.linalg.norm(coef * split.alpha_weights(), axis=-1)
    w = np.exp(-weight * np.abs(t))
    if a.ndim == 1:
        return float(np.max(w * a))
    return np.max(w[:, None] * a, axis=0)


def _center_coords(split, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 0:
        y = y[None]
    if y.shape[-1] != split.m:
        raise PreconditionError(f"center coordinates must have trailing dimension {split.m}")
    return y


def initial_trajectory(split: SpectralSplit, y, t) -> np.ndarray:
    """``e^{-B_c t} y`` on the grid; shape (len(t), N) or (len(t), ny, N)."""
    y = _center_coords(split, y)
    coef = np.zeros((len(t),) + y.shape[:-1] + (split.basis.N,))
    decay = np.exp(-np.outer(t, split.rates[split.idx_c]))
    coef[..., split.idx_c] = decay.reshape((len(t),) + (1,) * (y.ndim - 1) + (split.m,)) * y
    return coef


def _apply(split: SpectralSplit, spec: NonlinearitySpec, y, t, coef) -> np.ndarray:
    g = nemytskii(split.basis, spec, coef)
    i0 = len(t) // 2
    out = initial_trajectory(split, y, t)
    r = split.rates
    extra = (1,) * (coef.ndim - 2)

    def col(v):
        return v.reshape((len(t),) + extra + (-1,)) if v.ndim == 2 else v

    ic = split.idx_c
    if len(ic):
        b = r[ic]
        out[i0:, ..., ic] += convolve_forward(b, t[i0:], g[i0:, ..., ic])
        out[: i0 + 1, ..., ic] -= convolve_backward(b, t[: i0 + 1], g[: i0 + 1, ..., ic])

    is_ = split.idx_s
    if len(is_):
        b = r[is_]
        tail = col(np.exp(-np.outer(t - t[0], b))) * (g[0][..., is_] / b)
        out[..., is_] = convolve_forward(b, t, g[..., is_]) + tail

    iu = split.idx_u
    if len(iu):
        b = r[iu]
        tail = col(np.exp(np.outer(t[-1] - t, b))) * (g[-1][..., iu] / b)
        out[..., iu] = -convolve_backward(b, t, g[..., iu]) + tail
    return out


def lp_apply(split: SpectralSplit, spec: NonlinearitySpec, y, x: WeightedTrajectory) -> WeightedTrajectory:
    """One application of the Lyapunov-Perron operator."""
    if x.coef.shape != (len(x.t), split.basis.N) or len(x.t) % 2 == 0 or x.t[len(x.t) // 2] != 0.0:
        raise PreconditionError("trajectory is not on a symmetric grid matching the basis")
    return WeightedTrajectory(x.t, _apply(split, spec, _center_coords(split, y), x.t, x.coef), x.weight)


def contraction_bound(split: SpectralSplit, spec: NonlinearitySpec, M: float = 1.0) -> float:
    """``M_beta * Ltilde``, the theoretical contraction factor."""
    return m_beta(split.beta, M) * spec.lipschitz / math.sqrt(float(split.basis.eigenvalues[0]))


@dataclass
class BatchSolution:
    t: np.ndarray
    coef: np.ndarray  # (len(t), ny, N)
    iterations: np.ndarray
    max_ratio: np.ndarray
    ratios: list


def lp_fixed_point_batch(split: SpectralSplit, spec: NonlinearitySpec, Y, config: LPConfig | None = None) -> BatchSolution:
    """Fixed points for many center coordinates at once (rows of ``Y``).

    Every sample is iterated until its own increment drops below the
    tolerance; converged samples are frozen.
    """
    config = config or LPConfig()
    Y = _center_coords(split, Y).reshape(-1, split.m)
    t = time_grid(split, config)
    weight = split.beta / 2
    x = initial_trajectory(split, Y, t)
    ny = len(Y)
    active = np.ones(ny, dtype=bool)
    iterations = np.zeros(ny, dtype=int)
    max_ratio = np.zeros(ny)
    prev = np.full(ny, np.nan)
    bad = np.zeros(ny, dtype=int)
    history = []
    eps = np.finfo(float).eps
    for it in range(1, config.max_iter + 1):
        idx = np.flatnonzero(active)
        nxt = _apply(split, spec, Y[idx], t, x[:, idx])
        inc = weighted_norm(split, t, nxt - x[:, idx], weight)
        floor = 64 * eps * np.maximum(1.0, weighted_norm(split, t, nxt, weight))
        p = prev[idx]
        measured = np.isfinite(p) & (p > 1e3 * floor)
        ratio = np.where(measured, inc / np.where(measured, p, 1.0), np.nan)
        if np.any(measured):
            history.append(float(np.nanmax(ratio)))
            max_ratio[idx[measured]] = np.maximum(max_ratio[idx[measured]], ratio[measured])
        bad[idx] = np.where(measured & (inc >= p), bad[idx] + 1, 0)
        x[:, idx] = nxt
        iterations[idx] = it
        if np.any(bad >= 3):
            j = int(np.flatnonzero(bad >= 3)[0])
            raise ContractionFailure(
                f"no contraction at y={Y[j].tolist()}: measured ratio {max_ratio[j]:.4g} "
                f"vs bound {contraction_bound(split, spec, config.M):.4g}",
                ratios=history,
                bound=contraction_bound(split, spec, config.M),
            )
        done = inc < np.maximum(config.tol, floor)
        active[idx[done]] = False
        prev[idx] = inc
        if not active.any():
            return BatchSolution(t, x, iterations, max_ratio, history)
    j = int(np.flatnonzero(active)[0])
    raise ContractionFailure(
        f"no convergence in {config.max_iter} iterations at y={Y[j].tolist()}",
        ratios=history,
        bound=contraction_bound(split, spec, config.M),
    )


def lp_fixed_point(split: SpectralSplit, spec: NonlinearitySpec, y, config: LPConfig | None = None) -> WeightedTrajectory:
    """Iterate the operator from ``e^{-B_c t} y`` to its fixed point ``gamma_y``.

    Raises ContractionFailure when the increment ratio stays >= 1 for three
    consecutive iterations or the iteration cap is hit.
    """
    y = _center_coords(split, y)
    if y.ndim != 1:
        raise PreconditionError("lp_fixed_point takes a single center coordinate; use lp_fixed_point_batch")
    sol = lp_fixed_point_batch(split, spec, y[None], config)
    ratios = sol.ratios
    return WeightedTrajectory(sol.t, sol.coef[:, 0], split.beta / 2, iterations=int(sol.iterations[0]), ratios=ratios)


def _xi_from_trajectory(split, y, gamma: WeightedTrajectory) -> np.ndarray:
    xi = gamma.coef[gamma.zero].copy()
    xi[split.idx_c] = 0.0
    return xi


def xi_direct(split: SpectralSplit, spec: NonlinearitySpec, gamma: WeightedTrajectory) -> np.ndarray:
    """Evaluate ``xi(y)`` as the two one-sided integrals at ``t = 0``.

    Uses adaptive quadrature of the linearly interpolated forcing, an
    independent route from the recursion inside the operator.
    """
    t = gamma.t
    g = nemytskii(split.basis, spec, gamma.coef)
    r = split.rates
    i0 = gamma.zero
    out = np.zeros(split.basis.N)
    is_, iu = split.idx_s, split.idx_u
    if len(is_):
        b = r[is_]
        gi = interp1d(t[: i0 + 1], g[: i0 + 1, is_], axis=0, assume_sorted=True)
        val, _ = quad_vec(lambda s: np.exp(b * s) * gi(s), t[0], 0.0, epsabs=1e-12, epsrel=1e-12, points=t[1:i0])
        out[is_] = val + np.exp(b * t[0]) * g[0, is_] / b
    if len(iu):
        b = r[iu]
        gi = interp1d(t[i0:], g[i0:, iu], axis=0, assume_sorted=True)
        val, _ = quad_vec(lambda s: np.exp(b * s) * gi(s), 0.0, t[-1], epsabs=1e-12, epsrel=1e-12, points=t[i0 + 1 : -1])
        out[iu] = -(val - np.exp(b * t[-1]) * g[-1, iu] / b)
    return out


def xi_at(split: SpectralSplit, spec: NonlinearitySpec, y, config: LPConfig | None = None, check: bool = True) -> np.ndarray:
    """``xi(y)`` as a full coefficient vector (zero on the center modes)."""
    gamma = lp_fixed_point(split, spec, y, config)
    xi = _xi_from_trajectory(split, y, gamma)
    if check:
        direct = xi_direct(split, spec, gamma)
        gap = float(np.linalg.norm((xi - direct) * split.alpha_weights()))
        if gap > 1e-6:
            raise InconsistencyError(f"xi(y) from the fixed point and from the direct integrals differ by {gap:.3g}")
    return xi


def tail_bound(split: SpectralSplit, spec: NonlinearitySpec, config: LPConfig) -> float:
    """Bound on the X^alpha error of ``xi`` caused by freezing the forcing beyond +-T."""
    T = config.window_for(split)
    cf = nemytskii_bound(spec, split.basis)
    rate = 0.75 * split.beta
    stable = config.M * T**-0.5 * math.exp(-rate * T) / rate
    unstable = 0.0
    if len(split.idx_u):
        unstable = math.sqrt(split.basis.eigenvalues[split.idx_u].max() + split.shift) * math.exp(-rate * T) / rate
    return 2.0 * cf * (stable + unstable)


# --- graph ---------------------------------------------------------------------


def sample_box(split: SpectralSplit, radius: float, n_radial: int = 96, n_angular: int = 32, stretch: float = 3.0) -> np.ndarray:
    """Center-coordinate samples, denser near the origin.

    m = 1 gives a symmetric 1-D grid, m = 2 a polar grid (plus the origin)
    whose outer polygon circumscribes the disc of the given radius.
    """
    s = np.sinh(stretch * np.linspace(0.0, 1.0, n_radial + 1)) / math.sinh(stretch)
    radii = radius * s
    if split.m == 1:
        return np.concatenate([-radii[:0:-1], radii])[:, None]
    if split.m == 2:
        radii = radii / math.cos(math.pi / n_angular)
        ang = np.linspace(0.0, 2 * math.pi, n_angular, endpoint=False)
        ring = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        pts = [np.zeros((1, 2))] + [r * ring for r in radii[1:]]
        return np.concatenate(pts)
    raise PreconditionError("graphs are implemented for center dimension 1 or 2")


@dataclass(eq=False)
class ManifoldGraph:
    """Sampled graph ``y -> xi(y)`` with piecewise-linear interpolation."""

    split: SpectralSplit
    spec: NonlinearitySpec
    samples: np.ndarray
    values: np.ndarray
    lipschitz: float
    lipschitz_bound: float
    tail_bound: float
    radius: float
    max_ratio: float = 0.0
    iterations: list = field(default_factory=list)

    def __post_init__(self):
        if self.split.m == 1:
            order = np.argsort(self.samples[:, 0])
            self.samples, self.values = self.samples[order], self.values[order]
            self._interp = interp1d(self.samples[:, 0], self.values, axis=0, assume_sorted=True)
        else:
            self._interp = LinearNDInterpolator(self.samples, self.values)

    @property
    def lam(self) -> float:
        return self.split.lam

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        flat = w.reshape(-1, self.split.m)
        if self.split.m == 1:
            x = flat[:, 0]
            if np.any(x < self.samples[0, 0] - 1e-12) or np.any(x > self.samples[-1, 0] + 1e-12):
                raise ExtrapolationError(f"center coordinate outside the sampled box [-{self.radius}, {self.radius}]")
            out = self._interp(np.clip(x, self.samples[0, 0], self.samples[-1, 0]))
        else:
            out = self._interp(flat)
            if np.any(np.isnan(out)):
                raise ExtrapolationError(f"center coordinate outside the sampled disc of radius {self.radius}")
        return out.reshape(w.shape[:-1] + (self.split.basis.N,))

    def inside(self, w) -> np.ndarray:
        """Pointwise membership of center coordinates in the sampled box."""
        w = np.asarray(w, dtype=float).reshape(-1, self.split.m)
        if self.split.m == 1:
            return (w[:, 0] >= self.samples[0, 0]) & (w[:, 0] <= self.samples[-1, 0])
        return ~np.isnan(self._interp(w)[:, 0])

    def contains(self, w) -> bool:
        return bool(np.all(self.inside(w)))

    def lift(self, w) -> np.ndarray:
        """Points ``w + xi(w)`` of the manifold, as coefficient vectors."""
        return self.split.lift(w) + self(w)

    def to_csv(self, path):
        m = self.split.m
        header = [f"y_{i + 1}" for i in range(m)] + [f"xi_{j + 1}" for j in range(self.split.basis.N)] + ["tail_bound"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for y, v in zip(self.samples, self.values):
                w.writerow([f"{x:.12e}" for x in (*y, *v, self.tail_bound)])


def lipschitz_bound(split: SpectralSplit, spec: NonlinearitySpec, M: float = 1.0) -> float:
    """``M / (1 - M_beta Ltilde) + 1``; infinite when the contraction bound fails."""
    q = m_beta(split.beta, M) * spec.lipschitz / math.sqrt(split.basis.eigenvalues[0])
    return math.inf if q >= 1 else M / (1.0 - q) + 1.0


def pairwise_lipschitz(split: SpectralSplit, samples, values) -> float:
    wc = math.sqrt(split.mu_k + split.shift)
    aw = split.alpha_weights()
    dy = np.linalg.norm(samples[:, None, :] - samples[None, :, :], axis=-1) * wc
    dx = np.linalg.norm((values[:, None, :] - values[None, :, :]) * aw, axis=-1)
    mask = dy > 0
    return float(np.max(dx[mask] / dy[mask])) if np.any(mask) else 0.0


def inscribed_radius(samples) -> float:
    """Radius of the largest centered ball inside the hull of the samples."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[1] == 1:
        return float(min(-samples[:, 0].min(), samples[:, 0].max()))
    hull = ConvexHull(samples)
    return float(np.min(-hull.equations[:, -1]))


def build_manifold_graph(split: SpectralSplit, spec: NonlinearitySpec, samples, config: LPConfig | None = None, check_every: int = 16, chunk: int = 64) -> ManifoldGraph:
    """Solve the fixed-point problem at every sample and assemble the graph."""
    config = config or LPConfig()
    samples = np.asarray(samples, dtype=float).reshape(-1, split.m)
    values = np.zeros((len(samples), split.basis.N))
    iterations, max_ratio = [], 0.0
    for lo in range(0, len(samples), chunk):
        Y = samples[lo : lo + chunk]
        try:
            sol = lp_fixed_point_batch(split, spec, Y, config)
        except ContractionFailure as exc:
            raise ContractionFailure(f"graph construction: {exc}", exc.ratios, exc.bound) from exc
        i0 = len(sol.t) // 2
        values[lo : lo + len(Y)] = sol.coef[i0]
        values[lo : lo + len(Y), split.idx_c] = 0.0
        iterations.extend(int(v) for v in sol.iterations)
        max_ratio = max(max_ratio, float(sol.max_ratio.max(initial=0.0)))
        if check_every:
            for j in range(0, len(Y), check_every):
                gamma = WeightedTrajectory(sol.t, sol.coef[:, j], split.beta / 2)
                direct = xi_direct(split, spec, gamma)
                gap = float(np.linalg.norm((values[lo + j] - direct) * split.alpha_weights()))
                if gap > 1e-6:
                    raise InconsistencyError(f"xi mismatch {gap:.3g} at y={Y[j].tolist()}")
    return ManifoldGraph(
        split=split,
        spec=spec,
        samples=samples,
        values=values,
        lipschitz=pairwise_lipschitz(split, samples, values),
        lipschitz_bound=lipschitz_bound(split, spec, config.M),
        tail_bound=tail_bound(split, spec, config),
        radius=inscribed_radius(samples),
        max_ratio=max_ratio,
        iterations=iterations,
    )


# --- invariance ------------------------------------------------------------------


def _residual_along(graph: ManifoldGraph, coef) -> np.ndarray:
    split = graph.split
    w = coef[:, split.idx_c]
    if not graph.contains(w):
        raise InconclusiveError("trajectory left the sampled box of the manifold graph")
    off = coef - split.lift(w)
    return np.linalg.norm((off - graph(w)) * split.alpha_weights(), axis=1)


def invariance_residual(split: SpectralSplit, spec: NonlinearitySpec, graph: ManifoldGraph, y, horizon: float, config: IntegratorConfig | None = None, lp_config: LPConfig | None = None) -> float:
    """Max distance from the graph along the full flow started on the manifold."""
    traj = _manifold_trajectory(split, spec, y, horizon, config, lp_config)
    return float(np.max(_residual_along(graph, traj[1])))


def _manifold_trajectory(split, spec, y, horizon, config, lp_config, h=None):
    config = config or IntegratorConfig()
    y = np.atleast_1d(np.asarray(y, dtype=float))
    u0 = split.lift(y) + xi_at(split, spec, y, lp_config, check=False)
    h = config.step_for(split.basis) if h is None else h
    return integrate(split.basis, spec, split.lam, u0, horizon, h)


def tolerance_budget(split: SpectralSplit, spec: NonlinearitySpec, graph: ManifoldGraph, y, horizon: float, config: IntegratorConfig | None = None, lp_config: LPConfig | None = None) -> dict:
    """Error terms an invariance residual is allowed to accumulate.

    * ``fixed_point``: the iteration tolerance plus the time-discretisation
      error of the fixed point, measured by doubling the node density, plus
      the frozen-tail bound.
    * ``interpolation``: largest gap between the interpolated graph and a
      direct solve at midpoints of the samples the trajectory passes.
    * ``integrator``: first-order error estimate from step halving, carried
      through the graph's Lipschitz constant.
    """
    config = config or IntegratorConfig()
    lp_config = lp_config or LPConfig()
    aw = split.alpha_weights()
    h = config.step_for(split.basis)
    t1, c1 = _manifold_trajectory(split, spec, y, horizon, config, lp_config, h)
    t2, c2 = _manifold_trajectory(split, spec, y, horizon, config, lp_config, h / 2)
    # both runs record every step; compare on the coarse nodes
    diff = np.linalg.norm((c1 - c2[::2][: len(c1)]) * aw, axis=1)
    integrator = 2.0 * float(diff.max()) * (1.0 + graph.lipschitz)

    w = c1[:, split.idx_c]
    probes = _midpoints_visited(graph, w)
    fine = replace(lp_config, nodes_per_unit=2 * lp_config.nodes_per_unit)
    interp, disc = 0.0, 0.0
    for p in probes:
        direct = xi_at(split, spec, p, lp_config, check=False)
        interp = max(interp, float(np.linalg.norm((graph(p[None])[0] - direct) * aw)))
    for p in (w[0], w[-1]):
        a = xi_at(split, spec, p, lp_config, check=False)
        b = xi_at(split, spec, p, fine, check=False)
        disc = max(disc, float(np.linalg.norm((a - b) * aw)))
    fixed_point = lp_config.tol + disc + graph.tail_bound
    return {
        "fixed_point": fixed_point,
        "interpolation": interp,
        "integrator": integrator,
        "total": fixed_point + interp + integrator,
    }


def _midpoints_visited(graph: ManifoldGraph, w, max_probes: int = 12) -> np.ndarray:
    if graph.split.m == 1:
        s = graph.samples[:, 0]
        mids = 0.5 * (s[1:] + s[:-1])
        lo, hi = w[:, 0].min(), w[:, 0].max()
        left = np.searchsorted(s, lo) - 1
        right = np.searchsorted(s, hi)
        chosen = mids[max(left, 0) : min(right, len(mids))]
        if len(chosen) > max_probes:
            chosen = chosen[np.linspace(0, len(chosen) - 1, max_probes).astype(int)]
        return chosen[:, None]
    idx = np.linspace(0, len(w) - 1, max_probes).astype(int)
    return w[idx]
