"""Reduced center flow, invariant annuli, attractor covers and their shape.

Center coordinates ``w`` are the coefficients on the center modes, so the
coordinate norm equals the H-norm of the center field.  Everything here is
phrased for the bifurcation side of the nonlinearity: with ``sigma = +1``
(standard orientation, ``lambda < mu_k``) the annulus is positively invariant
for the forward reduced flow; with ``sigma = -1`` (dual orientation,
``lambda > mu_k``) for the time-reversed one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.interpolate import RectBivariateSpline, interp1d
from scipy.optimize import minimize_scalar

from .errors import CertificationError, ExtrapolationError, PreconditionError, SaturationFailure
from .manifold import LPConfig, ManifoldGraph, build_manifold_graph, sample_box
from .nonlinearity import NonlinearitySpec, l1_norm, nemytskii, nemytskii_bound
from .spectral import SpectralBasis, SpectralSplit, split_at


def orientation_sign(spec: NonlinearitySpec) -> int:
    """+1 when the reduced flow is used forward in time, -1 when reversed."""
    return -spec.side


@dataclass(frozen=True)
class ReducedState:
    w: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.w))


def _check_graph(split: SpectralSplit, graph: ManifoldGraph):
    if graph.split.lam != split.lam or graph.split.k != split.k:
        raise PreconditionError("graph was built for a different split")


def reduced_vector_field(split: SpectralSplit, spec: NonlinearitySpec, graph: ManifoldGraph, w) -> np.ndarray:
    """``(lambda - mu_k) w + P_c f(w + xi(w))`` for center coordinates (..., m)."""
    _check_graph(split, graph)
    w = np.asarray(w, dtype=float)
    u = graph.lift(w)
    return (split.lam - split.mu_k) * w + nemytskii(split.basis, spec, u)[..., split.idx_c]


def radial_derivative(split: SpectralSplit, spec: NonlinearitySpec, graph: ManifoldGraph, w) -> np.ndarray:
    """``d/dt |w|^2`` along the reduced flow."""
    w = np.asarray(w, dtype=float)
    return 2.0 * np.sum(reduced_vector_field(split, spec, graph, w) * w, axis=-1)


def unit_directions(m: int, n: int = 256) -> np.ndarray:
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        ang = 2 * math.pi * np.arange(n) / n
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    raise PreconditionError("center dimension must be 1 or 2")


def l1_equivalence(split: SpectralSplit, n: int = 256) -> float:
    """``r = min |v|_{L1}`` over unit center fields (grid + bounded refinement)."""
    dirs = unit_directions(split.m, n)
    vals = l1_norm(split.basis, split.lift(dirs))
    j = int(np.argmin(vals))
    best = float(vals[j])
    if split.m == 2:
        step = 2 * math.pi / n
        th = 2 * math.pi * j / n

        def l1_at(a):
            return float(l1_norm(split.basis, split.lift(np.array([[math.cos(a), math.sin(a)]])))[0])

        res = minimize_scalar(l1_at, bounds=(th - step, th + step), method="bounded", options={"xatol": 1e-10})
        best = min(best, float(res.fun))
    return best


@dataclass
class SaturationReport:
    s0: float
    r: float
    delta: float
    eps: float
    directions: int
    corrections: int


def find_s0(split: SpectralSplit, spec: NonlinearitySpec, graph: ManifoldGraph, eps: float | None = None, n_dirs: int = 256, n_scan: int = 160) -> SaturationReport:
    """Smallest ``s`` beyond which the Landesman-Lazer integral estimate holds.

    The estimate ``sigma * int f(x, s v + u) v >= int (fbar v+ + funder v-) - eps``
    is tested for every sampled unit ``v``, with ``u`` ranging over the
    manifold correction ``xi(s v)``, zero, and the largest sampled correction.
    It must hold on the whole scanned range ``[s0, R]`` of the graph box.
    """
    _check_graph(split, graph)
    sigma = orientation_sign(spec)
    basis = split.basis
    r = l1_equivalence(split, n_dirs)
    delta = min(spec.fbar, spec.funder)
    eps = r * delta / 2 if eps is None else eps
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    dirs = unit_directions(split.m, n_dirs)
    V = basis.synthesize(split.lift(dirs))  # (n_v, Q)
    wq = basis.weights
    rhs = (spec.fbar * np.maximum(V, 0) + spec.funder * np.maximum(-V, 0)) @ wq - eps
    big = graph.values[np.argmax(np.linalg.norm(graph.values * split.alpha_weights(), axis=1))]
    fixed_u = np.stack([np.zeros(basis.N), big])
    fixed_vals = basis.synthesize(fixed_u)  # (2, Q)

    def holds(s: float) -> bool:
        U = basis.synthesize(graph(s * dirs))
        cand = np.concatenate([U[None], np.broadcast_to(fixed_vals[:, None, :], (2,) + V.shape)])
        lhs = sigma * (spec.f(basis.nodes, s * V[None] + cand) * V[None]) @ wq
        return bool(np.all(lhs >= rhs[None]))

    R = graph.radius
    grid = np.concatenate([np.geomspace(R * 1e-4, R, n_scan)])
    ok = np.array([holds(s) for s in grid])
    if not ok[-1]:
        raise SaturationFailure(f"Landesman-Lazer estimate fails up to the box radius {R:.4g}")
    bad = np.flatnonzero(~ok)
    if len(bad) == 0:
        s0 = float(grid[0])
    else:
        lo, hi = float(grid[bad[-1]]), float(grid[bad[-1] + 1])
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if holds(mid):
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-9 * hi:
                break
        s0 = hi
    return SaturationReport(s0=s0, r=r, delta=delta, eps=eps, directions=len(dirs), corrections=3)


@dataclass
class AnnulusSpec:
    """Certified positively invariant annulus ``a <= |w| <= b``."""

    a: float
    b: float
    c0: float
    R0: float
    s0: float
    r: float
    delta: float
    eps: float
    C: float
    rho: float
    C_f: float
    lam: float
    mu_k: float
    sigma: int
    inner_samples: int
    outer_samples: int
    inner_min_margin: float
    outer_max: float
    box_limited: bool = False
    covers_twice_b: bool = True

    def as_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in self.__dict__.items()}


def annulus_constants(split: SpectralSplit, spec: NonlinearitySpec):
    """``(C_f, C(lambda), rho_lambda)`` from the Young split of the bound on f."""
    d = abs(split.mu_k - split.lam)
    if d == 0:
        raise PreconditionError("lambda must differ from mu_k")
    C_f = nemytskii_bound(spec, split.basis)
    C = C_f**2 / (2 * d)
    return C_f, C, math.sqrt(2 * C / d)


def _check_side(split: SpectralSplit, spec: NonlinearitySpec):
    sigma = orientation_sign(spec)
    if not sigma * (split.mu_k - split.lam) > 0:
        side = "below" if sigma > 0 else "above"
        raise PreconditionError(f"{spec.orientation} orientation needs lambda {side} mu_k={split.mu_k}")
    return sigma


def _ring(dirs, radii):
    return (np.asarray(radii)[:, None, None] * dirs[None]).reshape(-1, dirs.shape[1])


def invariant_annulus(split: SpectralSplit, spec: NonlinearitySpec, graph: ManifoldGraph, lam: float | None = None, n_dirs: int = 256, n_scan: int = 200, saturation: SaturationReport | None = None) -> AnnulusSpec:
    """Certify ``N = {a <= |w| <= b}`` for the (oriented) reduced flow.

    ``a`` is the outer end of the band ``[R0, a]`` on which
    ``sigma d|w|^2/dt >= c0 |w|`` at every sample, ``b = a + rho`` and the
    outer band must satisfy ``sigma d|w|^2/dt <= 0``.
    """
    _check_graph(split, graph)
    if lam is not None and lam != split.lam:
        raise PreconditionError("lambda does not match the split")
    sigma = _check_side(split, spec)
    C_f, C, rho = annulus_constants(split, spec)
    sat = saturation or find_s0(split, spec, graph, n_dirs=n_dirs)
    c0 = sat.r * sat.delta / 2
    R0 = sat.s0
    R = graph.radius

    def margins(radii, dirs):
        pts = _ring(dirs, radii)
        s = np.linalg.norm(pts, axis=1)
        return pts, sigma * radial_derivative(split, spec, graph, pts) - c0 * s

    def tol(s):
        return 1e-10 * (1.0 + s**2)

    a_max = R - rho
    if a_max <= R0:
        raise ExtrapolationError(f"graph box radius {R:.4g} too small for an annulus (R0={R0:.4g}, rho={rho:.4g})")
    dirs = unit_directions(split.m, n_dirs)
    radii = np.linspace(R0, a_max, n_scan)
    pts, marg = margins(radii, dirs)
    ok = (marg >= -tol(np.linalg.norm(pts, axis=1))).reshape(len(radii), len(dirs)).all(axis=1)
    if not ok[0]:
        j = int(np.argmin(marg[: len(dirs)]))
        raise CertificationError(
            f"inward flow fails already at R0={R0:.6g} for lambda={split.lam}", w=pts[j], lam=split.lam
        )
    first_bad = np.flatnonzero(~ok)
    box_limited = len(first_bad) == 0
    if box_limited:
        a = float(a_max)
    else:
        lo, hi = float(radii[first_bad[0] - 1]), float(radii[first_bad[0]])
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            _, mm = margins([mid], dirs)
            if np.all(mm >= 0.0):
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-10 * hi:
                break
        a = lo

    # dense verification of the inner band, doubling the sample until stable
    n_band = 128 if split.m == 1 else 16
    n = n_dirs
    prev = None
    for _ in range(4):
        d = unit_directions(split.m, n)
        band = np.linspace(R0, a, n_band)
        pts, marg = margins(band, d)
        passed = bool(np.all(marg >= -tol(np.linalg.norm(pts, axis=1))))
        if prev is not None and passed == prev:
            break
        prev = passed
        if split.m == 1:
            n_band *= 2
        else:
            n *= 2
    if not passed:
        j = int(np.argmin(marg))
        raise CertificationError(f"inward flow fails at |w|={np.linalg.norm(pts[j]):.6g}", w=pts[j], lam=split.lam)
    inner_min = float(marg.min())
    inner_samples = len(pts) if split.m == 1 else len(d)

    b = a + rho
    outer = np.linspace(b, min(1.5 * b, R), 128 if split.m == 1 else 8)
    d = unit_directions(split.m, n)
    opts = _ring(d, outer)
    rd = sigma * radial_derivative(split, spec, graph, opts)
    if np.any(rd > tol(np.linalg.norm(opts, axis=1))):
        j = int(np.argmax(rd))
        raise CertificationError(f"outward flow on the outer boundary |w|={np.linalg.norm(opts[j]):.6g}", w=opts[j], lam=split.lam)
    return AnnulusSpec(
        a=a, b=b, c0=c0, R0=R0, s0=sat.s0, r=sat.r, delta=sat.delta, eps=sat.eps,
        C=C, rho=rho, C_f=C_f, lam=split.lam, mu_k=split.mu_k, sigma=sigma,
        inner_samples=inner_samples, outer_samples=len(opts) if split.m == 1 else len(d),
        inner_min_margin=inner_min, outer_max=float(rd.max()),
        box_limited=box_limited, covers_twice_b=bool(2 * b <= R),
    )


def gronwall_envelope(annulus: AnnulusSpec, lam: float, w0_norm: float, t) -> np.ndarray:
    """``e^{-d t} |w0|^2 + (1 - e^{-d t}) 2 C / d`` with ``d = mu_k - lambda``."""
    d = annulus.mu_k - lam
    if not d > 0:
        raise PreconditionError("the envelope needs lambda < mu_k")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise PreconditionError("t must be nonnegative")
    C = annulus.C_f**2 / (2 * d)
    e = np.exp(-d * t)
    return e * w0_norm**2 + (1 - e) * 2 * C / d


# --- graphs on demand -------------------------------------------------------------


@dataclass
class GraphDensity:
    n_radial: int = 96
    n_angular: int = 32
    box_factor: float = 4.2


def box_radius(split: SpectralSplit, spec: NonlinearitySpec, factor: float = 4.2) -> float:
    return factor * annulus_constants(split, spec)[2]


def graph_at(basis: SpectralBasis, spec: NonlinearitySpec, k: int, lam: float, lp_config: LPConfig | None = None, density: GraphDensity | None = None, check_every: int = 0):
    """Split at ``lam`` and build a graph over the default box."""
    density = density or GraphDensity()
    split = split_at(basis, k, lam)
    R = box_radius(split, spec, density.box_factor)
    samples = sample_box(split, R, n_radial=density.n_radial, n_angular=density.n_angular)
    return split, build_manifold_graph(split, spec, samples, lp_config, check_every=check_every)


def find_theta(basis: SpectralBasis, spec: NonlinearitySpec, k: int, lp_config: LPConfig | None = None, density: GraphDensity | None = None, rel_tol: float = 0.02, n_dirs: int = 256):
    """Largest ``theta <= beta_k / 8`` certified at ``lambda = mu_k -+ theta`` (bisection).

    Returns ``(theta, annulus at that lambda)``.
    """
    sigma = orientation_sign(spec)
    mu_k = float(basis.levels[k - 1])
    split0 = split_at(basis, k, mu_k - sigma * 1e-3)
    hi = split0.beta / 8

    def attempt(theta):
        lam = mu_k - sigma * theta
        try:
            split, graph = graph_at(basis, spec, k, lam, lp_config, density)
            return invariant_annulus(split, spec, graph, n_dirs=n_dirs)
        except (CertificationError, SaturationFailure, ExtrapolationError):
            return None

    top = attempt(hi)
    if top is not None:
        return hi, top
    lo, best = hi, None
    for _ in range(8):
        lo /= 2
        best = attempt(lo)
        if best is not None:
            break
    if best is None:
        raise CertificationError(f"no certified annulus for theta down to {lo:.3g}", lam=mu_k - sigma * lo)
    hi = 2 * lo
    while hi - lo > rel_tol * lo:
        mid = 0.5 * (lo + hi)
        res = attempt(mid)
        if res is None:
            hi = mid
        else:
            lo, best = mid, res
    return lo, best


# --- reduced trajectories --------------------------------------------------------


class ReducedFieldTable:
    """The reduced vector field tabulated on a polar (m=2) or 1-D (m=1) grid.

    Cheap to evaluate on large point sets; used by the cell-mapping
    attractor search.  Exact evaluations stay available via
    ``reduced_vector_field``.
    """

    def __init__(self, split, spec, graph, radius: float, n_r: int = 240, n_theta: int = 256):
        self.split, self.radius, self.m = split, radius, split.m
        if split.m == 1:
            s = np.linspace(-radius, radius, 2 * n_r + 1)
            vals = reduced_vector_field(split, spec, graph, s[:, None])
            self._f = interp1d(s, vals, axis=0, kind="cubic", assume_sorted=True)
        else:
            r = np.linspace(0.0, radius, n_r + 1)
            th = 2 * math.pi * np.arange(-3, n_theta + 4) / n_theta
            rr, tt = np.meshgrid(r, th, indexing="ij")
            pts = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1)
            vals = reduced_vector_field(split, spec, graph, pts)
            self._f = [RectBivariateSpline(r, th, vals[..., i]) for i in range(2)]

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        norm = np.linalg.norm(w, axis=-1)
        if np.any(norm > self.radius * (1 + 1e-12)):
            raise ExtrapolationError("reduced state outside the tabulated disc")
        if self.m == 1:
            return self._f(w[..., 0])
        th = np.mod(np.arctan2(w[..., 1], w[..., 0]), 2 * math.pi)
        return np.stack([f.ev(norm, th) for f in self._f], axis=-1)


def rk4(field_fn, w0, horizon: float, dt: float, sigma: int = 1, record: bool = False):
    """Classical Runge-Kutta for ``w' = sigma F(w)`` on a batch of states."""
    n = max(1, int(math.ceil(horizon / dt - 1e-9)))
    dt = horizon / n
    w = np.array(w0, dtype=float)
    path = [w.copy()] if record else None

    def F(x):
        return sigma * field_fn(x)

    for _ in range(n):
        k1 = F(w)
        k2 = F(w + 0.5 * dt * k1)
        k3 = F(w + 0.5 * dt * k2)
        k4 = F(w + dt * k3)
        w = w + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if record:
            path.append(w.copy())
    if record:
        return np.arange(n + 1) * dt, np.array(path)
    return w


def integrate_reduced(split, spec, graph, w0, horizon: float, dt: float = 0.1, oriented: bool = True):
    """Exact-field reduced trajectories; returns ``(t, states)``."""
    sigma = orientation_sign(spec) if oriented else 1
    return rk4(lambda w: reduced_vector_field(split, spec, graph, w), w0, horizon, dt, sigma, record=True)


# --- attractor --------------------------------------------------------------------


@dataclass
class AttractorConfig:
    cells: int = 96
    test_points: int = 4
    tau: float | None = None
    dt: float = 0.5
    max_rounds: int = 60
    newton_tol: float = 1e-11


@dataclass(eq=False)
class AttractorCover:
    """Cells of a uniform grid on ``[-L, L]^m`` marked as covering the attractor."""

    mask: np.ndarray
    edges: np.ndarray
    equilibria: np.ndarray
    lam: float
    m: int
    rounds: int = 0
    annulus: AnnulusSpec | None = None

    @property
    def cell_size(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def centers(self) -> np.ndarray:
        c = 0.5 * (self.edges[1:] + self.edges[:-1])
        if self.m == 1:
            return c[self.mask][:, None]
        gx, gy = np.meshgrid(c, c, indexing="ij")
        return np.stack([gx[self.mask], gy[self.mask]], axis=1)

    def cell_index(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float).reshape(-1, self.m)
        idx = np.floor((w - self.edges[0]) / self.cell_size).astype(int)
        return np.clip(idx, 0, len(self.edges) - 2)

    def contains(self, w, slack: int = 0) -> np.ndarray:
        idx = self.cell_index(w)
        mask = self.mask
        if slack:
            mask = ndimage.binary_dilation(mask, iterations=slack, structure=np.ones((3,) * self.m))
        return mask[tuple(idx.T)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow([f"w_{i + 1}" for i in range(self.m)] + ["cell_size", "kind"])
            for c in self.centers():
                out.writerow([f"{x:.12e}" for x in c] + [f"{self.cell_size:.12e}", "cell"])
            for e in self.equilibria:
                out.writerow([f"{x:.12e}" for x in e] + [f"{self.cell_size:.12e}", "equilibrium"])


def compute_attractor(split: SpectralSplit, spec: NonlinearitySpec, graph: ManifoldGraph, annulus: AnnulusSpec, config: AttractorConfig | None = None) -> AttractorCover:
    """Outer cover of the attractor inside the annulus by cell mapping.

    Starting from all cells meeting the annulus, repeatedly keep only the
    cells hit by the time-``tau`` images of test points of kept cells,
    until the collection is stable.  Reduced-field zeros are then polished
    by Newton from the kept cell centers.
    """
    config = config or AttractorConfig()
    _check_graph(split, graph)
    sigma = orientation_sign(spec)
    m = split.m
    L = min(annulus.b * 1.1, graph.radius)
    table = ReducedFieldTable(split, spec, graph, L)
    edges = np.linspace(-L, L, config.cells + 1)
    h = edges[1] - edges[0]
    c = 0.5 * (edges[1:] + edges[:-1])
    grids = np.meshgrid(*([c] * m), indexing="ij")
    centers = np.stack([g.ravel() for g in grids], axis=1)
    half_diag = 0.5 * h * math.sqrt(m)
    dist = np.linalg.norm(centers, axis=1)
    mask = ((dist + half_diag >= annulus.a) & (dist - half_diag <= annulus.b)).reshape((config.cells,) * m)
    d = abs(annulus.mu_k - annulus.lam)
    tau = config.tau if config.tau is not None else 0.5 / d
    offs = (np.arange(config.test_points) + 0.5) / config.test_points - 0.5
    og = np.meshgrid(*([offs] * m), indexing="ij")
    offsets = h * np.stack([g.ravel() for g in og], axis=1)
    rounds = 0
    for rounds in range(1, config.max_rounds + 1):
        idx = np.argwhere(mask)
        pts = (c[idx][:, None, :] + offsets[None]).reshape(-1, m)
        pts = pts[(np.linalg.norm(pts, axis=1) >= annulus.a) & (np.linalg.norm(pts, axis=1) <= annulus.b)]
        img = rk4(table, pts, tau, config.dt, sigma)
        nrm = np.linalg.norm(img, axis=1)
        if np.any(nrm < annulus.a - h) or np.any(nrm > annulus.b + h):
            j = int(np.argmax(np.maximum(annulus.a - nrm, nrm - annulus.b)))
            raise CertificationError("a reduced trajectory left the certified annulus", w=img[j], lam=annulus.lam)
        hit = np.zeros_like(mask)
        cell = np.clip(np.floor((img - edges[0]) / h).astype(int), 0, config.cells - 1)
        hit[tuple(cell.T)] = True
        new = mask & hit
        if np.array_equal(new, mask):
            break
        mask = new
    if not mask.any():
        raise CertificationError("empty attractor cover", lam=annulus.lam)
    cover = AttractorCover(mask=mask, edges=edges, equilibria=np.zeros((0, m)), lam=split.lam, m=m, rounds=rounds, annulus=annulus)
    cover.equilibria = reduced_equilibria(split, spec, graph, cover.centers(), cover, config.newton_tol)
    return cover


def _reduced_jacobian(split, spec, graph, w) -> np.ndarray:
    m = split.m
    scale = 1e-6 * np.maximum(1.0, np.linalg.norm(w, axis=1))
    J = np.empty((len(w), m, m))
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        Fp = reduced_vector_field(split, spec, graph, w + scale[:, None] * e)
        Fm = reduced_vector_field(split, spec, graph, w - scale[:, None] * e)
        J[:, :, i] = (Fp - Fm) / (2 * scale[:, None])
    return J


def reduced_equilibria(split, spec, graph, seeds, cover: AttractorCover | None = None, tol: float = 1e-11, max_iter: int = 50) -> np.ndarray:
    """Newton zeros of the exact reduced field from a batch of seeds, merged.

    Seeds whose iterates leave the graph box or meet a singular Jacobian are
    dropped; zeros are kept when their residual is below ``tol`` (relative to
    ``max(1, |w|)``) and, if a cover is given, they lie in or next to it.
    """
    w = np.array(seeds, dtype=float).reshape(-1, split.m)
    live = np.ones(len(w), dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(live)
        if len(idx) == 0:
            break
        F = reduced_vector_field(split, spec, graph, w[idx])
        J = _reduced_jacobian(split, spec, graph, w[idx])
        good = np.abs(np.linalg.det(J)) > 1e-14
        step = np.zeros_like(F)
        step[good] = np.linalg.solve(J[good], F[good][..., None])[..., 0]
        trial = w[idx] - step
        good &= graph.inside(trial)
        w[idx[good]] = trial[good]
        small = np.linalg.norm(step, axis=1) < 1e-13 * np.maximum(1.0, np.linalg.norm(trial, axis=1))
        live[idx[~good | small]] = False
    res = np.linalg.norm(reduced_vector_field(split, spec, graph, w), axis=1)
    keep = res < tol * np.maximum(1.0, np.linalg.norm(w, axis=1))
    if cover is not None:
        keep &= cover.contains(w, slack=1)
    roots = []
    for x in w[keep]:
        if all(np.linalg.norm(x - y) > 1e-6 * max(1.0, np.linalg.norm(x)) for y in roots):
            roots.append(x)
    roots.sort(key=lambda x: tuple(np.round(x, 9)))
    return np.array(roots).reshape(-1, split.m)


# --- shape -----------------------------------------------------------------------


@dataclass
class ShapeReport:
    m: int
    criteria: dict = field(default_factory=dict)
    components: int = 0
    complement_components: int = 0
    note: str = "combinatorial connectivity and separation check on the cell cover, weaker than a shape-theoretic proof"

    @property
    def passed(self) -> bool:
        return bool(self.criteria) and all(self.criteria.values())

    def as_dict(self) -> dict:
        return {"m": self.m, "passed": self.passed, "criteria": dict(self.criteria), "components": self.components, "complement_components": self.complement_components, "note": self.note}


def certify_sphere_shape(cover: AttractorCover) -> ShapeReport:
    """Two signed components for m=1; a connected ring around 0 for m=2."""
    rep = ShapeReport(m=cover.m)
    if not cover.mask.any():
        rep.criteria["nonempty"] = False
        return rep
    c = 0.5 * (cover.edges[1:] + cover.edges[:-1])
    if cover.m == 1:
        lab, n = ndimage.label(cover.mask)
        rep.components = n
        rep.criteria["two_components"] = n == 2
        signs = [np.sign(c[lab == i]) for i in range(1, n + 1)]
        single = all(np.all(s == s[0]) and s[0] != 0 for s in signs)
        rep.criteria["one_per_sign"] = bool(n == 2 and single and signs[0][0] != signs[1][0])
        return rep
    if cover.m != 2:
        raise PreconditionError("shape certificates exist for m = 1, 2 only")
    lab, n = ndimage.label(cover.mask, structure=np.ones((3, 3)))
    rep.components = n
    rep.criteria["connected"] = n == 1
    comp, nc = ndimage.label(~cover.mask)
    rep.complement_components = nc
    o = cover.cell_index(np.zeros((1, 2)))[0]
    origin_free = not cover.mask[tuple(o)]
    rep.criteria["origin_excluded"] = bool(origin_free)
    if origin_free:
        lbl = comp[tuple(o)]
        border = set(np.unique(np.concatenate([comp[0], comp[-1], comp[:, 0], comp[:, -1]])))
        rep.criteria["origin_enclosed"] = bool(lbl not in border)
    else:
        rep.criteria["origin_enclosed"] = False
    rep.criteria["separates_plane"] = nc >= 2
    return rep
