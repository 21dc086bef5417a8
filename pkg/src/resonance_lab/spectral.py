"""Dirichlet-Laplacian eigenstructure on model domains.

Everything downstream works in the coefficient space of the sine basis: a
field ``u`` is the vector ``a`` with ``u = sum_j a_j phi_j``.  The operator
``B = A - lambda`` is diagonal there, so linear propagators are componentwise
exponentials and the fractional norms are weighted Euclidean norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import PreconditionError, ResourceError

MAX_MODES = 4096
GAUSS_ORDER = 16
ALPHA = 0.5


@dataclass(frozen=True)
class DomainSpec:
    """Model domain: the interval ``(0, length)`` or the square ``(0, length)^2``."""

    kind: str = "interval"
    length: float = math.pi
    quadrature_points_per_dim: int = 64

    def __post_init__(self):
        if self.kind not in ("interval", "square"):
            raise PreconditionError(f"unknown domain kind {self.kind!r}")
        if not self.length > 0:
            raise PreconditionError("domain length must be positive")
        if self.quadrature_points_per_dim < 16:
            raise PreconditionError("quadrature_points_per_dim must be >= 16")

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def measure(self) -> float:
        return self.length**self.dim


def gauss_legendre_panels(length: float, panels: int, order: int = GAUSS_ORDER):
    """Composite Gauss-Legendre rule on ``[0, length]`` with equal panels."""
    x, w = np.polynomial.legendre.leggauss(order)
    h = length / panels
    left = h * np.arange(panels)
    nodes = (left[:, None] + 0.5 * h * (x[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * h * w, panels)
    return nodes, weights


def _sine_gram_error(length: float, nodes, weights, jmax: int) -> float:
    j = np.arange(1, jmax + 1)
    s = np.sqrt(2.0 / length) * np.sin(np.outer(nodes, j) * math.pi / length)
    gram = s.T @ (weights[:, None] * s)
    return float(np.max(np.abs(gram - np.eye(jmax))))


def _quadrature_1d(length: float, min_points: int, jmax: int, tol: float = 1e-12):
    panels = max(1, math.ceil(min_points / GAUSS_ORDER))
    for _ in range(12):
        nodes, weights = gauss_legendre_panels(length, panels)
        if _sine_gram_error(length, nodes, weights, jmax) < tol:
            return nodes, weights
        panels *= 2
    raise ResourceError("could not build a quadrature exact for the retained modes")


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Retained Dirichlet eigenpairs plus the quadrature used to evaluate them.

    Attributes
    ----------
    modes : list of index tuples, one per retained eigenfunction.
    eigenvalues : (N,) nondecreasing array.
    level_keys : (N,) integers, equal keys <=> equal eigenvalues.
    levels : (K,) distinct eigenvalues.
    multiplicities : (K,) multiplicity of each distinct level.
    nodes, weights : quadrature on the domain, ``nodes`` has shape (Q, dim).
    phi : (Q, N) eigenfunction values at the nodes.
    """

    domain: DomainSpec
    modes: list
    eigenvalues: np.ndarray
    level_keys: np.ndarray
    levels: np.ndarray
    multiplicities: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    phi: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.modes)

    @property
    def distinct_eigenvalues(self):
        return list(zip(self.levels.tolist(), self.multiplicities.tolist()))

    def level_index(self, k: int) -> np.ndarray:
        """Mode indices belonging to the k-th distinct level (1-based)."""
        if not 1 <= k <= len(self.levels):
            raise PreconditionError(f"level {k} outside retained levels 1..{len(self.levels)}")
        return np.flatnonzero(self.level_keys == np.unique(self.level_keys)[k - 1])

    def eval_modes(self, points) -> np.ndarray:
        """Eigenfunction values at arbitrary points, shape (P, N)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.domain.dim == 1 and pts.shape[0] == 1 and pts.shape[1] != 1:
            pts = pts.T
        L = self.domain.length
        c = math.sqrt(2.0 / L)
        idx = np.asarray(self.modes)
        out = np.ones((pts.shape[0], self.N))
        for d in range(self.domain.dim):
            out *= c * np.sin(np.outer(pts[:, d], idx[:, d]) * math.pi / L)
        return out

    def field(self, coef) -> "CoefField":
        return CoefField(np.asarray(coef, dtype=float), self)

    def zeros(self) -> "CoefField":
        return CoefField(np.zeros(self.N), self)

    def unit(self, j: int) -> "CoefField":
        """The eigenfunction with (0-based) mode index ``j``."""
        a = np.zeros(self.N)
        a[j] = 1.0
        return CoefField(a, self)

    def project(self, values) -> np.ndarray:
        """H-projection of nodal values onto the basis; works on (..., Q) stacks."""
        return (np.asarray(values) * self.weights) @ self.phi

    def synthesize(self, coef) -> np.ndarray:
        """Nodal values of coefficient vectors; works on (..., N) stacks."""
        return np.asarray(coef) @ self.phi.T


def _interval_modes(n: int):
    return [(j,) for j in range(1, n + 1)], np.arange(1, n + 1) ** 2


def _square_modes(n: int):
    radius = 2
    while True:
        # every level with key <= radius^2 + 1 is complete on the radius x radius grid
        complete = [
            (i, j)
            for i in range(1, radius + 1)
            for j in range(1, radius + 1)
            if i * i + j * j <= radius * radius + 1
        ]
        if len(complete) >= n:
            break
        radius *= 2
    complete.sort(key=lambda p: (p[0] ** 2 + p[1] ** 2, p[0]))
    cutoff = complete[n - 1][0] ** 2 + complete[n - 1][1] ** 2
    chosen = [p for p in complete if p[0] ** 2 + p[1] ** 2 <= cutoff]
    return chosen, np.array([i * i + j * j for i, j in chosen])


def build_basis(domain: DomainSpec, N: int) -> SpectralBasis:
    """Exact Dirichlet eigenpairs of the model domain.

    On the square the last level is completed, so the returned basis can hold
    slightly more than ``N`` modes; the multiplicity table always sums to the
    retained count.
    """
    if N < 1:
        raise PreconditionError("N must be >= 1")
    if N > MAX_MODES:
        raise ResourceError(f"N={N} exceeds the hard cap of {MAX_MODES} modes")
    if domain.kind == "interval":
        modes, keys = _interval_modes(N)
    else:
        modes, keys = _square_modes(N)
    if len(modes) > MAX_MODES:
        raise ResourceError(f"completed level needs {len(modes)} modes > cap {MAX_MODES}")
    scale = (math.pi / domain.length) ** 2
    eigenvalues = scale * keys.astype(float)
    uniq, counts = np.unique(keys, return_counts=True)

    jmax = max(max(m) for m in modes)
    x1, w1 = _quadrature_1d(domain.length, domain.quadrature_points_per_dim, jmax)
    if domain.dim == 1:
        nodes = x1[:, None]
        weights = w1
    else:
        gx, gy = np.meshgrid(x1, x1, indexing="ij")
        nodes = np.column_stack([gx.ravel(), gy.ravel()])
        weights = np.outer(w1, w1).ravel()

    basis = SpectralBasis(
        domain=domain,
        modes=modes,
        eigenvalues=eigenvalues,
        level_keys=keys,
        levels=scale * uniq.astype(float),
        multiplicities=counts,
        nodes=nodes,
        weights=weights,
        phi=np.empty((0, 0)),
    )
    object.__setattr__(basis, "phi", basis.eval_modes(nodes))
    return basis


def basis_for_level(domain: DomainSpec, k: int, factor: float = 12.0, min_modes: int = 8) -> SpectralBasis:
    """Basis keeping every mode with ``mu_j <= factor * mu_k`` (and level k+1)."""
    scale = (math.pi / domain.length) ** 2
    n = max(min_modes, 1)
    while True:
        basis = build_basis(domain, n)
        if len(basis.levels) > k:
            cutoff = max(factor * basis.levels[k - 1], basis.levels[k])
            if basis.eigenvalues[-1] >= cutoff:
                keep = int(np.sum(basis.eigenvalues <= cutoff * (1 + 1e-12)))
                return build_basis(domain, max(keep, min_modes))
        n *= 2
        if n > MAX_MODES:
            raise ResourceError(f"level {k} needs more than {MAX_MODES} modes (scale {scale})")


@dataclass(eq=False)
class CoefField:
    """A Galerkin field: coefficient vector on a basis."""

    coef: np.ndarray
    basis: SpectralBasis

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float)
        if self.coef.shape != (self.basis.N,):
            raise PreconditionError(f"coefficient length {self.coef.shape} != basis size {self.basis.N}")

    def h_norm(self) -> float:
        return float(np.linalg.norm(self.coef))

    def v_norm(self) -> float:
        return float(np.sqrt(np.sum(self.basis.eigenvalues * self.coef**2)))

    def alpha_norm(self, shift: float = 0.0, alpha: float = ALPHA) -> float:
        return float(np.sqrt(np.sum((self.basis.eigenvalues + shift) ** (2 * alpha) * self.coef**2)))

    def values(self, points=None) -> np.ndarray:
        if points is None:
            return self.basis.synthesize(self.coef)
        return self.basis.eval_modes(points) @ self.coef

    def __add__(self, other):
        return CoefField(self.coef + _coef(other), self.basis)

    def __sub__(self, other):
        return CoefField(self.coef - _coef(other), self.basis)

    def __neg__(self):
        return CoefField(-self.coef, self.basis)

    def __mul__(self, scalar):
        return CoefField(self.coef * float(scalar), self.basis)

    __rmul__ = __mul__


def _coef(x):
    return x.coef if isinstance(x, CoefField) else np.asarray(x, dtype=float)


def alpha_weights(basis: SpectralBasis, shift: float = 0.0, alpha: float = ALPHA) -> np.ndarray:
    """Per-mode factors ``(mu_j + a)^alpha`` so that ``||u||_alpha = |w * a|``."""
    return (basis.eigenvalues + shift) ** alpha


def spectral_gap(basis: SpectralBasis, k: int) -> float:
    """Distance from level ``mu_k`` to its neighbouring levels (1-based k)."""
    levels = basis.levels
    if k < 1:
        raise PreconditionError("level index k must be >= 1")
    if k >= len(levels):
        raise PreconditionError(f"gap at level {k} needs level {k + 1}, only {len(levels)} retained")
    up = levels[k] - levels[k - 1]
    if k == 1:
        return float(up)
    return float(min(levels[k - 1] - levels[k - 2], up))


@dataclass(frozen=True, eq=False)
class SpectralSplit:
    """Unstable/center/stable partition of the modes around level ``mu_k``."""

    basis: SpectralBasis
    k: int
    lam: float
    idx_u: np.ndarray
    idx_c: np.ndarray
    idx_s: np.ndarray
    beta: float
    shift: float = 0.0
    alpha: float = ALPHA

    @property
    def mu_k(self) -> float:
        return float(self.basis.levels[self.k - 1])

    @property
    def m(self) -> int:
        return len(self.idx_c)

    @property
    def rates(self) -> np.ndarray:
        """Linear rates ``mu_j - lambda`` of ``B = A - lambda``."""
        return self.basis.eigenvalues - self.lam

    @property
    def idx_us(self) -> np.ndarray:
        return np.sort(np.concatenate([self.idx_u, self.idx_s]))

    def index(self, part: str) -> np.ndarray:
        try:
            return {"u": self.idx_u, "c": self.idx_c, "s": self.idx_s, "us": self.idx_us}[part]
        except KeyError:
            raise PreconditionError(f"unknown part {part!r}") from None

    def project(self, part: str, coef) -> np.ndarray:
        out = np.zeros_like(np.asarray(coef, dtype=float))
        idx = self.index(part)
        out[..., idx] = np.asarray(coef)[..., idx]
        return out

    def alpha_weights(self) -> np.ndarray:
        return alpha_weights(self.basis, self.shift, self.alpha)

    def with_lambda(self, lam: float) -> "SpectralSplit":
        return split_at(self.basis, self.k, lam, shift=self.shift)

    def lift(self, w) -> np.ndarray:
        """Embed center coordinates (..., m) into full coefficient vectors."""
        w = np.asarray(w, dtype=float)
        out = np.zeros(w.shape[:-1] + (self.basis.N,))
        out[..., self.idx_c] = w
        return out


def split_at(basis: SpectralBasis, k: int, lam: float, shift: float = 0.0) -> SpectralSplit:
    """Split the modes at level k for a parameter inside ``|lam - mu_k| < beta_k/4``."""
    beta = spectral_gap(basis, k)
    mu_k = float(basis.levels[k - 1])
    if not abs(lam - mu_k) < beta / 4:
        raise PreconditionError(
            f"lambda={lam} outside the admissible window ({mu_k - beta / 4}, {mu_k + beta / 4})"
        )
    if not shift > -float(basis.eigenvalues[0]):
        raise PreconditionError("shift a must exceed -mu_1")
    key = np.unique(basis.level_keys)[k - 1]
    idx_u = np.flatnonzero(basis.level_keys < key)
    idx_c = np.flatnonzero(basis.level_keys == key)
    idx_s = np.flatnonzero(basis.level_keys > key)
    return SpectralSplit(basis, k, float(lam), idx_u, idx_c, idx_s, beta, float(shift))


def propagate_linear(split: SpectralSplit, part: str, field: CoefField, t: float) -> CoefField:
    """Apply ``exp(-B_part t)`` to the part-projection of ``field``."""
    if part == "u" and t > 0:
        raise PreconditionError("the unstable propagator is only bounded for t <= 0")
    if part == "s" and t < 0:
        raise PreconditionError("the stable propagator is only defined for t >= 0")
    idx = split.index(part)
    out = np.zeros(split.basis.N)
    out[idx] = np.exp(-split.rates[idx] * t) * field.coef[idx]
    return CoefField(out, split.basis)


def semigroup_ratios(split: SpectralSplit, t, modes: Iterable[int] | None = None) -> dict:
    """Ratios between each propagator and its exponential envelope on a grid.

    Finite-dimensional parts are measured in matched ``X^alpha`` norms; the
    stable part also carries the ``H -> X^alpha`` smoothing ratio.  Returns
    the maximum per estimate.
    """
    t = np.asarray(t, dtype=float)
    beta = split.beta
    rates = split.rates
    wts = split.alpha_weights()
    sel = None if modes is None else set(int(j) for j in modes)

    def pick(idx):
        return idx if sel is None else np.array([j for j in idx if j in sel], dtype=int)

    out = {"unstable": 0.0, "center": 0.0, "stable": 0.0, "stable_smoothing": 0.0}
    iu, ic, is_ = pick(split.idx_u), pick(split.idx_c), pick(split.idx_s)
    tn = -np.abs(t)
    if len(iu):
        r = np.exp(-np.outer(tn, rates[iu]) - 0.75 * beta * tn[:, None])
        out["unstable"] = float(r.max())
    if len(ic):
        r = np.exp(-np.outer(t, rates[ic]) - 0.25 * beta * np.abs(t)[:, None])
        out["center"] = float(r.max())
    tp = t[t > 0]
    if len(is_) and len(tp):
        decay = rates[is_] - 0.75 * beta
        out["stable"] = float(np.exp(-np.outer(tp, decay)).max())
        smooth = (tp[:, None] * wts[is_] ** 2) ** split.alpha * np.exp(-np.outer(tp, decay))
        j = np.unravel_index(np.argmax(smooth), smooth.shape)
        best = float(smooth[j])
        # refine the grid maximiser so that finer test grids cannot exceed it
        rate, w2 = decay[j[1]], wts[is_][j[1]] ** 2
        lo, hi = tp[max(j[0] - 1, 0)], tp[min(j[0] + 1, len(tp) - 1)]
        if hi > lo:
            res = minimize_scalar(
                lambda s: -((s * w2) ** split.alpha) * math.exp(-rate * s),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-12},
            )
            best = max(best, float(-res.fun))
        out["stable_smoothing"] = best
    return out


def estimate_semigroup_constant(split: SpectralSplit, t_grid=None, mode_range=None) -> float:
    """Smallest ``M >= 1`` making the sampled propagator bounds hold."""
    if t_grid is None:
        t_grid = np.concatenate([-np.geomspace(1e-4, 50, 400)[::-1], np.geomspace(1e-4, 50, 400)])
    ratios = semigroup_ratios(split, t_grid, mode_range)
    return max(1.0, *ratios.values())


def default_time_step(basis: SpectralBasis) -> float:
    return min(1e-2, 0.1 / float(basis.eigenvalues[-1]))

