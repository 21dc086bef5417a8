"""Steady states of the Galerkin system, deflated multi-root search and
natural-parameter continuation toward resonance."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, PreconditionError, SingularJacobianError
from .nonlinearity import NonlinearitySpec, l1_norm, nemytskii, nemytskii_bound, nemytskii_jacobian
from .semiflow import energy_coef, exp_euler, vector_field
from .spectral import SpectralBasis

BOUNDED = "bounded"
BLOWUP = "blowup_candidate"
RESIDUAL_TOL = 1e-10
DISTINCT_TOL = 1e-4
DEFLATION_EPS = 1e-6
DEFLATION_SHIFT = 1.0


@dataclass
class Equilibrium:
    coef: np.ndarray
    lam: float
    residual: float
    h_norm: float
    v_norm: float
    energy: float
    iterations: int = 0
    classification: str = BOUNDED

    def center(self, idx) -> np.ndarray:
        return self.coef[idx]


def residual(basis: SpectralBasis, spec: NonlinearitySpec, lam: float, coef) -> np.ndarray:
    """``-(mu_j - lambda) a_j + (f(u), phi_j)``, the steady-state vector field."""
    return vector_field(basis, spec, lam, coef)


def jacobian(basis: SpectralBasis, spec: NonlinearitySpec, lam: float, coef) -> np.ndarray:
    return -np.diag(basis.eigenvalues - lam) + nemytskii_jacobian(basis, spec, coef)


def make_equilibrium(basis, spec, lam, coef, iterations=0) -> Equilibrium:
    coef = np.asarray(coef, dtype=float)
    return Equilibrium(
        coef=coef,
        lam=float(lam),
        residual=float(np.max(np.abs(residual(basis, spec, lam, coef)))),
        h_norm=float(np.linalg.norm(coef)),
        v_norm=float(math.sqrt(coef**2 @ basis.eigenvalues)),
        energy=float(energy_coef(basis, spec, lam, coef)),
        iterations=iterations,
    )


def _deflation(u, roots):
    """``log M`` gradient for ``M = prod (1/(eps + |u - r|^2) + shift)``."""
    grad = np.zeros_like(u)
    for r in roots:
        diff = u - r
        q = diff @ diff
        m = 1.0 / (DEFLATION_EPS + q) + DEFLATION_SHIFT
        grad += (-2.0 * diff / (DEFLATION_EPS + q) ** 2) / m
    return grad


def newton_solve(basis: SpectralBasis, spec: NonlinearitySpec, lam: float, u_init, tol: float = RESIDUAL_TOL, max_iter: int = 60, deflate=(), cond_max: float = 1e13) -> Equilibrium:
    """Damped Newton on the steady-state equations, optionally deflated.

    The backtracking line search works on the undeflated residual norm
    times the deflation factor, so found roots repel the iterates.
    """
    u = np.array(u_init, dtype=float)
    if u.shape != (basis.N,):
        raise PreconditionError(f"initial guess must have {basis.N} coefficients")
    roots = [np.asarray(r, dtype=float) for r in deflate]

    def merit(v):
        F = residual(basis, spec, lam, v)
        scale = 1.0
        for r in roots:
            scale *= 1.0 / (DEFLATION_EPS + np.sum((v - r) ** 2)) + DEFLATION_SHIFT
        return F, scale * np.linalg.norm(F)

    F, phi = merit(u)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(F)) < tol:
            return make_equilibrium(basis, spec, lam, u, it - 1)
        J = jacobian(basis, spec, lam, u)
        if np.linalg.cond(J) > cond_max:
            raise SingularJacobianError(f"singular Jacobian at lambda={lam} (near a bifurcation)")
        d = np.linalg.solve(J, -F)
        if roots:
            denom = 1.0 - _deflation(u, roots) @ d
            if abs(denom) < 1e-14:
                raise DivergenceError("deflated Newton step is undefined")
            d = d / denom
        t = 1.0
        for _ in range(30):
            trial = u + t * d
            Ft, pt = merit(trial)
            if np.all(np.isfinite(Ft)) and pt <= (1 - 1e-4 * t) * phi:
                break
            t *= 0.5
        else:
            trial, (Ft, pt) = u + t * d, merit(u + t * d)
        u, F, phi = trial, Ft, pt
        if not np.all(np.isfinite(u)):
            raise DivergenceError(f"Newton diverged at lambda={lam}")
    if np.max(np.abs(F)) < tol:
        return make_equilibrium(basis, spec, lam, u, max_iter)
    raise DivergenceError(f"Newton did not converge at lambda={lam} (residual {np.max(np.abs(F)):.3g})")


def center_direction_l1(basis: SpectralBasis, k: int) -> float:
    idx = basis.level_index(k)
    return float(l1_norm(basis, np.eye(basis.N)[idx[0]]))


def default_seeds(basis: SpectralBasis, spec: NonlinearitySpec, lam: float, k: int, n_angles: int = 8) -> list:
    """0 and predicted large solutions ``+- s_pred phi_c`` with ``s_pred = c r / |mu_k - lambda|``."""
    idx = basis.level_index(k)
    mu_k = float(basis.levels[k - 1])
    d = abs(mu_k - lam)
    if d == 0:
        raise PreconditionError("lambda must differ from mu_k")
    c = max(spec.fbar, spec.funder)
    seeds = [np.zeros(basis.N)]
    if len(idx) == 1:
        s = c * center_direction_l1(basis, k) / d
        for sign in (1.0, -1.0):
            u = np.zeros(basis.N)
            u[idx[0]] = sign * s
            seeds.append(u)
    else:
        e = np.eye(basis.N)
        r = float(np.min(l1_norm(basis, e[idx])))
        s = c * r / d
        for th in 2 * math.pi * np.arange(n_angles) / n_angles:
            u = np.zeros(basis.N)
            u[idx[0]], u[idx[1]] = s * math.cos(th), s * math.sin(th)
            seeds.append(u)
    return seeds


def _distinct(found, u) -> bool:
    return all(np.linalg.norm(u - e.coef) > DISTINCT_TOL for e in found)


def deflated_search(basis: SpectralBasis, spec: NonlinearitySpec, lam: float, seeds=None, k: int | None = None, rounds: int = 3) -> list:
    """Distinct equilibria from Newton over all seeds, deflating found roots."""
    if seeds is None:
        if k is None:
            raise PreconditionError("either seeds or the resonance index k is required")
        seeds = default_seeds(basis, spec, lam, k)
    if len(seeds) == 0:
        raise PreconditionError("seed list is empty")
    found: list[Equilibrium] = []
    for seed in seeds:
        for _ in range(rounds):
            try:
                eq = newton_solve(basis, spec, lam, seed, deflate=[e.coef for e in found])
            except (DivergenceError, SingularJacobianError):
                break
            if not _distinct(found, eq.coef):
                break
            found.append(eq)
    found.sort(key=lambda e: (round(e.h_norm, 6), tuple(np.round(e.coef, 6))))
    return found


# --- continuation ------------------------------------------------------------------


@dataclass
class Branch:
    points: list = field(default_factory=list)  # Equilibrium per lambda
    terminated: str | None = None
    classification: str = BOUNDED
    max_step: float = 0.0

    @property
    def lams(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    def h_norms(self) -> np.ndarray:
        return np.array([p.h_norm for p in self.points])

    def v_norms(self) -> np.ndarray:
        return np.array([p.v_norm for p in self.points])

    def classify(self):
        v = self.v_norms()
        grows = len(v) > 1 and bool(np.all(np.diff(v) > 0)) and v[-1] > 10 * max(v[0], 1e-300)
        self.classification = BLOWUP if grows else BOUNDED
        for p in self.points:
            p.classification = self.classification
        return self.classification

    def to_rows(self, branch_id: int):
        return [
            [branch_id, f"{p.lam:.12e}", f"{p.h_norm:.12e}", f"{p.v_norm:.12e}", f"{p.residual:.6e}", p.classification, f"{p.energy:.12e}"]
            for p in self.points
        ]


BRANCH_HEADER = ["branch", "lambda", "H_norm", "V_norm", "residual", "classification", "energy"]


def write_branches_csv(path, branches):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BRANCH_HEADER)
        for i, b in enumerate(branches):
            w.writerows(b.to_rows(i))


def geometric_grid(mu_k: float, theta: float, side: int = -1, levels: int = 9) -> np.ndarray:
    """``mu_k + side * theta * 2^-i`` for ``i = 0 .. levels-1``, approaching ``mu_k``."""
    if not theta > 0:
        raise PreconditionError("theta must be positive")
    return mu_k + side * theta * 2.0 ** -np.arange(levels)


def _continue_one(basis, spec, eq: Equilibrium, lam_grid, max_halvings: int = 8) -> Branch:
    branch = Branch(points=[eq])
    prev = eq
    for lam in lam_grid[1:]:
        target, h, halvings = float(lam), float(lam) - prev.lam, 0
        cur = prev
        while cur.lam != target:
            nxt_lam = target if abs(target - cur.lam) <= abs(h) else cur.lam + h
            try:
                nxt = newton_solve(basis, spec, nxt_lam, cur.coef)
            except (DivergenceError, SingularJacobianError) as exc:
                halvings += 1
                if halvings > max_halvings:
                    branch.terminated = f"lost at lambda={nxt_lam:.8g}: {exc}"
                    return branch
                h /= 2
                continue
            branch.max_step = max(branch.max_step, float(np.linalg.norm(nxt.coef - cur.coef)))
            cur = nxt
        branch.points.append(cur)
        prev = cur
    return branch


def continue_branch(basis: SpectralBasis, spec: NonlinearitySpec, k: int, lam_grid, seeds=None) -> list:
    """Natural-parameter continuation of every root found at the first grid point."""
    lam_grid = np.asarray(lam_grid, dtype=float)
    mu_k = float(basis.levels[k - 1])
    d = np.abs(lam_grid - mu_k)
    if np.any(d == 0) or np.any(np.diff(d) >= 0):
        raise PreconditionError("lambda grid must approach mu_k monotonically without reaching it")
    start = deflated_search(basis, spec, float(lam_grid[0]), seeds=seeds, k=k)
    branches = [_continue_one(basis, spec, eq, lam_grid) for eq in start]
    for b in branches:
        b.classify()
    return branches


def divergence_products(branch: Branch, mu_k: float) -> np.ndarray:
    """``|u|_H * |mu_k - lambda|`` along a branch (constant for 1/d growth)."""
    return branch.h_norms() * np.abs(mu_k - branch.lams)


# --- dynamics cross-checks ---------------------------------------------------------


def omega_limit(basis, spec, lam, u0, horizon: float, h: float = 0.5, min_steps: int = 200):
    """End state of exponential-Euler integration (its fixed points are exactly the equilibria).

    The step is capped at ``horizon / min_steps``: with few large steps the
    scheme contracts toward a fixed point only at the rate of its explicit
    nonlinear part, not at the true decay rate.
    """
    h = min(h, horizon / min_steps)
    n = max(1, int(math.ceil(horizon / h)))
    a = np.array(u0, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n):
            a = exp_euler(basis, spec, lam, a, h)
            if not np.all(np.isfinite(a)):
                raise DivergenceError(f"integration blew up at lambda={lam}")
    return a


def stable_perturbations(basis, spec, eq: Equilibrium, size: float = 1e-3, count: int = 2, rng=None) -> np.ndarray:
    """Perturbed copies of ``eq`` along eigenvectors of its (symmetric) Jacobian with negative eigenvalues."""
    rng = np.random.default_rng(0) if rng is None else rng
    J = jacobian(basis, spec, eq.lam, eq.coef)
    vals, vecs = np.linalg.eigh(0.5 * (J + J.T))
    stable = vecs[:, vals < 0]
    if stable.shape[1] == 0:
        return np.zeros((0, basis.N))
    out = []
    for _ in range(count):
        c = rng.standard_normal(stable.shape[1])
        out.append(eq.coef + size * stable @ (c / np.linalg.norm(c)))
    return np.array(out)


def horizon_for(basis, spec, eq: Equilibrium, factor: float = 30.0) -> float:
    """Integration horizon long enough for the slowest stable decay to reach ``e^-factor``."""
    J = jacobian(basis, spec, eq.lam, eq.coef)
    vals = np.linalg.eigvalsh(0.5 * (J + J.T))
    neg = vals[vals < 0]
    slow = float(-neg.max()) if len(neg) else 1.0
    return factor / slow


def match(found, u, tol: float = 1e-6):
    """Index of the equilibrium within ``tol`` (H-norm, relative to max(1,|u|)) or None."""
    for i, e in enumerate(found):
        if np.linalg.norm(u - e.coef) <= tol * max(1.0, e.h_norm):
            return i
    return None


def cross_validate(basis, spec, lam, found, n_random: int = 8, rng=None, h: float = 5.0, scale: float | None = None, factor: float = 15.0, max_extensions: int = 8) -> dict:
    """Match Newton roots with omega-limits of long integrations.

    Every stable root must be the omega-limit of perturbations along its
    stable eigenvectors; every omega-limit of a random start must be a root.
    Saddles (possible once lambda exceeds mu_1) cannot be reached forward in
    time and are reported as ``None``; starts that run off to infinity have
    no omega-limit and are only counted (``escaped``).  A random start is
    integrated for up to ``max_extensions`` horizons until it matches a root
    or escapes; one still unresolved after that counts against the claim.
    The exponential-Euler
    map has exactly the equilibria as fixed points, so a large step only
    changes the speed of approach, not the limits.
    """
    rng = np.random.default_rng(1) if rng is None else rng
    recovered, unstable_dims, jacobians = [], [], []
    for i, e in enumerate(found):
        J = jacobian(basis, spec, lam, e.coef)
        jacobians.append(J)
        unstable_dims.append(int(np.sum(np.linalg.eigvalsh(0.5 * (J + J.T)) > 0)))
        pert = stable_perturbations(basis, spec, e, rng=rng)
        ok = False
        if len(pert):
            try:
                ends = omega_limit(basis, spec, lam, pert, horizon_for(basis, spec, e, factor), h)
                ok = all(match(found, end) == i for end in ends)
            except DivergenceError:
                ok = False
        recovered.append(ok if ok or unstable_dims[-1] == 0 else None)
    slow = max([horizon_for(basis, spec, e, factor) for e in found], default=100.0)
    # leaving a saddle neighbourhood takes about 1/(unstable rate)
    rates = [v for J in jacobians for v in np.linalg.eigvalsh(0.5 * (J + J.T)) if v > 0]
    if rates:
        slow = max(slow, factor / min(rates))
    if scale is None:
        scale = 2 * max([e.h_norm for e in found] + [nemytskii_bound(spec, basis)])
    amplitude = scale * rng.uniform(0.1, 1.0, (n_random, 1))  # reach inside and beyond the large roots
    starts = amplitude * rng.standard_normal((n_random, basis.N)) / np.sqrt(basis.eigenvalues)
    escape = 1.5 * max([e.h_norm for e in found], default=0.0) + 1.0
    limits, escaped = [], 0
    for start in starts:
        # long transits near a saddle's stable manifold need extra horizons
        end, j = start, None
        for _ in range(max_extensions):
            try:
                end = omega_limit(basis, spec, lam, end, slow, h)
            except DivergenceError:
                end = None
            if end is None or np.linalg.norm(end) > escape:
                break
            j = match(found, end, tol=1e-5)
            if j is not None:
                break
        if end is None or np.linalg.norm(end) > escape:
            escaped += 1
            continue
        limits.append(j)
    applicable = [r for r in recovered if r is not None]
    return {
        "every_root_is_an_omega_limit": all(applicable),
        "every_omega_limit_is_a_root": all(j is not None for j in limits),
        "recovered": recovered,
        "random_limits": limits,
        "escaped": escaped,
        "saddles": sum(r is None for r in recovered),
        "vacuous": not applicable and not limits,
        "unstable_dimensions": unstable_dims,
    }


def drift_horizon(basis, spec, eq: Equilibrium, horizon: float = 10.0, growth: float = 5.0) -> float:
    """``horizon``, shortened so that an unstable direction of rate ``rho`` grows by at most ``e^growth``."""
    J = jacobian(basis, spec, eq.lam, eq.coef)
    rho = float(np.linalg.eigvalsh(0.5 * (J + J.T)).max())
    return horizon if rho <= 0 else min(horizon, growth / rho)


def drift(basis, spec, eq: Equilibrium, horizon: float = 10.0, h: float | None = None) -> float:
    """H-distance travelled by the flow from ``eq`` over ``horizon``."""
    h = min(1e-2, 0.1 / float(basis.eigenvalues[-1])) if h is None else h
    end = omega_limit(basis, spec, eq.lam, eq.coef, horizon, h)
    return float(np.linalg.norm(end - eq.coef))


def energy_gap_ok(found, tol_rel: float = 1e-7) -> bool:
    """The bounded root's energy differs from every large root's by more than 10x the energy tolerance."""
    if len(found) < 2:
        return False
    small = min(found, key=lambda e: e.h_norm)
    return all(abs(e.energy - small.energy) > 10 * tol_rel * (1 + abs(small.energy)) for e in found if e is not small)


def multiplicity_report(basis: SpectralBasis, spec: NonlinearitySpec, k: int, lam_grid, opposite_grid=None, cross_check: bool = True, rng=None) -> dict:
    """Equilibrium counts, branch table and divergence diagnostics over a grid.

    ``lam_grid`` lies on the bifurcation side and approaches ``mu_k``;
    ``opposite_grid`` (optional) mirrors it on the other side, where no
    branch may blow up.
    """
    mu_k = float(basis.levels[k - 1])
    lam_grid = np.asarray(lam_grid, dtype=float)
    branches = continue_branch(basis, spec, k, lam_grid)
    counts, checks = [], []
    for lam in lam_grid:
        found = deflated_search(basis, spec, float(lam), k=k)
        counts.append(len(found))
        if cross_check:
            checks.append(cross_validate(basis, spec, float(lam), found, rng=rng))
    diverging = [b for b in branches if b.classification == BLOWUP]
    bounded = [b for b in branches if b.classification == BOUNDED]
    products = [divergence_products(b, mu_k) for b in diverging]
    start = deflated_search(basis, spec, float(lam_grid[0]), k=k)
    horizons = [drift_horizon(basis, spec, e) for e in start]
    drifts = [drift(basis, spec, e, hz) for e, hz in zip(start, horizons)]
    report = {
        "mu_k": mu_k,
        "grid": lam_grid.tolist(),
        "counts": counts,
        "branches": [
            {
                "classification": b.classification,
                "terminated": b.terminated,
                "h_norms": b.h_norms().tolist(),
                "v_norms": b.v_norms().tolist(),
                "max_residual": max(p.residual for p in b.points),
                "max_step": b.max_step,
            }
            for b in branches
        ],
        "divergence_products": [p.tolist() for p in products],
        "bounded_sup_v_norm": [float(b.v_norms().max()) for b in bounded],
        "drift": drifts,
        "drift_horizons": horizons,
        "energy_gap_ok": energy_gap_ok(start),
        "claims": {
            "at_least_three_solutions": bool(min(counts) >= 3),
            "two_diverging_branches": len(diverging) >= 2,
            "bounded_branch_present": len(bounded) >= 1,
            "equilibria_stationary_under_flow": bool(max(drifts) < 1e-6),
        },
    }
    if cross_check:
        report["cross_validation"] = {
            "every_root_is_an_omega_limit": all(c["every_root_is_an_omega_limit"] for c in checks),
            "every_omega_limit_is_a_root": all(c["every_omega_limit_is_a_root"] for c in checks),
            "escaped": [c["escaped"] for c in checks],
            "saddles": [c["saddles"] for c in checks],
            "applicable": not all(c["vacuous"] for c in checks),
        }
        if report["cross_validation"]["applicable"]:
            report["claims"]["omega_limits_match_roots"] = bool(
                report["cross_validation"]["every_root_is_an_omega_limit"] and report["cross_validation"]["every_omega_limit_is_a_root"]
            )
        else:
            report["cross_validation"]["note"] = "every root is a saddle and every start diverges: no forward-time witness"
    if opposite_grid is not None:
        opp = continue_branch(basis, spec, k, np.asarray(opposite_grid, dtype=float))
        report["opposite_side_classifications"] = [b.classification for b in opp]
        report["claims"]["no_blowup_on_opposite_side"] = all(b.classification != BLOWUP for b in opp)
        report["_opposite_branches"] = opp
    report["_branches"] = branches
    return report
