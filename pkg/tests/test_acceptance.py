"""Acceptance suite: one PASS/FAIL line per criterion, printed to the terminal.

Run alone with ``pytest tests/test_acceptance.py -v`` (or ``python tests/test_acceptance.py``).
The two full pipeline runs are shared between criteria through module fixtures.
"""

import math
import sys
import time

import numpy as np
import pytest

from resonance_lab import load_config, run_experiment
from resonance_lab.equilibria import deflated_search
from resonance_lab.manifold import LPConfig, invariance_residual, lp_fixed_point_batch, tolerance_budget
from resonance_lab.nonlinearity import asymmetric_tanh, m_beta, m_beta_quadrature, smallness_margin, tanh_nonlinearity
from resonance_lab.reduced import certify_sphere_shape, compute_attractor, graph_at, invariant_annulus
from resonance_lab.semiflow import IntegratorConfig, energy_coef, integrate, vector_field
from resonance_lab.spectral import DomainSpec, basis_for_level, build_basis, estimate_semigroup_constant, spectral_gap, split_at

from conftest import interval_graph, square_graph

M_BETA_3 = 4.71332008255964  # closed form evaluated in 50-digit arithmetic
PRODUCT = 0.2 * 2 * math.sqrt(2 / math.pi)  # saturated value of |u|_H (mu_1 - lambda)


def verdict(capsys, n, ok, detail, elapsed):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail} [{elapsed:.1f} s]")
    assert ok, detail


@pytest.fixture(scope="module")
def standard_run():
    t0 = time.perf_counter()
    rep = run_experiment(load_config("interval-k1-tanh02"))
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def dual_run():
    t0 = time.perf_counter()
    rep = run_experiment(load_config("interval-k1-dual"))
    return rep, time.perf_counter() - t0


def test_criterion_1_constants(capsys):
    t0 = time.perf_counter()
    basis = build_basis(DomainSpec("interval"), 12)
    mus = basis.levels[:4]
    exact_mu = np.array_equal(mus, np.array([1.0, 4.0, 9.0, 16.0]))
    gaps = [spectral_gap(basis, k) for k in (1, 2, 3)]
    closed, quad = m_beta(3.0), m_beta_quadrature(3.0)
    ok = (
        exact_mu
        and gaps == [3.0, 3.0, 5.0]
        and abs(closed - M_BETA_3) < 1e-5
        and abs(closed - quad) < 1e-8
    )
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 1.0
    verdict(capsys, 1, ok, f"mu={mus.tolist()} beta={gaps} M_beta(3)={closed:.8f} quadrature diff={abs(closed - quad):.2e}", elapsed)


def test_criterion_2_contraction(capsys):
    t0 = time.perf_counter()
    basis = basis_for_level(DomainSpec("interval"), 1)
    split = split_at(basis, 1, 0.95)
    Y = np.random.default_rng(2024).uniform(-10, 10, (20, 1))
    sol = lp_fixed_point_batch(split, tanh_nonlinearity(0.1), Y, LPConfig(tol=1e-10))
    worst, iters = float(sol.max_ratio.max()), int(sol.iterations.max())
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.4713 * 1.1 and iters <= 40 and elapsed < 60
    verdict(capsys, 2, ok, f"max ratio {worst:.4f} (limit {0.4713 * 1.1:.4f}), max iterations {iters}", elapsed)


def test_criterion_3_manifold_lipschitz(capsys):
    t0 = time.perf_counter()
    basis = basis_for_level(DomainSpec("interval"), 1)
    spec = tanh_nonlinearity(0.1)
    L0 = 1 / (1 - 0.4713320082559644) + 1
    grid = [0.95, 0.96, 0.97, 0.98, 0.99]
    lips = [graph_at(basis, spec, 1, lam)[1].lipschitz for lam in grid]
    elapsed = time.perf_counter() - t0
    ok = max(lips) <= L0 and elapsed < 120
    verdict(capsys, 3, ok, f"sampled Lipschitz {max(lips):.4f} <= L0 {L0:.4f} over lambda {grid}", elapsed)


@pytest.mark.slow
def test_criterion_4_invariance(capsys):
    t0 = time.perf_counter()
    _, spec, split, graph = interval_graph(0.2, 0.95)
    cfg = IntegratorConfig(h=0.01)
    ys = np.linspace(-0.3, 0.3, 10) * graph.radius
    rows = []
    for y in ys:
        res = invariance_residual(split, spec, graph, [y], 5.0, cfg)
        budget = tolerance_budget(split, spec, graph, [y], 5.0, cfg)
        rows.append((res, budget))
    elapsed = time.perf_counter() - t0
    ok = all(r <= b["total"] for r, b in rows) and elapsed < 120
    worst = max(rows, key=lambda rb: rb[0] / rb[1]["total"])
    b = worst[1]
    verdict(
        capsys, 4, ok,
        f"10 points, worst residual {worst[0]:.3e} vs budget {b['total']:.3e} "
        f"(fixed point {b['fixed_point']:.1e}, interpolation {b['interpolation']:.1e}, integrator {b['integrator']:.1e})",
        elapsed,
    )


@pytest.mark.slow
def test_criterion_5_annulus(capsys, standard_run):
    rep, elapsed = standard_run
    rows = rep.data["certificates"]["annulus"]
    env = rep.data["certificates"]["envelope"]
    lams = [r["lam"] for r in rows]
    claims = rep.data["claims"]
    ok = (
        lams == [0.95, 0.975, 0.99]
        and all(r["inner_samples"] >= 256 for r in rows)
        and all(abs(r["c0"] - 0.15958) < 1e-4 for r in rows)
        and claims["annulus_certified"]
        and claims["annulus_radii_grow_toward_resonance"]
        and claims["gronwall_envelope"]
    )
    ab = ", ".join(f"[{r['a']:.3f}, {r['b']:.3f}]" for r in rows)
    worst = max(e["worst_relative_excess"] for e in env)
    verdict(capsys, 5, ok, f"c0={rows[0]['c0']:.5f}, annuli {ab}, envelope excess {worst:.1e}", elapsed)


@pytest.mark.slow
def test_criterion_6_sphere_shapes(capsys, standard_run):
    rep, _ = standard_run
    interval_ok = all(s["shape"]["components"] == 2 and s["shape"]["passed"] for s in rep.data["certificates"]["attractor"])
    t0 = time.perf_counter()
    basis, spec, split, graph = square_graph(0.25, 4.95)
    ann = invariant_annulus(split, spec, graph)
    cover = compute_attractor(split, spec, graph, ann)
    shape = certify_sphere_shape(cover)
    n_eq = len(cover.equilibria)
    elapsed = time.perf_counter() - t0
    # the proof's smallness condition, evaluated with the measured semigroup constant
    M = max(estimate_semigroup_constant(split_at(basis, 2, 5 - 0.05 * 2.0**-i)) for i in range(12))
    _, margin = smallness_margin(spec, basis, 2, M)
    ok = interval_ok and shape.passed and n_eq >= 2 and elapsed < 600
    verdict(
        capsys, 6, ok,
        f"interval S^0 {'ok' if interval_ok else 'failed'}; square c=0.25: shape {'ok' if shape.passed else 'failed'} "
        f"({shape.as_dict()['criteria']}), {n_eq} reduced equilibria; "
        f"note: smallness margin with measured M={M:.3f} is {margin:.3f}",
        elapsed,
    )


@pytest.mark.slow
def test_criterion_7_multiplicity(capsys, standard_run):
    rep, elapsed = standard_run
    br = rep.data["branches"]
    products = np.array(br["divergence_products"])
    cv = br["cross_validation"]
    ok = (
        all(c == 3 for c in br["counts"])
        and products.shape[0] == 2
        and bool(np.all(np.abs(products / PRODUCT - 1) <= 0.1))
        and all(v < 1e-8 for v in br["bounded_sup_v_norm"])
        and cv["every_root_is_an_omega_limit"]
        and cv["every_omega_limit_is_a_root"]
        and sum(cv["escaped"]) == 0
    )
    verdict(
        capsys, 7, ok,
        f"counts {br['counts']}, products {products.min():.4f}..{products.max():.4f} vs {PRODUCT:.4f}, "
        f"bounded branch sup {max(br['bounded_sup_v_norm']):.1e}, cross-validated {cv['every_root_is_an_omega_limit'] and cv['every_omega_limit_is_a_root']}",
        elapsed,
    )


@pytest.mark.slow
def test_criterion_8_duality(capsys, standard_run, dual_run):
    dual, elapsed = dual_run
    mu = dual.data["constants"]["mu_k"]
    theta = dual.data["constants"]["theta"]
    grid = np.array(dual.data["lambda_grid"])
    side_ok = bool(np.all(grid > mu) and np.all(grid <= mu + theta + 1e-15))
    dual_ok = side_ok and dual.passed and min(dual.data["branches"]["counts"]) >= 3
    # mirrored problem f -> -f(x, -t): every equilibrium maps to its negative, coefficient by coefficient
    t0 = time.perf_counter()
    basis = basis_for_level(DomainSpec("interval"), 1)
    spec = asymmetric_tanh(0.2, 0.1)
    mirror = spec.mirrored()
    worst = 0.0
    for lam in (0.95, 0.975, 0.99):
        a = sorted((e.coef for e in deflated_search(basis, spec, lam, k=1)), key=lambda c: c[0])
        b = sorted((-e.coef for e in deflated_search(basis, mirror, lam, k=1)), key=lambda c: c[0])
        worst = max([worst] + [float(np.max(np.abs(x - y))) for x, y in zip(a, b)] + [np.inf] * (len(a) != len(b)))
    elapsed += time.perf_counter() - t0
    std = standard_run[0].data["constants"]
    ok = dual_ok and worst < 1e-9 and elapsed < 600
    verdict(
        capsys, 8, ok,
        f"dual side grid in ({mu:g}, {mu + theta:g}] {side_ok}, dual claims {dual.passed}; mirrored roots max diff {worst:.1e}; "
        f"report only: annulus standard [{std['a']:.3f}, {std['b']:.3f}] vs dual [{dual.data['constants']['a']:.3f}, {dual.data['constants']['b']:.3f}]",
        elapsed,
    )


def test_criterion_9_gradient_structure(capsys):
    t0 = time.perf_counter()
    basis = basis_for_level(DomainSpec("interval"), 1)
    spec = tanh_nonlinearity(0.2)
    lam = 0.95
    rng = np.random.default_rng(99)
    starts = rng.standard_normal((50, basis.N)) * 10 / np.sqrt(basis.eigenvalues)
    _, path = integrate(basis, spec, lam, starts, 20.0, 0.01, record_every=10)
    E = energy_coef(basis, spec, lam, path)  # (time, trajectory)
    rise = np.diff(E, axis=0) / (1 + np.abs(E[:-1]))
    monotone = float(rise.max())
    worst_fd = 0.0
    h = 1e-5
    for traj in range(50):
        for a in path[:: max(1, len(path) // 5), traj]:
            d = rng.standard_normal(basis.N)
            d /= np.linalg.norm(d)
            fd = (energy_coef(basis, spec, lam, a + h * d) - energy_coef(basis, spec, lam, a - h * d)) / (2 * h)
            exact = -vector_field(basis, spec, lam, a) @ d
            worst_fd = max(worst_fd, abs(fd - exact) / (1 + abs(exact)))
    elapsed = time.perf_counter() - t0
    ok = monotone <= 1e-7 and worst_fd <= 1e-5 and elapsed < 120
    verdict(capsys, 9, ok, f"max relative energy increase {monotone:.1e}, gradient mismatch {worst_fd:.1e}", elapsed)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
