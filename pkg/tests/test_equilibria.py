import math

import numpy as np
import pytest
from scipy.optimize import brentq

from resonance_lab.equilibria import (
    BLOWUP,
    BOUNDED,
    BRANCH_HEADER,
    Branch,
    continue_branch,
    cross_validate,
    deflated_search,
    default_seeds,
    divergence_products,
    drift,
    drift_horizon,
    energy_gap_ok,
    geometric_grid,
    make_equilibrium,
    newton_solve,
    write_branches_csv,
)
from resonance_lab.errors import PreconditionError
from resonance_lab.nonlinearity import tanh_nonlinearity
from resonance_lab.reduced import reduced_vector_field

from conftest import interval_graph

PRODUCT = 0.2 * 2 * math.sqrt(2 / math.pi)  # c |phi_1|_{L^1} = 0.31915


def test_zero_is_a_root(interval, tanh02):
    eq = newton_solve(interval, tanh02, 0.7, np.zeros(interval.N))
    assert eq.h_norm == 0.0 and eq.iterations == 0


def test_affine_problem_one_newton_step(interval, const):
    eq = newton_solve(interval, const, 0.95, np.zeros(interval.N))
    g = np.array([0.3 * math.sqrt(2 / math.pi) * (1 - math.cos(j * math.pi)) / j for j in range(1, interval.N + 1)])
    np.testing.assert_allclose(eq.coef, g / (interval.eigenvalues - 0.95), atol=1e-12)
    assert eq.iterations == 1


def test_large_root_matches_reduced_root(interval, tanh02):
    eq = newton_solve(interval, tanh02, 0.95, 6.4 * interval.unit(0).coef)
    assert eq.residual < 1e-10
    _, spec, split, graph = interval_graph(0.2, 0.95)
    w = brentq(lambda s: reduced_vector_field(split, spec, graph, np.array([[s]]))[0, 0], 5.0, 8.0, xtol=1e-13)
    lifted = graph.lift(np.array([[w]]))[0]
    assert np.linalg.norm((lifted - eq.coef) * np.sqrt(interval.eigenvalues)) < 1e-4


def test_exactly_three_roots_below_resonance(interval, tanh02):
    found = deflated_search(interval, tanh02, 0.95, k=1)
    assert len(found) == 3
    norms = sorted(e.h_norm for e in found)
    assert norms[0] == 0.0 and norms[1] == pytest.approx(norms[2], rel=1e-12)
    assert norms[1] == pytest.approx(6.2751, abs=5e-3)


def test_one_root_above_resonance(interval, tanh02):
    found = deflated_search(interval, tanh02, 1.05, k=1)
    assert len(found) == 1 and found[0].h_norm == 0.0


def test_dual_orientation_three_roots_above(interval):
    found = deflated_search(interval, tanh_nonlinearity(-0.2, "dual"), 1.05, k=1)
    assert len(found) == 3


def test_seeds_need_k_or_list(interval, tanh02):
    with pytest.raises(PreconditionError):
        deflated_search(interval, tanh02, 0.95)
    with pytest.raises(PreconditionError):
        default_seeds(interval, tanh02, 1.0, 1)


def test_square_seeds(square):
    seeds = default_seeds(square, tanh_nonlinearity(0.25), 4.95, 2)
    assert len(seeds) == 9


def test_geometric_grid():
    g = geometric_grid(1.0, 0.08, -1, 4)
    np.testing.assert_allclose(g, [0.92, 0.96, 0.98, 0.99])
    np.testing.assert_allclose(geometric_grid(1.0, 0.08, 1, 2), [1.08, 1.04])
    with pytest.raises(PreconditionError):
        geometric_grid(1.0, 0.0)


def test_branches_and_divergence_law(interval, tanh02):
    grid = geometric_grid(1.0, 0.05, -1, 6)
    branches = continue_branch(interval, tanh02, 1, grid)
    assert len(branches) == 3
    kinds = sorted(b.classification for b in branches)
    assert kinds == [BLOWUP, BLOWUP, BOUNDED]
    for b in branches:
        assert b.terminated is None and len(b.points) == len(grid)
        if b.classification == BLOWUP:
            p = divergence_products(b, 1.0)
            assert np.all(np.abs(p / PRODUCT - 1) < 0.1)
            assert np.all(np.diff(p) > 0)  # approaches the saturated constant from below
        else:
            assert b.v_norms().max() < 1e-8


def test_grid_must_approach_resonance(interval, tanh02):
    with pytest.raises(PreconditionError):
        continue_branch(interval, tanh02, 1, [0.99, 0.95])


def test_branch_csv(tmp_path, interval, tanh02):
    branches = continue_branch(interval, tanh02, 1, geometric_grid(1.0, 0.05, -1, 2))
    p = tmp_path / "b.csv"
    write_branches_csv(p, branches)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(BRANCH_HEADER)
    assert len(lines) == 1 + 3 * 2


def test_classification_rules():
    def pts(vals):
        return Branch(points=[make_equilibrium_stub(v) for v in vals])

    assert pts([1.0, 5.0, 20.0]).classify() == BLOWUP
    assert pts([1.0, 5.0, 4.0]).classify() == BOUNDED
    assert pts([1.0, 2.0, 3.0]).classify() == BOUNDED


def make_equilibrium_stub(v):
    from resonance_lab.equilibria import Equilibrium

    return Equilibrium(coef=np.zeros(1), lam=0.0, residual=0.0, h_norm=v, v_norm=v, energy=0.0)


def test_cross_validation_standard(interval, tanh02):
    found = deflated_search(interval, tanh02, 0.95, k=1)
    cv = cross_validate(interval, tanh02, 0.95, found, rng=np.random.default_rng(3))
    assert cv["every_root_is_an_omega_limit"] and cv["every_omega_limit_is_a_root"]
    assert cv["escaped"] == 0 and not cv["vacuous"]
    # the origin is linearly unstable here (lambda + f'(0) > mu_1), the large roots attract
    assert sorted(cv["unstable_dimensions"]) == [0, 0, 1]


def test_cross_validation_detects_missing_root(interval, tanh02):
    found = deflated_search(interval, tanh02, 0.95, k=1)
    big = [e for e in found if e.h_norm > 0]
    partial = [e for e in found if e is not big[0]]  # forget one stable large root
    cv = cross_validate(interval, tanh02, 0.95, partial, rng=np.random.default_rng(3))
    assert not cv["every_omega_limit_is_a_root"]


def test_equilibria_do_not_drift(interval, tanh02):
    for e in deflated_search(interval, tanh02, 0.95, k=1):
        assert drift_horizon(interval, tanh02, e) == 10.0
        assert drift(interval, tanh02, e) < 1e-6


def test_energy_gap(interval, tanh02):
    assert energy_gap_ok(deflated_search(interval, tanh02, 0.95, k=1))
    assert not energy_gap_ok([make_equilibrium(interval, tanh02, 0.95, np.zeros(interval.N))])
