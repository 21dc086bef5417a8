import math

import numpy as np
import pytest

from resonance_lab.errors import ExtrapolationError, PreconditionError
from resonance_lab.manifold import (
    LPConfig,
    WeightedTrajectory,
    build_manifold_graph,
    contraction_bound,
    initial_trajectory,
    inscribed_radius,
    invariance_residual,
    lipschitz_bound,
    lp_apply,
    lp_fixed_point,
    lp_fixed_point_batch,
    sample_box,
    tail_bound,
    time_grid,
    tolerance_budget,
    xi_at,
)
from resonance_lab.semiflow import IntegratorConfig
from resonance_lab.spectral import split_at

from conftest import interval_graph

COARSE = LPConfig(nodes_per_unit=20)


def _const_coefs(basis, g=0.3):
    return np.array([g * math.sqrt(2 / math.pi) * (1 - math.cos(j * math.pi)) / j for j in range(1, basis.N + 1)])


@pytest.fixture(scope="module")
def split(interval):
    return split_at(interval, 1, 0.95)


def test_time_grid_symmetric_and_graded(split):
    t = time_grid(split, LPConfig())
    assert len(t) % 2 == 1 and t[len(t) // 2] == 0.0
    np.testing.assert_allclose(t, -t[::-1])
    assert t[-1] == pytest.approx(32 / 3)
    assert np.diff(t[len(t) // 2 :])[0] < np.diff(t[len(t) // 2 :])[-1]


def test_window_minimum(split):
    with pytest.raises(PreconditionError):
        LPConfig(window=1.0).window_for(split)


def test_zero_nonlinearity_operator_ignores_input(split, zero):
    t = time_grid(split, COARSE)
    x = WeightedTrajectory(t, np.random.default_rng(0).standard_normal((len(t), split.basis.N)), 1.5)
    out = lp_apply(split, zero, [2.0], x)
    np.testing.assert_allclose(out.coef, initial_trajectory(split, [2.0], t), atol=1e-15)


def test_center_value_at_zero_is_y(split, tanh02):
    t = time_grid(split, COARSE)
    x = WeightedTrajectory(t, initial_trajectory(split, [4.0], t), 1.5)
    out = lp_apply(split, tanh02, [4.0], x)
    assert out.coef[len(t) // 2, 0] == 4.0


def test_constant_forcing_stable_part(split, const):
    t = time_grid(split, COARSE)
    x = WeightedTrajectory(t, np.zeros((len(t), split.basis.N)), 1.5)
    out = lp_apply(split, const, [1.0], x)
    g = _const_coefs(split.basis)
    r = split.rates
    expected = g[split.idx_s] / r[split.idx_s]
    np.testing.assert_allclose(out.coef[:, split.idx_s], np.broadcast_to(expected, (len(t), len(expected))), atol=1e-12)


def test_zero_nonlinearity_converges_in_one_iteration(split, zero):
    gamma = lp_fixed_point(split, zero, [3.0], COARSE)
    assert gamma.iterations == 1
    np.testing.assert_allclose(gamma.coef, initial_trajectory(split, [3.0], gamma.t))


def test_measured_contraction_ratio(split, tanh01):
    bound = contraction_bound(split, tanh01)
    assert bound == pytest.approx(0.4713320082559644)
    Y = np.random.default_rng(7).uniform(-10, 10, (20, 1))
    sol = lp_fixed_point_batch(split, tanh01, Y, LPConfig(tol=1e-10))
    assert sol.max_ratio.max() <= 1.1 * bound
    assert sol.iterations.max() <= 40
    np.testing.assert_allclose(sol.coef[len(sol.t) // 2, :, 0], Y[:, 0], atol=1e-12)


def test_xi_zero_and_constant(split, zero, const):
    assert not np.any(xi_at(split, zero, [5.0], COARSE))
    xi = xi_at(split, const, [5.0], COARSE)
    g = _const_coefs(split.basis)
    expected = g / split.rates
    expected[split.idx_c] = 0.0
    np.testing.assert_allclose(xi, expected, atol=1e-10)


def test_xi_symmetry(split, tanh01):
    # tanh(y phi_1) is symmetric about pi/2, so modes sin(2jx) receive nothing
    xi = xi_at(split, tanh01, [3.0], COARSE)
    assert np.max(np.abs(xi[1::2])) < 1e-13
    assert np.max(np.abs(xi[2::2])) > 1e-4
    assert not np.any(xi_at(split, tanh01, [0.0], COARSE))


def test_xi_direct_cross_check_is_enforced(split, tanh02):
    xi_at(split, tanh02, [8.0], COARSE, check=True)


def test_tail_bound_is_negligible(split, tanh02):
    assert tail_bound(split, tanh02, LPConfig()) < 1e-10
    assert tail_bound(split, tanh02, LPConfig(window=8 / 3)) > tail_bound(split, tanh02, LPConfig())


def test_sample_box_shapes(split, square):
    pts = sample_box(split, 10.0, n_radial=8)
    assert pts.shape == (17, 1) and pts.max() == pytest.approx(10.0)
    s2 = split_at(square, 2, 4.95)
    pts2 = sample_box(s2, 10.0, n_radial=4, n_angular=16)
    assert pts2.shape == (1 + 4 * 16, 2)
    assert inscribed_radius(pts2) == pytest.approx(10.0)


def test_flat_graph_for_zero_nonlinearity(split, zero):
    g = build_manifold_graph(split, zero, sample_box(split, 5.0, n_radial=6), COARSE)
    assert not np.any(g.values) and g.lipschitz == 0.0


def test_graph_lipschitz_and_bound(tanh02):
    basis, spec, split, graph = interval_graph(0.2, 0.95)
    assert graph.lipschitz <= graph.lipschitz_bound == pytest.approx(lipschitz_bound(split, spec))
    assert graph.lipschitz_bound == pytest.approx(1 / (1 - 0.2 * 4.713320082559644) + 1)
    sup = np.max(np.linalg.norm(graph.values * split.alpha_weights(), axis=1))
    assert sup <= 4.713320082559644 * 0.2 * math.sqrt(math.pi)


def test_graph_interpolates_samples_and_refuses_extrapolation():
    _, _, split, graph = interval_graph(0.2, 0.95)
    np.testing.assert_allclose(graph(graph.samples), graph.values, atol=1e-15)
    assert graph.contains(np.array([[graph.radius]]))
    assert not graph.inside(np.array([[graph.radius * 1.01]]))[0]
    with pytest.raises(ExtrapolationError):
        graph(np.array([[graph.radius * 1.01]]))
    lifted = graph.lift(np.array([[2.0]]))
    assert lifted[0, 0] == 2.0


def test_graph_csv(tmp_path):
    _, _, split, graph = interval_graph(0.2, 0.95)
    p = tmp_path / "g.csv"
    graph.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(["y_1"] + [f"xi_{j + 1}" for j in range(split.basis.N)] + ["tail_bound"])
    assert len(lines) == 1 + len(graph.samples)


def test_invariance_controls(split, zero, const):
    for spec in (zero, const):
        g = build_manifold_graph(split, spec, sample_box(split, 8.0, n_radial=8), COARSE)
        res = invariance_residual(split, spec, g, [2.0], 2.0, IntegratorConfig(h=0.01), COARSE)
        assert res < (1e-10 if spec is zero else 1e-8)


def test_invariance_within_budget():
    basis, spec, split, graph = interval_graph(0.2, 0.95)
    cfg = IntegratorConfig(h=0.01)
    res = invariance_residual(split, spec, graph, [3.0], 5.0, cfg)
    budget = tolerance_budget(split, spec, graph, [3.0], 5.0, cfg)
    assert set(budget) == {"fixed_point", "interpolation", "integrator", "total"}
    assert res <= budget["total"]
