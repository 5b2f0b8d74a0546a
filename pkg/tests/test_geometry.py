import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from discretegeom.geometry import (CurvatureField, MetricField, UndefinedParticipationRatio, gaussian_curvature,
                                   hidden_metric_analytic, mean_curvature_summary, metric_trace,
                                   network_curvature, participation_ratio, pullback_metric, top_fraction_mask)
from discretegeom.lindyn import balanced_linear_init, task_metric
from discretegeom.manifolds import AngleGrid
from discretegeom.network import Layer, Mlp, TrainConfig, init, train
from discretegeom.numerics import InvalidInputError, make_rng, random_orthonormal_columns
from discretegeom.tasks import TaskSpec

PI = math.pi


def const_metric(grid, a, b, c):
    n = grid.size
    return MetricField(grid, np.full(n, a), np.full(n, b), np.full(n, c))


def cos_free_net(rng, hidden=5):
    w = rng.standard_normal((hidden, 4))
    w[:, [0, 2]] = 0.0
    return Mlp([Layer(w, np.zeros(hidden), "tanh"), Layer(np.ones((1, hidden)), np.zeros(1), "sigmoid")])


def test_identity_layer_gives_flat_metric():
    net = Mlp([Layer(np.eye(4), np.zeros(4), "identity"), Layer(np.ones((1, 4)), np.zeros(1), "sigmoid")])
    m = pullback_metric(net, 1, AngleGrid.torus(16))
    np.testing.assert_allclose(m.matrices(), np.broadcast_to(np.eye(2), (256, 2, 2)), atol=1e-15)


def test_trained_linear_and_metric_is_rank_one_task_metric():
    v1 = np.array([0, 1, 0, 1]) / math.sqrt(2)
    net0 = balanced_linear_init(4, v1, 0.01, 0.003, 0)
    net, _ = train(net0, TaskSpec("AND"),
                   TrainConfig(learning_rate=0.1, epochs=2000, loss="mse", snapshot_every=2000, freeze_biases=True))
    grid = AngleGrid.torus(32)
    a = np.linalg.norm(net.layers[0].weights @ v1)
    pred = 0.5 * a ** 2 * task_metric(grid)
    meas = pullback_metric(net, 1, grid).matrices()
    assert np.linalg.norm(meas - pred) <= 0.05 * np.linalg.norm(pred)


def test_analytic_hidden_metric_matches_pullback(rng):
    grid = AngleGrid.torus(12)
    for _ in range(10):
        net = cos_free_net(rng)
        g = pullback_metric(net, 1, grid).matrices()
        np.testing.assert_allclose(hidden_metric_analytic(net.layers[0].weights, grid.points), g, atol=1e-10)


def test_analytic_hidden_metric_examples(rng):
    w = np.array([[0.0, 1.0, 0.0, 0.0]])
    np.testing.assert_allclose(hidden_metric_analytic(w, [0.0, 0.0]), [[1, 0], [0, 0]], atol=1e-15)
    wr = cos_free_net(rng).layers[0].weights
    g = hidden_metric_analytic(wr, [PI / 2, 0.7])
    assert abs(g[0, 0]) < 1e-30 and abs(g[0, 1]) < 1e-15
    with pytest.raises(InvalidInputError):
        hidden_metric_analytic(np.ones((2, 4)), [0.0, 0.0])


def test_curvature_of_constant_metrics():
    g = AngleGrid.torus(32)
    for m in (const_metric(g, 1, 0, 1), const_metric(g, 2.0, 0.3, 1.5)):
        k = gaussian_curvature(m)
        assert k.valid.all() and np.max(np.abs(k.K)) <= 1e-10


def test_round_torus_oracle():
    g = AngleGrid.torus(128)
    u = g.points[:, 0]
    R, r = 2.0, 1.0
    k = gaussian_curvature(MetricField(g, np.full(g.size, r * r), np.zeros(g.size), (R + r * np.cos(u)) ** 2))
    assert np.max(np.abs(k.K - np.cos(u) / (r * (R + r * np.cos(u))))) <= 1e-4


def test_sphere_oracle_with_masked_edges():
    g = AngleGrid.plane(128, (0.2, PI - 0.2, 0.0, 2 * PI))
    u = g.points[:, 0]
    k = gaussian_curvature(MetricField(g, np.ones(g.size), np.zeros(g.size), np.sin(u) ** 2))
    img = g.as_image(k.valid)
    assert not img[:2].any() and not img[:, -2:].any() and img[2:-2, 2:-2].all()
    assert np.max(np.abs(k.K[k.valid] - 1.0)) <= 1e-4


def test_graph_surface_oracle_with_off_diagonal_metric():
    # z = f(u, v) = 0.5 sin u cos v: E = 1 + fu^2, F = fu fv, G = 1 + fv^2
    g = AngleGrid.torus(128)
    u, v = g.points[:, 0], g.points[:, 1]
    fu, fv = 0.5 * np.cos(u) * np.cos(v), -0.5 * np.sin(u) * np.sin(v)
    fuu, fvv, fuv = -0.5 * np.sin(u) * np.cos(v), -0.5 * np.sin(u) * np.cos(v), -0.5 * np.cos(u) * np.sin(v)
    exact = (fuu * fvv - fuv ** 2) / (1 + fu ** 2 + fv ** 2) ** 2
    k = gaussian_curvature(MetricField(g, 1 + fu ** 2, fu * fv, 1 + fv ** 2))
    assert np.max(np.abs(k.K - exact)) <= 1e-5


def test_curvature_rejects_coarse_grid_and_masks_degenerate_points():
    with pytest.raises(InvalidInputError):
        gaussian_curvature(const_metric(AngleGrid.torus(4), 1, 0, 1))
    g = AngleGrid.torus(16)
    m = const_metric(g, 1, 0, 1)
    m.g22[:16] = 0.0
    k = gaussian_curvature(m)
    assert not k.valid[:16].any() and np.all(np.isnan(k.K[:16]))


def test_exact_curvature_agrees_with_brioschi_on_smooth_net():
    net = init((4, 6, 1), 1.0, 3)
    errors = []
    for n in (128, 256):
        g = AngleGrid.torus(n)
        exact = network_curvature(net, 1, g)
        fd = gaussian_curvature(pullback_metric(net, 1, g))
        assert exact.valid.all() and fd.valid.all()
        errors.append(np.max(np.abs(exact.K - fd.K)) / np.max(np.abs(exact.K)))
    # fourth-order differences: halving the spacing cuts the gap by ~16
    assert errors[1] <= 1e-4 and errors[0] / errors[1] >= 10


def test_exact_curvature_of_flat_layers_is_zero(rng):
    lin = Mlp([Layer(np.eye(4), np.zeros(4), "identity"), Layer(np.ones((1, 4)), np.zeros(1), "sigmoid")])
    k = network_curvature(lin, 1, AngleGrid.torus(16))
    assert np.max(np.abs(k.K)) <= 1e-12
    q = random_orthonormal_columns(rng, 16, 4)
    k = network_curvature(lin, 0, AngleGrid.torus(16), q=q)
    assert np.max(np.abs(k.K)) <= 1e-12


def test_metric_trace_and_psd():
    g = AngleGrid.torus(16)
    np.testing.assert_array_equal(metric_trace(const_metric(g, 1, 0, 1)), 2.0)
    for seed in range(5):
        m = pullback_metric(init((4, 7, 5, 1), 1.5, seed), 2, g)
        assert np.all(m.det >= -1e-10) and np.all(metric_trace(m) >= 0)


def test_metric_invariant_under_isometric_post_composition(rng):
    net = init((4, 6, 1), 1.0, 1)
    q = random_orthonormal_columns(rng, 32, 6)
    lifted = Mlp([net.layers[0], Layer(q, np.zeros(32), "identity"), Layer(np.ones((1, 32)), np.zeros(1), "sigmoid")])
    g = AngleGrid.torus(16)
    np.testing.assert_allclose(pullback_metric(lifted, 2, g).matrices(), pullback_metric(net, 1, g).matrices(),
                               atol=1e-8)


def test_metric_invariant_under_input_reembedding(rng):
    q = random_orthonormal_columns(rng, 32, 4)
    w = rng.standard_normal((5, 4))
    net4 = Mlp([Layer(w, np.zeros(5), "tanh"), Layer(np.ones((1, 5)), np.zeros(1), "sigmoid")])
    net32 = Mlp([Layer(w @ q.T, np.zeros(5), "tanh"), Layer(np.ones((1, 5)), np.zeros(1), "sigmoid")])
    g = AngleGrid.torus(16)
    np.testing.assert_allclose(pullback_metric(net32, 1, g, q=q).matrices(),
                               pullback_metric(net4, 1, g).matrices(), atol=1e-8)
    np.testing.assert_allclose(pullback_metric(net32, 0, g, q=q).matrices(),
                               np.broadcast_to(np.eye(2), (g.size, 2, 2)), atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_participation_ratio_isotropic(n):
    signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * n)).reshape(n, -1).T
    assert participation_ratio(signs) == pytest.approx(n, rel=1e-12)


def test_participation_ratio_rank_one_and_constant(rng):
    a = np.outer(rng.standard_normal(50), rng.standard_normal(6))
    assert participation_ratio(a) == pytest.approx(1.0, rel=1e-10)
    with pytest.raises(UndefinedParticipationRatio):
        participation_ratio(np.ones((10, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8))
def test_participation_ratio_bounds(seed, n):
    a = make_rng(seed).standard_normal((40, n))
    assert 1 - 1e-12 <= participation_ratio(a) <= n + 1e-12


def test_mean_curvature_summary():
    g = AngleGrid.torus(8)
    s = mean_curvature_summary(CurvatureField(g, np.full(g.size, -0.7), np.ones(g.size, bool)))
    assert s.mean == pytest.approx(-0.7) and s.max_abs == pytest.approx(0.7)
    flat = mean_curvature_summary(CurvatureField(g, np.zeros(g.size), np.ones(g.size, bool)))
    assert flat.mean == 0 and flat.max_abs == 0
    k = np.zeros(g.size)
    k[10] = 5.0
    s = mean_curvature_summary(CurvatureField(g, k, np.ones(g.size, bool)))
    assert s.argmax == tuple(g.points[10])
    with pytest.raises(InvalidInputError):
        mean_curvature_summary(CurvatureField(g, k, np.zeros(g.size, bool)))


def test_top_fraction_mask():
    g = AngleGrid.torus(10)
    k = np.arange(g.size, dtype=float)
    m = top_fraction_mask(CurvatureField(g, k, np.ones(g.size, bool)), 0.05)
    assert m.sum() == 5 and m[-5:].all()
