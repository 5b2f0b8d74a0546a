import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from discretegeom.geometry import MetricField, pullback_metric
from discretegeom.lindyn import (UnsupportedTaskError, analytic_correlations, balanced_linear_init, decompose,
                                 empirical_correlations, grid_correlations, mode_projection,
                                 predict_metric_trajectory, u_closed_form)
from discretegeom.manifolds import AngleGrid
from discretegeom.network import TrainConfig, train
from discretegeom.numerics import InvalidInputError, make_rng, svd_thin
from discretegeom.tasks import TaskSpec

PI = math.pi
AND = TaskSpec("AND")
V1 = np.array([0, 1, 0, 1]) / math.sqrt(2)


def test_analytic_correlations_examples():
    md = analytic_correlations(AND)
    assert md.s1 == 1 / (math.sqrt(2) * PI)
    np.testing.assert_array_equal(md.v1, V1)
    assert md.S == pytest.approx(math.sqrt(2) / PI, rel=1e-15)
    np.testing.assert_array_equal(md.sigma11, 0.5 * np.eye(4))
    _, s, _ = svd_thin(md.sigma31)
    assert np.sum(s > 1e-12) == 1


@pytest.mark.parametrize("spec", [TaskSpec("XOR"), TaskSpec("AND", 0.3), TaskSpec("AND", 0.0, "plane")])
def test_analytic_correlations_rejects_other_tasks(spec):
    with pytest.raises(UnsupportedTaskError):
        analytic_correlations(spec)


def test_empirical_correlations_converge():
    s11, s31 = empirical_correlations(AND, 1_000_000, make_rng(0))
    md = analytic_correlations(AND)
    assert np.max(np.abs(np.diag(s11) - 0.5)) <= 0.002
    assert np.max(np.abs(s11 - np.diag(np.diag(s11)))) <= 0.002
    assert np.max(np.abs(s31 - md.sigma31)) <= 3 / math.sqrt(1e6)
    d = decompose(s11, s31)
    assert abs(d.s1 - md.s1) <= 3e-3 and np.linalg.norm(d.v1 - md.v1) <= 1e-2


def test_grid_correlations_match_closed_form():
    s11, s31 = grid_correlations(AND, 32)
    np.testing.assert_allclose(s11, 0.5 * np.eye(4), atol=1e-12)
    # the half-cell grid gives the midpoint rule, accurate to O(h^2) on the step target
    np.testing.assert_allclose(s31, analytic_correlations().sigma31, atol=2e-3)


def test_u_closed_form_limits():
    S, tau, u0 = math.sqrt(2) / PI, 20.0, 0.01
    assert u_closed_form(0.0, S, tau, u0) == u0
    assert abs(u_closed_form(50 * tau / S, S, tau, u0) - S) <= 1e-12 * S
    with pytest.raises(InvalidInputError):
        u_closed_form(1.0, S, tau, 0.0)


def test_u_closed_form_solves_ode():
    S, tau, u0 = math.sqrt(2) / PI, 10.0, 0.01
    t = np.linspace(0, 400, 2001)
    sol = solve_ivp(lambda _, u: u * (S - u) / tau, (0, 400), [u0], t_eval=t, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(u_closed_form(t, S, tau, u0), sol.y[0], atol=1e-9)
    h = 1e-4
    du = (u_closed_form(t + h, S, tau, u0) - u_closed_form(t - h, S, tau, u0)) / (2 * h)
    u = u_closed_form(t, S, tau, u0)
    assert np.max(np.abs(tau * du - u * (S - u))) <= 1e-6


@settings(max_examples=50)
@given(st.floats(1e-4, 0.4), st.floats(0.5, 50))
def test_u_closed_form_monotone(u0, tau):
    S = math.sqrt(2) / PI
    u = u_closed_form(np.linspace(0, 2000, 400), S, tau, u0)
    assert np.all(np.diff(u) >= 0) and u[0] >= u0 - 1e-15 and u[-1] <= S + 1e-12


def test_predict_metric_examples():
    g = AngleGrid.torus(8)
    rng = make_rng(1)
    a = rng.standard_normal(g.size) ** 2
    perp = MetricField(g, a, 0.1 * a, 2 * a)
    np.testing.assert_array_equal(predict_metric_trajectory(0.0, perp).matrices(), perp.matrices())
    origin = AngleGrid.torus(8, offset=0.0)
    zero = MetricField(origin, np.zeros(64), np.zeros(64), np.zeros(64))
    np.testing.assert_allclose(predict_metric_trajectory(math.sqrt(2), zero).matrices()[0], [[1, 1], [1, 1]],
                               atol=1e-15)


def test_mode_projection_examples():
    net = balanced_linear_init(4, V1, 0.02, 0.1, 0)
    assert mode_projection(net, V1) == pytest.approx(0.02, rel=1e-12)


def test_linear_training_leaves_perpendicular_weights_alone():
    net0 = balanced_linear_init(4, V1, 0.01, 0.1, 0)
    net, rec = train(net0, AND, TrainConfig(learning_rate=0.05, epochs=1500, loss="mse", snapshot_every=1,
                                            freeze_biases=True), mode=V1)
    proj = np.eye(4) - np.outer(V1, V1)
    w0, w1 = net0.layers[0].weights, net.layers[0].weights
    assert np.linalg.norm(w1 @ proj - w0 @ proj) <= 1e-8
    assert np.max(np.abs(w1[:, [0, 2]] - w0[:, [0, 2]])) <= 1e-8
    e, u = rec.column("epoch"), rec.column("u")
    theory = u_closed_form(e, math.sqrt(2) / PI, 1 / 0.05, u[0])
    assert np.max(np.abs(u - theory)[e > 5] / theory[e > 5]) <= 0.05


def test_trained_metric_matches_prediction():
    net0 = balanced_linear_init(4, V1, 0.01, 0.1, 2)
    net, _ = train(net0, AND, TrainConfig(learning_rate=0.05, epochs=1500, loss="mse", snapshot_every=1500,
                                          freeze_biases=True), mode=V1)
    grid = AngleGrid.torus(16)
    proj = np.eye(4) - np.outer(V1, V1)
    perp = net0.with_params([net0.layers[0].weights @ proj, net0.layers[1].weights],
                            [l.biases for l in net0.layers])
    pred = predict_metric_trajectory(np.linalg.norm(net.layers[0].weights @ V1), pullback_metric(perp, 1, grid))
    meas = pullback_metric(net, 1, grid)
    assert np.linalg.norm(pred.matrices() - meas.matrices()) <= 0.1 * np.linalg.norm(meas.matrices())


def test_balanced_init_rejects_bad_u0():
    with pytest.raises(InvalidInputError):
        balanced_linear_init(4, V1, 0.0, 0.1, 0)
