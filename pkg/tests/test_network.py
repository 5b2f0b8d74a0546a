import json
import math

import numpy as np
import pytest

from discretegeom.manifolds import AngleGrid
from discretegeom.network import (Layer, Mlp, TrainConfig, TrainingDivergedError, forward, gram_matrix, init,
                                  jacobian_wrt_input, layer_sigmas, loss_and_gradient, mode_projection, train,
                                  training_inputs)
from discretegeom.numerics import InvalidInputError, make_rng
from discretegeom.tasks import TaskSpec
from conftest import fd_jacobian

PI = math.pi


def random_net(seed, arch=(4, 5, 3, 1), act="tanh"):
    return init(arch, 0.8, seed, act)


def test_init_examples():
    net = init((4, 3, 1), 0.0, 0)
    assert all(np.all(l.weights == 0) and np.all(l.biases == 0) for l in net.layers)
    w = init((4, 100, 1), 1.0, 1).layers[0].weights
    assert 0.9 <= w.var() <= 1.1
    a, b = init((4, 8, 1), 0.5, 3), init((4, 8, 1), 0.5, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))


@pytest.mark.parametrize("arch", [(4,), (4, 3, 2), (4, 0, 1)])
def test_init_rejects_bad_architecture(arch):
    with pytest.raises(InvalidInputError):
        init(arch, 1.0, 0)


def test_layer_sigmas_follow_fan_in():
    assert layer_sigmas((4, 100, 1), 2.0) == pytest.approx((1.0, 0.2))


def test_forward_examples():
    out, acts = forward(init((4, 3, 1), 0.0, 0), np.ones(4))
    assert out == 0.5 and len(acts) == 3
    ident = Mlp([Layer(np.eye(4), np.zeros(4), "identity"), Layer(np.zeros((1, 4)), np.zeros(1), "sigmoid")])
    x = np.array([0.3, -1.0, 2.0, 0.5])
    _, acts = forward(ident, x)
    np.testing.assert_array_equal(acts[1], x)
    with pytest.raises(InvalidInputError):
        forward(ident, np.ones(3))


def test_forward_hand_computed_two_neuron_tanh():
    w1 = np.array([[0.5, -0.2, 0.1, 0.3], [-0.4, 0.6, 0.2, -0.1]])
    b1 = np.array([0.05, -0.1])
    w2 = np.array([[1.5, -0.7]])
    b2 = np.array([0.2])
    net = Mlp([Layer(w1, b1, "tanh"), Layer(w2, b2, "sigmoid")])
    x = np.array([1.0, 0.5, -0.3, 0.8])
    h1 = math.tanh(0.5 * 1.0 - 0.2 * 0.5 + 0.1 * -0.3 + 0.3 * 0.8 + 0.05)
    h2 = math.tanh(-0.4 * 1.0 + 0.6 * 0.5 + 0.2 * -0.3 - 0.1 * 0.8 - 0.1)
    expected = 1 / (1 + math.exp(-(1.5 * h1 - 0.7 * h2 + 0.2)))
    out, _ = forward(net, x)
    assert abs(out - expected) <= 1e-12


def test_jacobian_examples(rng):
    w = rng.standard_normal((3, 4))
    lin = Mlp([Layer(w, rng.standard_normal(3), "identity"), Layer(np.ones((1, 3)), np.zeros(1), "sigmoid")])
    np.testing.assert_array_equal(jacobian_wrt_input(lin, rng.standard_normal(4), 1), w)
    tnh = Mlp([Layer(w[:, :], np.zeros(3), "tanh"), Layer(np.ones((1, 3)), np.zeros(1), "sigmoid")])
    np.testing.assert_allclose(jacobian_wrt_input(tnh, np.zeros(4), 1), w, atol=1e-15)
    with pytest.raises(InvalidInputError):
        jacobian_wrt_input(tnh, np.zeros(4), 5)


@pytest.mark.parametrize("layer", [1, 2, -1])
def test_jacobian_matches_finite_differences(layer):
    for seed in range(30):
        net = random_net(seed)
        x = make_rng(seed, 9).standard_normal(4)
        j = jacobian_wrt_input(net, x, layer)
        fd = fd_jacobian(lambda v: forward(net, v)[1][layer], x)
        np.testing.assert_allclose(j, fd, atol=1e-7)


def test_batched_jacobian_matches_single(rng):
    net = random_net(4)
    xs = rng.standard_normal((6, 4))
    jb = jacobian_wrt_input(net, xs, 2)
    for i in range(6):
        np.testing.assert_allclose(jb[i], jacobian_wrt_input(net, xs[i], 2), atol=1e-15)


def test_bce_examples():
    x = np.array([[1.0, 0, 0, 0], [-1.0, 0, 0, 0]])
    y = np.array([1.0, 0.0])
    confident = Mlp([Layer(np.array([[40.0, 0, 0, 0]]), np.zeros(1), "sigmoid")])
    assert loss_and_gradient(confident, x, y)[0] <= 1e-6
    zero = init((4, 3, 1), 0.0, 0)
    assert loss_and_gradient(zero, x, y)[0] == pytest.approx(math.log(2), abs=1e-15)
    with pytest.raises(InvalidInputError):
        loss_and_gradient(zero, np.zeros((0, 4)), np.zeros(0))
    with pytest.raises(InvalidInputError):
        loss_and_gradient(Mlp([Layer(np.ones((1, 4)), np.zeros(1), "identity")]), x, y, "bce")


@pytest.mark.parametrize("loss,out_act", [("bce", "sigmoid"), ("mse", "sigmoid"), ("mse", "identity")])
def test_gradients_match_finite_differences(loss, out_act, rng):
    net = init((4, 5, 3, 1), 0.9, 2, "tanh", out_act)
    for l in net.layers:
        l.biases[:] = rng.standard_normal(l.biases.shape) * 0.3
    x = rng.standard_normal((20, 4))
    y = (rng.uniform(size=20) > 0.5).astype(float)
    _, grads = loss_and_gradient(net, x, y, loss)
    for p, g in zip(net.params(), grads):
        fd = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + 1e-5
            lp = loss_and_gradient(net, x, y, loss)[0]
            p[idx] = old - 1e-5
            lm = loss_and_gradient(net, x, y, loss)[0]
            p[idx] = old
            fd[idx] = (lp - lm) / 2e-5
        assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(fd), 1e-3)


def test_zero_epochs_leaves_net_unchanged():
    net = init((4, 4, 1), 0.5, 0)
    trained, rec = train(net, TaskSpec("XOR"), TrainConfig(epochs=0))
    assert all(np.array_equal(a, b) for a, b in zip(net.params(), trained.params()))
    assert [s.epoch for s in rec.snapshots] == [0]


def test_train_config_validation():
    for bad in ({"learning_rate": 0.0}, {"epochs": -1}, {"snapshot_every": 0}, {"noise_sigma": -1.0},
                {"loss": "hinge"}):
        with pytest.raises(InvalidInputError):
            TrainConfig(**bad)


def test_xor_two_layer_tanh_reaches_high_accuracy():
    # pinned seed: a minority of seeds settle in a partial solution at this budget
    net = init((4, 4, 4, 1), layer_sigmas((4, 4, 4, 1), 0.5), 1)
    trained, rec = train(net, TaskSpec("XOR"), TrainConfig(learning_rate=1.0, epochs=1500, snapshot_every=500))
    x, y = training_inputs(TaskSpec("XOR"), AngleGrid.torus(64))
    out, _ = forward(trained, x)
    assert np.mean((out > 0.5) == (y > 0.5)) >= 0.99
    assert np.all(np.diff(rec.column("epoch")) > 0)


def test_linear_and_final_u_near_effective_singular_value():
    v1 = np.array([0, 1, 0, 1]) / math.sqrt(2)
    net = init((4, 4, 1), 0.1, 0, "identity", "identity")
    cfg = TrainConfig(learning_rate=0.1, epochs=3000, loss="mse", snapshot_every=3000, freeze_biases=True)
    _, rec = train(net, TaskSpec("AND"), cfg, mode=v1)
    S = math.sqrt(2) / PI
    assert abs(rec.final.u - S) <= 0.05 * S


def test_training_is_bit_reproducible():
    cfg = TrainConfig(learning_rate=0.5, epochs=50, noise_sigma=0.3, seed=4, snapshot_every=10)
    a, ra = train(init((4, 6, 1), 0.5, 1), TaskSpec("XOR"), cfg)
    b, rb = train(init((4, 6, 1), 0.5, 1), TaskSpec("XOR"), cfg)
    assert all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))
    assert np.array_equal(ra.column("loss"), rb.column("loss"))


@pytest.mark.parametrize("gate", ["XOR", "AND", "OR"])
@pytest.mark.parametrize("domain", ["torus", "plane"])
def test_bce_non_increasing_at_small_learning_rate(gate, domain):
    arch = (4, 8, 1) if domain == "torus" else (2, 8, 1)
    net = init(arch, layer_sigmas(arch, 1.0), 0)
    _, rec = train(net, TaskSpec(gate, 0.0, domain),
                   TrainConfig(learning_rate=0.01, epochs=200, grid_resolution=16, snapshot_every=1))
    assert np.all(np.diff(rec.column("loss")) <= 1e-15)


def test_divergence_raises_with_last_good_record():
    net = init((4, 4, 1), 3.0, 0, "identity", "identity")
    with pytest.raises(TrainingDivergedError) as info:
        train(net, TaskSpec("XOR"), TrainConfig(learning_rate=50.0, epochs=200, loss="mse", snapshot_every=1))
    rec = info.value.record
    assert rec is not None and rec.snapshots
    assert all(math.isfinite(s.loss) and s.loss <= 1e6 for s in rec.snapshots)


def test_holdout_excluded_and_scored():
    region = (PI / 2, 3 * PI / 2, PI / 2, 3 * PI / 2)
    _, rec = train(init((4, 4, 1), 0.5, 0), TaskSpec("XOR"),
                   TrainConfig(epochs=3, holdout=region, snapshot_every=1))
    assert all(s.holdout_accuracy is not None for s in rec.snapshots)
    with pytest.raises(InvalidInputError):
        train(init((4, 4, 1), 0.5, 0), TaskSpec("XOR"), TrainConfig(epochs=1, holdout=(0, 7, 0, 7)))


def test_gram_examples(rng):
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    net = Mlp([Layer(2.5 * q, np.zeros(4), "tanh"), Layer(np.ones((1, 4)), np.zeros(1), "sigmoid")])
    np.testing.assert_allclose(gram_matrix(net), 6.25 * np.eye(4), atol=1e-12)
    w = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 4))
    net.layers[0].weights = w
    g = gram_matrix(net)
    assert np.linalg.matrix_rank(g) == np.linalg.matrix_rank(w) == 2
    np.testing.assert_allclose(g, g.T)


def test_rich_xor_gram_ignores_cosine_inputs():
    arch = (4, 100, 1)
    net = init(arch, layer_sigmas(arch, 0.1), 0)
    trained, _ = train(net, TaskSpec("XOR"), TrainConfig(learning_rate=2.0, epochs=3000, snapshot_every=3000))
    g = gram_matrix(trained)
    assert np.max(np.abs(g[[0, 2], :])) <= 0.1 * g[1, 1]
    assert np.max(np.abs(g[:, [0, 2]])) <= 0.1 * g[1, 1]


def test_mode_projection_examples():
    v1 = np.array([0, 1, 0, 1]) / math.sqrt(2)
    assert mode_projection(init((4, 3, 1), 0.0, 0), v1) == 0.0
    net = Mlp([Layer(v1[None, :].copy(), np.zeros(1), "identity"), Layer(np.ones((1, 1)), np.zeros(1), "identity")])
    assert mode_projection(net, v1) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(InvalidInputError):
        mode_projection(init((4, 3, 3, 1), 0.1, 0), v1)


def test_record_persistence(tmp_path):
    _, rec = train(init((4, 3, 1), 0.5, 0), TaskSpec("AND"),
                   TrainConfig(epochs=4, snapshot_every=2, keep_weights=True))
    rec.to_json(tmp_path / "rec.json")
    data = json.loads((tmp_path / "rec.json").read_text())
    assert [s["epoch"] for s in data["snapshots"]] == [0, 2, 4]
    names = sorted(p.name for p in rec.write_weight_csvs(tmp_path / "w"))
    assert names[0] == "weights_e000000_l1.csv" and "weights_e000004_l2.csv" in names
    w = np.loadtxt(tmp_path / "w" / "weights_e000004_l1.csv", delimiter=",")
    np.testing.assert_allclose(w, rec.final.weights[0], rtol=1e-8)


def test_with_params_copies(rng):
    net = init((4, 3, 1), 0.5, 0)
    ws = [rng.standard_normal(l.weights.shape) for l in net.layers]
    bs = [rng.standard_normal(l.biases.shape) for l in net.layers]
    new = net.with_params(ws, bs)
    assert np.array_equal(new.layers[0].weights, ws[0]) and new.layers[0].activation == "tanh"
    with pytest.raises(InvalidInputError):
        net.with_params(ws[:1], bs)
