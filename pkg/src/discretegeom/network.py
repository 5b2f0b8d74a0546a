"""Dense feed-forward networks, exact input Jacobians and a full-batch trainer.

Layers are indexed from 1; index 0 refers to the (embedded) input itself and
index ``len(net.layers)`` (or -1) to the network output.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .manifolds import DEFAULT_BOX, AngleGrid, add_tangent_noise, embed, embed_highdim
from .numerics import InvalidInputError, make_rng, sample_gaussian
from .tasks import TaskSpec, holdout_mask, label

ACTIVATIONS = ("tanh", "identity", "sigmoid")
DIVERGENCE_LOSS = 1e6

# rng stream keys, so init and training noise never share draws
STREAM_INIT = 0
STREAM_NOISE = 1


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite or exceeded the divergence threshold."""

    def __init__(self, msg, record=None, net=None):
        super().__init__(msg)
        self.record = record
        self.net = net


@dataclass
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    activation: str = "tanh"


@dataclass
class Mlp:
    layers: list
    init_sigma: tuple = ()

    @property
    def n_in(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def widths(self) -> tuple:
        return (self.n_in,) + tuple(l.weights.shape[0] for l in self.layers)

    @property
    def output_activation(self) -> str:
        return self.layers[-1].activation

    def copy(self) -> "Mlp":
        return copy.deepcopy(self)

    def with_params(self, weights, biases) -> "Mlp":
        """Copy of this network with the given per-layer weights and biases."""
        if len(weights) != len(self.layers) or len(biases) != len(self.layers):
            raise InvalidInputError("one weight matrix and bias vector per layer expected")
        layers = [Layer(np.array(w, dtype=float), np.array(b, dtype=float), l.activation)
                  for w, b, l in zip(weights, biases, self.layers)]
        return Mlp(layers, self.init_sigma)

    def params(self) -> list:
        out = []
        for l in self.layers:
            out.extend([l.weights, l.biases])
        return out


def _act(name, a):
    if name == "tanh":
        return np.tanh(a)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * a))
    return a


def _act_deriv(name, a, h):
    """Derivative of the activation given pre-activation ``a`` and output ``h``."""
    if name == "tanh":
        return 1.0 - h * h
    if name == "sigmoid":
        return h * (1.0 - h)
    return np.ones_like(a)


def layer_sigmas(widths: Sequence[int], scale: float) -> tuple:
    """Per-layer init std ``scale / sqrt(fan_in)``."""
    return tuple(scale / math.sqrt(n) for n in widths[:-1])


def init(arch: Sequence[int], sigma, seed: int, hidden_activation: str = "tanh",
         output_activation: str = "sigmoid") -> Mlp:
    """Gaussian-initialised network with zero biases.

    Args:
        arch: layer widths ``(n_in, h1, ..., 1)``.
        sigma: weight std, either one value for every layer or one per layer.
        seed: rng seed; identical seeds give identical networks.
    """
    arch = [int(a) for a in arch]
    if len(arch) < 2 or min(arch) < 1 or arch[-1] != 1:
        raise InvalidInputError(f"invalid architecture {arch}")
    if hidden_activation not in ACTIVATIONS or output_activation not in ACTIVATIONS:
        raise InvalidInputError("unknown activation")
    n_layers = len(arch) - 1
    sigmas = tuple(float(s) for s in np.broadcast_to(np.asarray(sigma, dtype=float), (n_layers,)))
    if min(sigmas) < 0:
        raise InvalidInputError("sigma must be >= 0")
    rng = make_rng(seed, STREAM_INIT)
    layers = []
    for i in range(n_layers):
        n_out, n_in = arch[i + 1], arch[i]
        w = sample_gaussian(rng, n_out * n_in, sigmas[i]).reshape(n_out, n_in)
        act = output_activation if i == n_layers - 1 else hidden_activation
        layers.append(Layer(w, np.zeros(n_out), act))
    return Mlp(layers, sigmas)


def _check_input(net: Mlp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.n_in:
        raise InvalidInputError(f"input dim {x.shape[-1]} != network input dim {net.n_in}")
    return x


def forward(net: Mlp, x):
    """Run the network on one input or a batch.

    Returns:
        ``(output, activations)`` where ``activations[0]`` is the input and
        ``activations[k]`` the post-activation of layer ``k``. For a batch of
        shape (N, n_in) the output has shape (N,).
    """
    x = _check_input(net, x)
    single = x.ndim == 1
    h = x[None, :] if single else x
    acts = [h]
    for l in net.layers:
        h = _act(l.activation, h @ l.weights.T + l.biases)
        acts.append(h)
    if single:
        acts = [a[0] for a in acts]
    return acts[-1][..., 0], acts


def _resolve_layer(net: Mlp, layer: int) -> int:
    n = len(net.layers)
    if layer < 0:
        layer += n + 1
    if not 0 <= layer <= n:
        raise InvalidInputError(f"layer {layer} out of range for a {n}-layer network")
    return layer


def push_tangents(net: Mlp, x, tangents, layer: int = 1):
    """Forward-propagate tangent vectors of the input to ``layer``.

    Args:
        x: inputs, (N, n_in).
        tangents: (N, n_in, k) tangent vectors at each input.

    Returns:
        (activations at ``layer`` (N, n_layer), tangents (N, n_layer, k)).
    """
    x = _check_input(net, x)
    layer = _resolve_layer(net, layer)
    h = x
    t = np.asarray(tangents, dtype=float)
    for l in net.layers[:layer]:
        a = h @ l.weights.T + l.biases
        h = _act(l.activation, a)
        t = np.einsum("ij,njk->nik", l.weights, t)
        t = _act_deriv(l.activation, a, h)[:, :, None] * t
    return h, t


def jacobian_wrt_input(net: Mlp, x, layer: int = 1) -> np.ndarray:
    """Exact Jacobian of layer activations with respect to the input.

    Shape (n_layer, n_in) for one input or (N, n_layer, n_in) for a batch.
    """
    x = _check_input(net, x)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    eye = np.broadcast_to(np.eye(net.n_in), (xb.shape[0], net.n_in, net.n_in))
    _, jac = push_tangents(net, xb, eye, layer)
    return jac[0] if single else jac


def _logit(net: Mlp, x):
    """Output pre-activation and cached layer values for backprop."""
    h = x
    cache = []
    for l in net.layers:
        a = h @ l.weights.T + l.biases
        cache.append((h, a))
        h = _act(l.activation, a)
    return a[:, 0], h[:, 0], cache


def loss_and_gradient(net: Mlp, x, y, loss: str = "bce"):
    """Mean loss over the batch and its gradient for every parameter.

    ``bce`` requires a sigmoid output and is evaluated in fused logit form.
    ``mse`` is ``0.5 * mean((out - y)^2)``, so full-batch gradient descent with
    step ``lr`` matches gradient flow with time constant ``1/lr``.

    Returns:
        ``(loss, grads)`` with ``grads`` ordered like ``net.params()``.
    """
    x = _check_input(net, x)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidInputError("empty batch")
    if y.shape[0] != x.shape[0]:
        raise InvalidInputError("batch size mismatch between x and y")
    n = x.shape[0]
    logit, out, cache = _logit(net, x)
    out_act = net.output_activation
    if loss == "bce":
        if out_act != "sigmoid":
            raise InvalidInputError("bce loss needs a sigmoid output")
        value = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
        delta = (out - y) / n
    elif loss == "mse":
        r = out - y
        value = float(0.5 * np.mean(r * r))
        delta = r * _act_deriv(out_act, logit, out) / n
    else:
        raise InvalidInputError(f"unknown loss {loss!r}")

    grads = [None] * (2 * len(net.layers))
    delta = delta[:, None]
    for i in range(len(net.layers) - 1, -1, -1):
        h_in, _ = cache[i]
        grads[2 * i] = delta.T @ h_in
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            # the input of layer i is the activation of layer i - 1
            a_prev = cache[i - 1][1]
            delta = (delta @ net.layers[i].weights) * _act_deriv(net.layers[i - 1].activation, a_prev, h_in)
    return value, grads


def gram_matrix(net: Mlp) -> np.ndarray:
    """``W^T W`` of the first-layer weights."""
    w = net.layers[0].weights
    return w.T @ w


def mode_projection(net: Mlp, v1) -> float:
    """``W2 W1 v1`` for a two-layer network."""
    if len(net.layers) != 2:
        raise InvalidInputError("mode projection needs exactly two layers")
    v1 = np.asarray(v1, dtype=float)
    if v1.shape != (net.n_in,):
        raise InvalidInputError("mode vector has wrong dimension")
    return float((net.layers[1].weights @ (net.layers[0].weights @ v1))[0])


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 1000
    loss: str = "bce"
    grid_resolution: int = 32
    noise_sigma: float = 0.0
    holdout: Optional[tuple] = None
    seed: int = 0
    snapshot_every: int = 100
    freeze_biases: bool = False
    keep_weights: bool = False
    box: tuple = DEFAULT_BOX

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be > 0")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        if self.snapshot_every < 1:
            raise InvalidInputError("snapshot_every must be >= 1")
        if self.noise_sigma < 0:
            raise InvalidInputError("noise_sigma must be >= 0")
        if self.loss not in ("bce", "mse"):
            raise InvalidInputError(f"unknown loss {self.loss!r}")


@dataclass
class Snapshot:
    epoch: int
    loss: float
    train_accuracy: float
    holdout_accuracy: Optional[float] = None
    u: Optional[float] = None
    weights: Optional[list] = field(default=None, repr=False)
    biases: Optional[list] = field(default=None, repr=False)


@dataclass
class TrainRecord:
    snapshots: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.snapshots], dtype=float)

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    def to_json(self, path) -> None:
        rows = [
            {k: getattr(s, k) for k in ("epoch", "loss", "train_accuracy", "holdout_accuracy", "u")}
            for s in self.snapshots
        ]
        Path(path).write_text(json.dumps({"snapshots": rows}, indent=1))

    def write_weight_csvs(self, directory) -> list:
        """One CSV per snapshot and layer: ``weights_e<epoch:06d>_l<k>.csv``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for s in self.snapshots:
            if s.weights is None:
                continue
            for k, w in enumerate(s.weights, start=1):
                p = directory / f"weights_e{s.epoch:06d}_l{k}.csv"
                np.savetxt(p, w, delimiter=",", fmt="%.9g")
                paths.append(p)
        return paths


def training_inputs(spec: TaskSpec, grid: AngleGrid, q=None):
    """Embedded inputs and labels for every grid point."""
    x = embed(grid.points, spec.domain, grid.box)
    if q is not None:
        x = embed_highdim(x, q)
    return x, label(spec, grid.points)


def accuracy(net: Mlp, x, y) -> float:
    if len(y) == 0:
        return float("nan")
    out, _ = forward(net, x)
    return float(np.mean((out > 0.5) == (np.asarray(y) > 0.5)))


def train(net: Mlp, spec: TaskSpec, cfg: TrainConfig, q=None, mode=None):
    """Full-batch gradient descent over the training grid.

    Points inside ``cfg.holdout`` are excluded from the updates and scored
    separately. With ``noise_sigma > 0`` fresh wrapped-normal angle noise is
    drawn every epoch before embedding. Snapshots are taken at epoch 0, every
    ``snapshot_every`` epochs and at the final epoch.

    Args:
        q: optional matrix with orthonormal columns for a high-dimensional
            re-embedding of the inputs.
        mode: optional input-space vector; when given, ``u = W2 W1 mode`` is
            recorded at each snapshot (two-layer networks only).

    Returns:
        ``(trained copy of net, TrainRecord)``.

    Raises:
        TrainingDivergedError: on non-finite or exploding loss; carries the
            record up to the last good snapshot.
    """
    if spec.domain == "torus":
        grid = AngleGrid.torus(cfg.grid_resolution)
    else:
        grid = AngleGrid.plane(cfg.grid_resolution, cfg.box)
    net = net.copy()
    x_all, y_all = training_inputs(spec, grid, q)
    if cfg.holdout is not None:
        held = holdout_mask(grid, cfg.holdout)
    else:
        held = np.zeros(grid.size, dtype=bool)
    train_pts = grid.points[~held]
    x_tr, y_tr = x_all[~held], y_all[~held]
    x_ho, y_ho = x_all[held], y_all[held]
    if x_tr.shape[0] == 0:
        raise InvalidInputError("holdout region leaves no training points")
    noise_rng = make_rng(cfg.seed, STREAM_NOISE)
    record = TrainRecord()

    def snapshot(epoch):
        value, _ = loss_and_gradient(net, x_tr, y_tr, cfg.loss) if len(y_tr) else (float("nan"), None)
        s = Snapshot(
            epoch=epoch,
            loss=value,
            train_accuracy=accuracy(net, x_tr, y_tr),
            holdout_accuracy=accuracy(net, x_ho, y_ho) if held.any() else None,
            u=mode_projection(net, mode) if mode is not None else None,
            weights=[l.weights.copy() for l in net.layers] if cfg.keep_weights else None,
            biases=[l.biases.copy() for l in net.layers] if cfg.keep_weights else None,
        )
        record.snapshots.append(s)

    snapshot(0)
    for epoch in range(1, cfg.epochs + 1):
        if cfg.noise_sigma > 0:
            noisy = add_tangent_noise(train_pts, cfg.noise_sigma, noise_rng)
            xb = embed(noisy, spec.domain, grid.box)
            if q is not None:
                xb = embed_highdim(xb, q)
        else:
            xb = x_tr
        value, grads = loss_and_gradient(net, xb, y_tr, cfg.loss)
        if not math.isfinite(value) or value > DIVERGENCE_LOSS:
            raise TrainingDivergedError(f"loss {value} at epoch {epoch}", record, net)
        for l_idx, l in enumerate(net.layers):
            l.weights -= cfg.learning_rate * grads[2 * l_idx]
            if not cfg.freeze_biases:
                l.biases -= cfg.learning_rate * grads[2 * l_idx + 1]
        if epoch % cfg.snapshot_every == 0 or epoch == cfg.epochs:
            snapshot(epoch)
            if not math.isfinite(record.final.loss) or record.final.loss > DIVERGENCE_LOSS:
                bad = record.snapshots.pop()
                raise TrainingDivergedError(f"loss {bad.loss} at epoch {epoch}", record, net)
    return net, record
