"""Closed-form learning dynamics of a two-layer linear network on torus AND."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .manifolds import AngleGrid, embed_torus
from .network import Layer, Mlp, mode_projection
from .numerics import InvalidInputError, make_rng, sample_gaussian, svd_thin
from .geometry import MetricField
from .tasks import TaskSpec, label

__all__ = [
    "UnsupportedTaskError",
    "ModeDecomposition",
    "analytic_correlations",
    "empirical_correlations",
    "grid_correlations",
    "decompose",
    "u_closed_form",
    "predict_metric_trajectory",
    "task_metric",
    "balanced_linear_init",
    "mode_projection",
]


class UnsupportedTaskError(InvalidInputError):
    pass


@dataclass
class ModeDecomposition:
    sigma11: np.ndarray
    sigma31: np.ndarray
    s1: float
    v1: np.ndarray

    @property
    def S(self) -> float:
        return 2.0 * self.s1


def decompose(sigma11, sigma31) -> ModeDecomposition:
    """Top singular value and right singular vector of the input-output correlation."""
    sigma31 = np.atleast_2d(np.asarray(sigma31, dtype=float))
    _, s, v = svd_thin(sigma31)
    v1 = v[:, 0]
    # fix the sign so the mode has positive overlap with the correlation
    if float(sigma31[0] @ v1) < 0:
        v1 = -v1
    return ModeDecomposition(np.asarray(sigma11, dtype=float), sigma31, float(s[0]), v1)


def analytic_correlations(spec: TaskSpec = TaskSpec("AND", 0.0, "torus")) -> ModeDecomposition:
    """Exact input and input-output correlations for AND on the flat torus (alpha = 0)."""
    if spec.gate != "AND" or spec.domain != "torus" or spec.alpha != 0.0:
        raise UnsupportedTaskError(f"closed-form correlations only for torus AND with alpha=0, got {spec}")
    c = 1.0 / (2.0 * math.pi)
    sigma31 = np.array([[0.0, c, 0.0, c]])
    r = 1.0 / math.sqrt(2.0)
    return ModeDecomposition(0.5 * np.eye(4), sigma31, 1.0 / (math.sqrt(2.0) * math.pi),
                             np.array([0.0, r, 0.0, r]))


def empirical_correlations(spec: TaskSpec, n_samples: int, rng: np.random.Generator):
    """Monte-Carlo ``E[x x^T]`` and ``E[y x^T]`` under uniform angles."""
    if n_samples < 1000:
        raise InvalidInputError("n_samples must be >= 1000")
    if spec.domain != "torus":
        raise UnsupportedTaskError("empirical correlations are defined for the torus")
    p = rng.uniform(0.0, 2.0 * math.pi, size=(int(n_samples), 2))
    x = embed_torus(p)
    y = label(spec, p).astype(float)
    return x.T @ x / n_samples, (y @ x / n_samples)[None, :]


def grid_correlations(spec: TaskSpec, resolution: int):
    """Correlations averaged over the training grid rather than sampled."""
    grid = AngleGrid.torus(resolution)
    x = embed_torus(grid.points)
    y = label(spec, grid.points).astype(float)
    return x.T @ x / grid.size, (y @ x / grid.size)[None, :]


def u_closed_form(t, S: float, tau: float, u0: float):
    """Sigmoidal mode strength ``S e^{St/tau} / (e^{St/tau} - 1 + S/u0)``.

    Written as ``S / (1 + (S/u0 - 1) e^{-St/tau})`` which is the same
    expression but does not overflow at large ``t``.
    """
    if u0 <= 0:
        raise InvalidInputError(f"u0 must be > 0, got {u0}")
    if tau <= 0:
        raise InvalidInputError(f"tau must be > 0, got {tau}")
    t = np.asarray(t, dtype=float)
    out = S / (1.0 + (S / u0 - 1.0) * np.exp(-S * t / tau))
    return float(out) if out.ndim == 0 else out


def task_metric(grid: AngleGrid) -> np.ndarray:
    """``[[cos^2 t1, cos t1 cos t2], [cos t1 cos t2, cos^2 t2]]`` per grid point."""
    c = np.cos(grid.points)
    return c[:, :, None] * c[:, None, :]


def predict_metric_trajectory(a_t: float, perp: MetricField, grid: AngleGrid = None) -> MetricField:
    """``0.5 a^2 G_task + G_perp`` on the grid of ``perp``."""
    grid = grid or perp.grid
    g = 0.5 * a_t ** 2 * task_metric(grid) + perp.matrices()
    return MetricField.from_matrices(grid, g)


def balanced_linear_init(hidden: int, v1, u0: float, sigma: float, seed: int,
                         hidden_activation: str = "identity") -> Mlp:
    """Two-layer network with ``W2 = a^T`` and ``W1 = a v1^T + W_perp``.

    ``a`` has norm ``sqrt(u0)`` so ``W2 W1 v1 = u0``. ``W_perp`` is Gaussian
    with std ``sigma``, projected off ``v1`` in input space and off ``a`` in
    hidden space, so ``W2 W_perp = 0`` and gradient descent on the linear
    network never touches it.
    """
    if u0 <= 0:
        raise InvalidInputError("u0 must be > 0")
    v1 = np.asarray(v1, dtype=float)
    v1 = v1 / np.linalg.norm(v1)
    n_in = v1.size
    rng = make_rng(seed, 0)
    w = sample_gaussian(rng, hidden * n_in, sigma).reshape(hidden, n_in)
    direction = w @ v1
    nrm = np.linalg.norm(direction)
    if nrm < 1e-12:
        direction = np.zeros(hidden)
        direction[0] = 1.0
    else:
        direction = direction / nrm
    w_perp = w - np.outer(w @ v1, v1)
    w_perp = w_perp - np.outer(direction, direction @ w_perp)
    a = math.sqrt(u0) * direction
    w1 = np.outer(a, v1) + w_perp
    w2 = a[None, :].copy()
    layers = [
        Layer(w1, np.zeros(hidden), hidden_activation),
        Layer(w2, np.zeros(1), "identity"),
    ]
    return Mlp(layers, (sigma, math.sqrt(u0)))
