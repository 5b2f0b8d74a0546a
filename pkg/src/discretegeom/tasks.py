"""Boolean targets on discretised angles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .manifolds import DEFAULT_BOX, TWO_PI, AngleGrid, wrap_angle
from .numerics import InvalidInputError

GATES = {
    "XOR": np.logical_xor,
    "AND": np.logical_and,
    "OR": np.logical_or,
}


@dataclass(frozen=True)
class TaskSpec:
    gate: str = "XOR"
    alpha: float = 0.0
    domain: str = "torus"

    def __post_init__(self):
        gate = self.gate.upper()
        if gate not in GATES:
            raise InvalidInputError(f"unknown gate {self.gate!r}")
        if self.domain not in ("torus", "plane"):
            raise InvalidInputError(f"unknown domain {self.domain!r}")
        object.__setattr__(self, "gate", gate)
        object.__setattr__(self, "alpha", float(wrap_angle(float(self.alpha))))


def latent(theta, alpha):
    """``sin(theta - alpha)``; positive on the upper half-circle past the boundary."""
    return np.sin(np.asarray(theta, dtype=float) - alpha)


def discretise(theta, alpha, domain: str = "torus", box=DEFAULT_BOX, axis: int = 0):
    """Binary variable for one angle.

    Torus: ``0 <= theta - alpha < pi`` (half-open, so points exactly on a
    boundary go to the positive class). Plane: the box midline shifted by
    ``alpha`` along that axis.
    """
    theta = np.asarray(theta, dtype=float)
    if domain == "torus":
        return wrap_angle(theta - alpha) < math.pi
    mid = 0.5 * (box[2 * axis] + box[2 * axis + 1])
    return theta >= mid + alpha


def label(spec: TaskSpec, p) -> np.ndarray:
    """Gate output (0/1) at one or many angle points."""
    p = np.asarray(p, dtype=float)
    alpha = spec.alpha if spec.domain == "torus" else _plane_alpha(spec.alpha)
    b1 = discretise(p[..., 0], alpha, spec.domain, axis=0)
    b2 = discretise(p[..., 1], alpha, spec.domain, axis=1)
    return GATES[spec.gate](b1, b2).astype(int)


def _plane_alpha(alpha):
    # alpha is stored wrapped; on the plane a shift past pi means a negative offset
    return alpha - TWO_PI if alpha > math.pi else alpha


def optimal_weight_pair(alpha: float) -> tuple:
    """Weights on ``(cos theta, sin theta)`` whose response is ``sin(theta - alpha)``.

    This is the alpha = 0 pair ``(0, 1)`` rotated by alpha.
    """
    return (-math.sin(alpha), math.cos(alpha))


def holdout_mask(grid: AngleGrid, region) -> np.ndarray:
    """True for grid points strictly inside the box ``(lo1, hi1, lo2, hi2)``.

    On the torus each interval is read modulo 2pi, so ``(3pi/2, 5pi/2)``
    wraps through zero. An interval of length >= 2pi covers the whole circle.
    """
    lo1, hi1, lo2, hi2 = (float(r) for r in region)
    if hi1 < lo1 or hi2 < lo2:
        raise InvalidInputError(f"empty holdout region {region}")
    p = grid.points
    if grid.periodic:
        inside1 = _inside_arc(p[:, 0], lo1, hi1)
        inside2 = _inside_arc(p[:, 1], lo2, hi2)
    else:
        inside1 = (p[:, 0] > lo1) & (p[:, 0] < hi1)
        inside2 = (p[:, 1] > lo2) & (p[:, 1] < hi2)
    return inside1 & inside2


def _inside_arc(theta, lo, hi):
    if hi - lo >= TWO_PI:
        return np.ones_like(theta, dtype=bool)
    rel = wrap_angle(theta - lo)
    return (rel > 0) & (rel < hi - lo)
