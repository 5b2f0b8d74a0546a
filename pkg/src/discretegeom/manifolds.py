"""Input manifolds (flat torus and plane), their embeddings and Jacobians.

Angle points are stored as ``(N, 2)`` arrays of ``(theta1, theta2)``. The
embedding functions are vectorised: they accept a single point of shape
``(2,)`` or a batch of shape ``(N, 2)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import InvalidInputError

TWO_PI = 2.0 * math.pi
DEFAULT_BOX = (0.0, TWO_PI, 0.0, TWO_PI)


def wrap_angle(theta):
    """Reduce angles into [0, 2pi)."""
    out = np.mod(theta, TWO_PI)
    # np.mod can round a tiny negative number up to exactly 2pi
    return np.where(out >= TWO_PI, 0.0, out)


@dataclass(frozen=True)
class AngleGrid:
    """Regular lattice over the parameter domain.

    On the torus the lattice is periodic: ``resolution`` points per axis,
    no duplicate endpoint, shifted by ``offset`` cells (half a cell by
    default so no sample lands exactly on a class boundary). On the plane
    both endpoints of each box edge are included.
    """

    resolution: int
    domain: str = "torus"
    box: tuple = DEFAULT_BOX
    offset: float = 0.5
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.resolution < 2:
            raise InvalidInputError(f"resolution must be >= 2, got {self.resolution}")
        if self.domain not in ("torus", "plane"):
            raise InvalidInputError(f"unknown domain {self.domain!r}")
        a1, a2 = np.meshgrid(self.axis(0), self.axis(1), indexing="ij")
        object.__setattr__(self, "points", np.stack([a1.ravel(), a2.ravel()], axis=1))

    @classmethod
    def torus(cls, resolution: int, offset: float = 0.5) -> "AngleGrid":
        return cls(resolution, "torus", DEFAULT_BOX, offset)

    @classmethod
    def plane(cls, resolution: int, box=DEFAULT_BOX) -> "AngleGrid":
        return cls(resolution, "plane", tuple(float(b) for b in box), 0.0)

    @property
    def periodic(self) -> bool:
        return self.domain == "torus"

    @property
    def shape(self) -> tuple:
        return (self.resolution, self.resolution)

    @property
    def size(self) -> int:
        return self.resolution * self.resolution

    def axis(self, i: int) -> np.ndarray:
        lo, hi = self.box[2 * i], self.box[2 * i + 1]
        n = self.resolution
        if self.periodic:
            return lo + (np.arange(n) + self.offset) * (hi - lo) / n
        return np.linspace(lo, hi, n)

    def spacing(self, i: int) -> float:
        lo, hi = self.box[2 * i], self.box[2 * i + 1]
        n = self.resolution
        return (hi - lo) / n if self.periodic else (hi - lo) / (n - 1)

    def as_image(self, values) -> np.ndarray:
        """Reshape a per-point vector to (n_theta1, n_theta2)."""
        return np.asarray(values).reshape(self.shape + np.shape(values)[1:])


def embed_torus(p) -> np.ndarray:
    """Flat-torus embedding ``[cos t1, sin t1, cos t2, sin t2]``."""
    p = np.asarray(p, dtype=float)
    t1, t2 = p[..., 0], p[..., 1]
    return np.stack([np.cos(t1), np.sin(t1), np.cos(t2), np.sin(t2)], axis=-1)


def embed_plane(p, box=DEFAULT_BOX) -> np.ndarray:
    """Affine map of the box onto [-1, 1]^2."""
    p = np.asarray(p, dtype=float)
    lo = np.array([box[0], box[2]])
    hi = np.array([box[1], box[3]])
    return 2.0 * (p - lo) / (hi - lo) - 1.0


def embed(p, domain: str = "torus", box=DEFAULT_BOX) -> np.ndarray:
    if domain == "torus":
        return embed_torus(p)
    if domain == "plane":
        return embed_plane(p, box)
    raise InvalidInputError(f"unknown domain {domain!r}")


def embedding_jacobian(p, domain: str = "torus", box=DEFAULT_BOX) -> np.ndarray:
    """Jacobian of the embedding with respect to the angles.

    Returns shape ``(..., n_in, 2)``.
    """
    p = np.asarray(p, dtype=float)
    if domain == "torus":
        t1, t2 = p[..., 0], p[..., 1]
        zero = np.zeros_like(t1)
        rows = [
            np.stack([-np.sin(t1), zero], axis=-1),
            np.stack([np.cos(t1), zero], axis=-1),
            np.stack([zero, -np.sin(t2)], axis=-1),
            np.stack([zero, np.cos(t2)], axis=-1),
        ]
        return np.stack(rows, axis=-2)
    if domain == "plane":
        scale = np.diag([2.0 / (box[1] - box[0]), 2.0 / (box[3] - box[2])])
        return np.broadcast_to(scale, p.shape[:-1] + (2, 2)).copy()
    raise InvalidInputError(f"unknown domain {domain!r}")


def add_tangent_noise(p, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Perturb each angle by N(0, sigma^2) and wrap back into [0, 2pi)."""
    if sigma < 0:
        raise InvalidInputError(f"sigma must be >= 0, got {sigma}")
    p = np.asarray(p, dtype=float)
    if sigma == 0:
        return wrap_angle(p)
    return wrap_angle(p + sigma * rng.standard_normal(p.shape))


def embed_highdim(x, q) -> np.ndarray:
    """Map embedded inputs through a matrix with orthonormal columns (x -> Qx)."""
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[1] != x.shape[-1]:
        raise InvalidInputError(f"cannot embed inputs of dim {x.shape[-1]} with Q of shape {q.shape}")
    return x @ q.T


def write_grid_csv(path, grid: AngleGrid, columns: dict) -> None:
    """Write per-point values as ``theta1,theta2,<columns>`` with 9 significant digits."""
    names = list(columns)
    data = [np.asarray(columns[k]).reshape(-1) for k in names]
    for k, d in zip(names, data):
        if d.size != grid.size:
            raise InvalidInputError(f"column {k!r} has {d.size} values, grid has {grid.size}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta1", "theta2", *names])
        for i, (t1, t2) in enumerate(grid.points):
            w.writerow([_fmt(t1), _fmt(t2), *(_fmt(d[i]) for d in data)])


def read_grid_csv(path) -> dict:
    """Read a grid CSV back into a dict of float arrays keyed by header."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = list(zip(*body)) if body else [()] * len(header)
    return {h: np.array([float(v) for v in c]) for h, c in zip(header, cols)}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return f"{float(v):.9g}"
