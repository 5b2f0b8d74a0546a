"""Pullback metrics on the angle grid and their curvature.

Metric components use the usual surface notation in derivatives: with
``u = theta1`` and ``v = theta2``, ``E = g11``, ``F = g12``, ``G = g22``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifolds import AngleGrid, embed, embedding_jacobian, embed_highdim
from .network import Mlp, push_tangents
from .numerics import InvalidInputError, sym_eigvals

DET_FLOOR = 1e-9


class UndefinedParticipationRatio(ValueError):
    """Activations have zero variance, so the participation ratio is 0/0."""


@dataclass
class MetricField:
    grid: AngleGrid
    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray

    def __post_init__(self):
        for k in ("g11", "g12", "g22"):
            setattr(self, k, np.asarray(getattr(self, k), dtype=float))

    @property
    def det(self) -> np.ndarray:
        return self.g11 * self.g22 - self.g12 ** 2

    def matrices(self) -> np.ndarray:
        """Metric as an (N, 2, 2) array."""
        return np.stack([np.stack([self.g11, self.g12], -1), np.stack([self.g12, self.g22], -1)], -2)

    @classmethod
    def from_matrices(cls, grid: AngleGrid, g) -> "MetricField":
        g = np.asarray(g, dtype=float)
        return cls(grid, g[:, 0, 0].copy(), 0.5 * (g[:, 0, 1] + g[:, 1, 0]), g[:, 1, 1].copy())

    def columns(self) -> dict:
        return {"g11": self.g11, "g12": self.g12, "g22": self.g22}


@dataclass
class CurvatureField:
    grid: AngleGrid
    K: np.ndarray
    valid: np.ndarray

    def columns(self) -> dict:
        return {"K": np.where(self.valid, self.K, 0.0), "valid": self.valid}


def pullback_metric(net: Mlp, layer: int, grid: AngleGrid, domain: str = None, q=None) -> MetricField:
    """Metric ``J^T J`` of the layer activations with respect to (theta1, theta2).

    ``J`` is the network Jacobian at the embedded point times the embedding
    Jacobian, pushed forward together in one tangent pass.
    """
    domain = domain or grid.domain
    x = embed(grid.points, domain, grid.box)
    jx = embedding_jacobian(grid.points, domain, grid.box)
    if q is not None:
        q = np.asarray(q, dtype=float)
        x = embed_highdim(x, q)
        jx = np.einsum("ij,njk->nik", q, jx)
    _, jz = push_tangents(net, x, jx, layer)
    g = np.einsum("nik,nil->nkl", jz, jz)
    return MetricField.from_matrices(grid, g)


def hidden_metric_analytic(w, p, tol: float = 1e-8) -> np.ndarray:
    """Closed-form tanh hidden-layer metric when the cosine input columns vanish.

    With first-layer weights ``w`` (K, 4) and ``w[:, 0] = w[:, 2] = 0``::

        G_ij = cos(t_i) cos(t_j) * sum_k w[k, 2i-1] w[k, 2j-1] sech^4(u_k)
        u_k  = w[k, 1] sin(t1) + w[k, 3] sin(t2)

    (zero-based columns 1 and 3 carry the sine inputs). Biases are assumed
    zero. ``p`` may be one point (2,) or a batch (N, 2).
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[1] != 4:
        raise InvalidInputError(f"expected (K, 4) weights, got {w.shape}")
    if np.max(np.abs(w[:, [0, 2]])) > tol:
        raise InvalidInputError("cosine-input weight columns must be zero")
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    c = np.cos(p)
    s = np.sin(p)
    ws = w[:, [1, 3]]
    u = s @ ws.T
    sech4 = 1.0 / np.cosh(u) ** 4
    g = np.einsum("nk,ki,kj->nij", sech4, ws, ws) * c[:, :, None] * c[:, None, :]
    return g[0] if single else g


# fourth-order central difference stencils
_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def _diff(f, axis, h, order, periodic):
    stencil = _D1 if order == 1 else _D2
    out = np.zeros_like(f)
    for k, c in zip(range(-2, 3), stencil):
        if c != 0.0:
            # np.roll(f, -k)[i] = f[i + k]
            out += c * np.roll(f, -k, axis=axis)
    # on non-periodic grids the wrapped stencils are wrong near the edges; callers mask them
    return out / h ** order


def gaussian_curvature(field: MetricField, det_floor: float = DET_FLOOR) -> CurvatureField:
    """Gaussian curvature of a metric field by the Brioschi formula.

    Partial derivatives are fourth-order central differences on the grid,
    periodic on the torus. On the plane the two outermost rows and columns
    are masked because their stencils would leave the domain. Points where
    ``det G < det_floor`` are masked as well.
    """
    grid = field.grid
    n = grid.resolution
    if n < 5:
        raise InvalidInputError("curvature needs at least 5 grid points per axis")
    per = grid.periodic
    hu, hv = grid.spacing(0), grid.spacing(1)
    E, F, G = (grid.as_image(a) for a in (field.g11, field.g12, field.g22))

    def d(f, axis, order=1):
        return _diff(f, axis, hu if axis == 0 else hv, order, per)

    Eu, Ev = d(E, 0), d(E, 1)
    Fu, Fv = d(F, 0), d(F, 1)
    Gu, Gv = d(G, 0), d(G, 1)
    Evv = d(E, 1, 2)
    Guu = d(G, 0, 2)
    Fuv = d(d(F, 0), 1)

    a11 = -0.5 * Evv + Fuv - 0.5 * Guu
    # det of [[a11, Eu/2, Fu - Ev/2], [Fv - Gu/2, E, F], [Gv/2, F, G]]
    det_a = (
        a11 * (E * G - F * F)
        - 0.5 * Eu * ((Fv - 0.5 * Gu) * G - F * 0.5 * Gv)
        + (Fu - 0.5 * Ev) * ((Fv - 0.5 * Gu) * F - E * 0.5 * Gv)
    )
    # det of [[0, Ev/2, Gu/2], [Ev/2, E, F], [Gu/2, F, G]]
    det_b = (
        -0.5 * Ev * (0.5 * Ev * G - F * 0.5 * Gu)
        + 0.5 * Gu * (0.5 * Ev * F - E * 0.5 * Gu)
    )
    det_g = E * G - F * F
    valid = det_g >= det_floor
    if not per:
        edge = np.zeros_like(valid)
        edge[:2, :] = edge[-2:, :] = True
        edge[:, :2] = edge[:, -2:] = True
        valid &= ~edge
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(valid, (det_a - det_b) / np.where(valid, det_g, 1.0) ** 2, np.nan)
    valid &= np.isfinite(K)
    return CurvatureField(grid, K.reshape(-1), valid.reshape(-1))


def _embedding_second_derivatives(points, domain):
    """(N, n_in, 2, 2) second derivatives of the embedding."""
    n = points.shape[0]
    if domain == "plane":
        return np.zeros((n, 2, 2, 2))
    t1, t2 = points[:, 0], points[:, 1]
    out = np.zeros((n, 4, 2, 2))
    out[:, 0, 0, 0] = -np.cos(t1)
    out[:, 1, 0, 0] = -np.sin(t1)
    out[:, 2, 1, 1] = -np.cos(t2)
    out[:, 3, 1, 1] = -np.sin(t2)
    return out


def _act_derivs(name, a):
    if name == "tanh":
        h = np.tanh(a)
        d1 = 1.0 - h * h
        return h, d1, -2.0 * h * d1
    if name == "sigmoid":
        h = 0.5 * (1.0 + np.tanh(0.5 * a))
        d1 = h * (1.0 - h)
        return h, d1, d1 * (1.0 - 2.0 * h)
    return a, np.ones_like(a), np.zeros_like(a)


def layer_jets(net: Mlp, layer: int, grid: AngleGrid, domain: str = None, q=None):
    """Activations with first and second derivatives in (theta1, theta2).

    Returns ``(z, dz, d2z)`` with shapes (N, n), (N, n, 2) and (N, n, 2, 2),
    propagated exactly through the layers (second-order forward mode).
    """
    domain = domain or grid.domain
    pts = grid.points
    h = embed(pts, domain, grid.box)
    t = embedding_jacobian(pts, domain, grid.box)
    s = _embedding_second_derivatives(pts, domain)
    if q is not None:
        q = np.asarray(q, dtype=float)
        h = embed_highdim(h, q)
        t = np.einsum("ij,njk->nik", q, t)
        s = np.einsum("ij,njkl->nikl", q, s)
    n_layers = len(net.layers)
    layer = layer + n_layers + 1 if layer < 0 else layer
    if not 0 <= layer <= n_layers:
        raise InvalidInputError(f"layer {layer} out of range")
    for l in net.layers[:layer]:
        a = h @ l.weights.T + l.biases
        at = np.einsum("ij,njk->nik", l.weights, t)
        as_ = np.einsum("ij,njkl->nikl", l.weights, s)
        h, d1, d2 = _act_derivs(l.activation, a)
        t = d1[:, :, None] * at
        s = d1[:, :, None, None] * as_ + d2[:, :, None, None] * at[:, :, :, None] * at[:, :, None, :]
    return h, t, s


def network_curvature(net: Mlp, layer: int, grid: AngleGrid, domain: str = None, q=None,
                      det_floor: float = DET_FLOOR) -> CurvatureField:
    """Gaussian curvature of the layer's activation surface from exact derivatives.

    Uses the Gauss equation for a surface in R^n::

        K = (<P z_uu, P z_vv> - |P z_uv|^2) / det G

    where ``P`` projects onto the normal space. This is intrinsic, so it
    equals the Brioschi value of the pullback metric, but it needs only second
    derivatives of the activations and no finite differences.
    """
    _, t, s = layer_jets(net, layer, grid, domain, q)
    g = np.einsum("nik,nil->nkl", t, t)
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
    valid = det >= det_floor
    safe = np.where(valid, det, 1.0)
    ginv = np.stack([np.stack([g[:, 1, 1], -g[:, 0, 1]], -1),
                     np.stack([-g[:, 1, 0], g[:, 0, 0]], -1)], -2) / safe[:, None, None]
    zuu, zvv, zuv = s[:, :, 0, 0], s[:, :, 1, 1], s[:, :, 0, 1]

    def normal_dot(a, b):
        ta = np.einsum("nik,ni->nk", t, a)
        tb = np.einsum("nik,ni->nk", t, b)
        return np.einsum("ni,ni->n", a, b) - np.einsum("nk,nkl,nl->n", ta, ginv, tb)

    K = (normal_dot(zuu, zvv) - normal_dot(zuv, zuv)) / safe
    valid &= np.isfinite(K)
    return CurvatureField(grid, np.where(valid, K, np.nan), valid)


def metric_trace(field: MetricField) -> np.ndarray:
    return field.g11 + field.g22


def participation_ratio(activations) -> float:
    """``(sum l)^2 / sum l^2`` over covariance eigenvalues ``l`` of the activations.

    Args:
        activations: (n_points, n_neurons); rows are grid points.
    """
    a = np.asarray(activations, dtype=float)
    if a.ndim != 2 or a.shape[0] < 2:
        raise InvalidInputError("need at least two rows of activations")
    centred = a - a.mean(axis=0)
    cov = centred.T @ centred / (a.shape[0] - 1)
    lam = np.clip(sym_eigvals(cov), 0.0, None)
    total = lam.sum()
    if total <= 1e-300:
        raise UndefinedParticipationRatio("activations are constant over the grid")
    return float(total ** 2 / np.sum(lam ** 2))


@dataclass
class CurvatureSummary:
    mean: float
    max_abs: float
    argmax: tuple


def mean_curvature_summary(field: CurvatureField) -> CurvatureSummary:
    """Mean K, max |K| and the angle point of the max, over valid points."""
    if not np.any(field.valid):
        raise InvalidInputError("curvature field has no valid points")
    k = field.K[field.valid]
    pts = field.grid.points[field.valid]
    i = int(np.argmax(np.abs(k)))
    return CurvatureSummary(float(np.mean(k)), float(np.abs(k[i])), (float(pts[i, 0]), float(pts[i, 1])))


def top_fraction_mask(field: CurvatureField, fraction: float = 0.05) -> np.ndarray:
    """Mask of the valid points whose |K| is in the top ``fraction``."""
    idx = np.flatnonzero(field.valid)
    k = np.abs(field.K[idx])
    m = max(1, int(round(fraction * idx.size)))
    top = idx[np.argsort(-k, kind="stable")[:m]]
    mask = np.zeros(field.grid.size, dtype=bool)
    mask[top] = True
    return mask
