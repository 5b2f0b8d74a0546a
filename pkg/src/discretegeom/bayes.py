"""Posterior over a half-circle class given a wrapped-normal measurement."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .manifolds import embed_torus
from .network import Mlp, forward
from .numerics import InvalidInputError
from .tasks import latent

TWO_PI = 2.0 * math.pi


def _wrap_signed(c):
    return np.mod(np.asarray(c, dtype=float) + math.pi, TWO_PI) - math.pi


def posterior(c, sigma: float, k_max: int = 1):
    """``P(A=1 | c)`` for ``A = [0 <= delta < pi]`` and ``c = delta + eta``.

    The wrapped likelihoods integrate to sums of error functions over the
    wrap index ``k = -k_max..k_max``; the common ``1/2pi`` factor cancels.
    """
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be > 0, got {sigma}")
    if k_max < 1:
        raise InvalidInputError(f"k_max must be >= 1, got {k_max}")
    c = np.asarray(c, dtype=float)
    k = np.arange(-k_max, k_max + 1).reshape((-1,) + (1,) * c.ndim)
    scale = sigma * math.sqrt(2.0)
    shifted = TWO_PI * k
    e_upper = erf((math.pi - c + shifted) / scale)
    num = np.sum(e_upper + erf((c - shifted) / scale), axis=0)
    den = np.sum(e_upper + erf((math.pi + c - shifted) / scale), axis=0)
    out = np.clip(num / den, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class PosteriorCurve:
    c: np.ndarray
    sigma: float
    k_max: int
    values: np.ndarray


def posterior_curve(sigma: float, k_max: int = 1, resolution: int = 256) -> PosteriorCurve:
    """Posterior on a uniform grid of ``c`` over [-pi, pi)."""
    if resolution < 2:
        raise InvalidInputError("resolution must be >= 2")
    c = -math.pi + TWO_PI * np.arange(resolution) / resolution
    return PosteriorCurve(c, float(sigma), int(k_max), posterior(c, sigma, k_max))


def monte_carlo_posterior(sigma: float, n_samples: int, n_bins: int, rng: np.random.Generator):
    """Empirical ``P(A=1 | c in bin)`` from simulated (delta, eta) pairs.

    Returns ``(bin_edges, frequency, counts)``.
    """
    if not sigma > 0:
        raise InvalidInputError("sigma must be > 0")
    delta = rng.uniform(-math.pi, math.pi, size=int(n_samples))
    eta = sigma * rng.standard_normal(int(n_samples))
    c = _wrap_signed(delta + eta)
    a = delta >= 0.0
    edges = -math.pi + TWO_PI * np.arange(n_bins + 1) / n_bins
    idx = np.clip(((c + math.pi) / TWO_PI * n_bins).astype(int), 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    hits = np.bincount(idx, weights=a.astype(float), minlength=n_bins)
    with np.errstate(invalid="ignore"):
        freq = hits / counts
    return edges, freq, counts


def monte_carlo_on_grid(resolution: int, sigma: float, n_samples: int, rng: np.random.Generator):
    """Monte-Carlo frequency of ``A=1`` in arcs centred on the ``posterior_curve`` grid.

    Each sample is assigned to the nearest of the ``resolution`` uniform
    ``c`` values on [-pi, pi), wrapping at the seam. Returns ``(c, freq, counts)``.
    """
    if not sigma > 0:
        raise InvalidInputError("sigma must be > 0")
    delta = rng.uniform(-math.pi, math.pi, size=int(n_samples))
    c = _wrap_signed(delta + sigma * rng.standard_normal(int(n_samples)))
    idx = np.rint((c + math.pi) / TWO_PI * resolution).astype(int) % resolution
    counts = np.bincount(idx, minlength=resolution)
    hits = np.bincount(idx, weights=(delta >= 0.0).astype(float), minlength=resolution)
    with np.errstate(invalid="ignore"):
        freq = hits / counts
    grid = -math.pi + TWO_PI * np.arange(resolution) / resolution
    return grid, freq, counts


def bin_averaged_posterior(edges, sigma: float, k_max: int = 1, nodes: int = 16) -> np.ndarray:
    """Average of the analytic posterior over each bin (Gauss-Legendre).

    The measurement marginal is uniform on the circle, so this is the exact
    expectation a binned Monte-Carlo frequency estimates.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    lo, hi = np.asarray(edges[:-1]), np.asarray(edges[1:])
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * x[None, :]
    return 0.5 * np.sum(w[None, :] * posterior(pts, sigma, k_max), axis=1)


def network_posterior_slice(net: Mlp, theta2_fixed: float, resolution: int = 256, alpha: float = 0.0,
                            hidden_gate: str = "XOR"):
    """Network output along the theta1 circle at fixed theta2.

    Returns ``(c, output, flipped)`` where ``c = theta1 - alpha`` in
    [-pi, pi). For XOR the slice reads as ``1 - P(A=1|c)`` when the fixed
    angle sits in the positive class, which ``flipped`` reports so callers
    can align it with :func:`posterior`.
    """
    c = -math.pi + TWO_PI * np.arange(resolution) / resolution
    theta1 = c + alpha
    pts = np.stack([theta1, np.full_like(theta1, theta2_fixed)], axis=1)
    out, _ = forward(net, embed_torus(pts))
    flipped = hidden_gate.upper() == "XOR" and float(latent(theta2_fixed, alpha)) >= 0.0
    return c, out, flipped
