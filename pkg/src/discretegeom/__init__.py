"""Riemannian geometry of small networks trained on Boolean tasks over angle manifolds.

Modules: ``numerics`` (SVD, eigenvalues, seeded sampling), ``manifolds``
(torus/plane grids and embeddings), ``tasks`` (Boolean targets), ``network``
(MLP, Jacobians, trainer), ``geometry`` (pullback metric, curvature,
participation ratio), ``lindyn`` (linear learning dynamics), ``bayes``
(wrapped-normal posterior) and ``experiments`` (configured pipelines and CLI).
"""

__version__ = "0.1.0"
