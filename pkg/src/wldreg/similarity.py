"""Pairwise RBF similarity between the units of a layer.

For a batch of activations ``acts`` of shape (m samples, C units), the
similarity of units n and k is the batch average

    s_nk = (1/m) * sum_j exp(-gamma * |acts[j, n] - acts[j, k]|)

Unit outputs are scalars, so the norm reduces to an absolute value. With
``smooth=True`` the squared distance is used instead.
"""

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import DimensionMismatch, InvalidGamma
from .linalg import as_matrix


@dataclass(frozen=True)
class SimilarityMatrix:
    s: np.ndarray
    gamma: float
    smooth: bool = False

    @property
    def units(self):
        return self.s.shape[0]


def check_activations(acts):
    acts = as_matrix(acts, "activations")
    if acts.shape[0] < 1:
        raise DimensionMismatch("activation batch has no samples")
    if acts.shape[1] < 2:
        raise DimensionMismatch("similarity needs at least two units")
    return acts


def _check_gamma(gamma):
    if not np.isfinite(gamma) or gamma <= 0:
        raise InvalidGamma(f"gamma must be finite and > 0, got {gamma}")
    return float(gamma)


def pairwise_similarity(acts, gamma, smooth=False):
    """Return the C x C similarity matrix of the units in ``acts``.

    The diagonal is exactly 1 and each unordered pair is evaluated once, so
    the result is exactly symmetric. Distances large enough to underflow
    ``exp`` give a similarity of 0.
    """
    acts = check_activations(acts)
    gamma = _check_gamma(gamma)
    return SimilarityMatrix(kernels.rbf_similarity(acts, gamma, bool(smooth)), gamma, bool(smooth))


def similarity_backward(acts, sim, grad_s):
    """Gradient of ``sum(grad_s * S)`` with respect to ``acts``.

    ``grad_s`` need not be symmetric; entries (n, k) and (k, n) both act on
    the shared value s_nk. The diagonal is constant and contributes nothing.
    The absolute value is differentiated with sign(0) = 0.
    """
    acts = check_activations(acts)
    grad_s = as_matrix(grad_s, "grad_s")
    c = acts.shape[1]
    if grad_s.shape != (c, c) or sim.s.shape != (c, c):
        raise DimensionMismatch(
            f"grad_s {grad_s.shape} and S {sim.s.shape} must both be ({c}, {c})"
        )
    gsym = np.ascontiguousarray(grad_s + grad_s.T)
    return kernels.rbf_similarity_grad(acts, gsym, sim.gamma, sim.smooth)
