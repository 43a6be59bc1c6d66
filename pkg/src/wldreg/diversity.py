"""Diversity regularizers on feature-layer activations.

Each loss returns its value together with a gradient. The aggregate
similarity measures (``j_direct``, ``j_det``, ``j_logdet``) differentiate with
respect to the similarity matrix S; ``activation_penalty``, ``decov_loss`` and
``wld_reg_loss`` differentiate with respect to the activations.
"""

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .errors import BatchTooSmall, NotPositiveDefinite, UnknownVariant
from .similarity import check_activations, pairwise_similarity, similarity_backward

DEFAULT_EPSILON = 1e-6
JITTER_RETRIES = 3


class Variant(str, enum.Enum):
    NONE = "none"
    DIRECT = "direct"
    DET = "det"
    LOGDET = "logdet"
    DECOV = "decov"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            choices = ", ".join(v.value for v in cls)
            raise UnknownVariant("variant", f"unknown variant {name!r} (choose from {choices})") from None


WLD_VARIANTS = (Variant.DIRECT, Variant.DET, Variant.LOGDET)


@dataclass(frozen=True)
class RegularizerSpec:
    """Which regularizer to apply and with what coefficients.

    ``lambda1`` weights the diversity term (or the DeCov loss), ``lambda2``
    the activation penalty. DeCov ignores ``lambda2``, ``gamma`` and
    ``epsilon``.
    """

    variant: Variant = Variant.NONE
    lambda1: float = 0.001
    lambda2: float = 0.001
    gamma: float = 10.0
    epsilon: float = DEFAULT_EPSILON
    smooth_kernel: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise ValueError(f"gamma must be finite and > 0, got {self.gamma}")
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ValueError(f"epsilon must be finite and > 0, got {self.epsilon}")


@dataclass
class RegularizerOutput:
    loss: float
    grad_acts: np.ndarray
    diversity: float = 0.0
    penalty: float = 0.0
    diag_det: Optional[float] = field(default=None)


def _factor_with_retry(s, epsilon):
    """Cholesky of S + eps*I, multiplying eps by 10 up to JITTER_RETRIES times."""
    jitter = epsilon
    for _ in range(JITTER_RETRIES + 1):
        try:
            return linalg.cholesky(s, jitter)
        except NotPositiveDefinite:
            jitter *= 10.0
    raise NotPositiveDefinite(
        f"S + eps*I not positive definite even at eps={jitter / 10.0:g}"
    )


def j_direct(sim):
    """Sum of off-diagonal similarities over ordered pairs; gradient dJ/dS."""
    s = sim.s
    c = s.shape[0]
    value = float(s.sum() - np.trace(s))
    return value, np.ones((c, c)) - np.eye(c)


def j_det(sim, epsilon=DEFAULT_EPSILON):
    """``-det(S)`` and its gradient.

    The value is the unjittered determinant (0 for singular S). The gradient
    is taken at S + eps*I as ``-det(S + eps*I) * (S + eps*I)^-1`` so it stays
    defined at singular S.
    """
    value = -linalg.det_psd(sim.s, 0.0, tolerant=True)
    factor = _factor_with_retry(sim.s, epsilon)
    return value, -factor.det() * factor.inverse()


def j_logdet(sim, epsilon=DEFAULT_EPSILON):
    """``-ln det(S + eps*I)`` and its gradient ``-(S + eps*I)^-1``.

    ``epsilon == 0`` means the default 1e-6. If the factorization fails the
    jitter grows tenfold (at most three times) and the value and gradient
    both use the jitter that succeeded.
    """
    if epsilon == 0:
        epsilon = DEFAULT_EPSILON
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    factor = _factor_with_retry(sim.s, epsilon)
    return -factor.logdet(), -factor.inverse()


def activation_penalty(acts):
    """Squared L2 norm of every sample's feature vector, summed over the batch."""
    acts = linalg.as_matrix(acts, "activations")
    return float(np.sum(acts * acts)), 2.0 * acts


def decov_loss(acts):
    """DeCov: half the squared off-diagonal mass of the activation covariance.

    The covariance is normalized by 1/m, so scaling the activations by ``a``
    scales the loss by exactly ``a**4``.
    """
    acts = linalg.as_matrix(acts, "activations")
    m = acts.shape[0]
    if m < 2:
        raise BatchTooSmall(f"DeCov needs at least 2 samples, got {m}")
    centered = acts - acts.mean(axis=0)
    cov = linalg.matmul(centered.T, centered) / m
    off = cov - np.diag(np.diag(cov))
    value = 0.5 * float(np.sum(off * off))
    # Column sums of `centered` vanish, so the centering adds no correction.
    grad = linalg.matmul(centered, off) * (2.0 / m)
    return value, grad


def wld_reg_loss(acts, spec):
    """Total regularizer for one batch of feature activations.

    For the diversity variants this is ``lambda1 * J(S) + lambda2 * penalty``
    with S the RBF similarity of the batch; for DeCov ``lambda1 * decov``;
    for ``none`` zero.
    """
    acts = linalg.as_matrix(acts, "activations")
    variant = spec.variant
    if variant is Variant.NONE:
        return RegularizerOutput(0.0, np.zeros_like(acts))
    if variant is Variant.DECOV:
        value, grad = decov_loss(acts)
        return RegularizerOutput(spec.lambda1 * value, spec.lambda1 * grad, diversity=value)

    acts = check_activations(acts)
    sim = pairwise_similarity(acts, spec.gamma, spec.smooth_kernel)
    diag_det = None
    if variant is Variant.DIRECT:
        j, dj_ds = j_direct(sim)
    elif variant is Variant.DET:
        j, dj_ds = j_det(sim, spec.epsilon)
        diag_det = -j
    else:
        j, dj_ds = j_logdet(sim, spec.epsilon)
        diag_det = -j
    pen, dpen = activation_penalty(acts)

    loss = spec.lambda1 * j + spec.lambda2 * pen
    grad = spec.lambda2 * dpen
    if spec.lambda1 != 0:
        grad = grad + spec.lambda1 * similarity_backward(acts, sim, dj_ds)
    return RegularizerOutput(loss, grad, diversity=j, penalty=pen, diag_det=diag_det)
