"""Dense linear algebra for the diversity losses.

Matrices are 2-D float64 numpy arrays. The kernels (products, Cholesky,
triangular solves) are hand-written and run through the compiled extension
when available, the numpy fallback otherwise; nothing here calls LAPACK.
"""

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import DimensionMismatch, NotPositiveDefinite, NotSymmetric

SYMMETRY_TOL = 1e-10
# Extra diagonal used by det_psd's tolerant mode to decide "PSD but singular".
PSD_TOL = 1e-10


def as_matrix(x, name="matrix"):
    """Return ``x`` as a C-contiguous 2-D float64 array with finite entries."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular ``L`` with ``L @ L.T == s + jitter * I``."""

    lower: np.ndarray
    jitter: float = 0.0

    @property
    def dim(self):
        return self.lower.shape[0]

    def reconstruct(self):
        return matmul(self.lower, self.lower.T)

    def logdet(self):
        return 2.0 * float(np.log(np.diag(self.lower)).sum())

    def det(self):
        d = np.diag(self.lower)
        return float(np.prod(d * d))

    def inverse(self):
        return kernels.cholesky_inverse(self.lower)


def matmul(a, b):
    """Matrix product, accumulated in plain index order (no BLAS)."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return kernels.matmul(a, b)


def _check_square_symmetric(s):
    s = as_matrix(s, "s")
    if s.shape[0] != s.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {s.shape}")
    asym = float(np.max(np.abs(s - s.T), initial=0.0))
    if asym > SYMMETRY_TOL:
        raise NotSymmetric(f"max |s - s.T| = {asym:.3g} exceeds {SYMMETRY_TOL}")
    return s


def cholesky(s, jitter=0.0):
    """Factor ``s + jitter * I``.

    Raises
    ------
    NotSymmetric
        If ``s`` is asymmetric beyond 1e-10.
    NotPositiveDefinite
        If a pivot is <= 0. The caller should retry with a larger jitter.
    """
    if jitter < 0 or not np.isfinite(jitter):
        raise ValueError(f"jitter must be finite and >= 0, got {jitter}")
    s = _check_square_symmetric(s)
    lower, failed = kernels.cholesky(s, float(jitter))
    if failed >= 0:
        raise NotPositiveDefinite(
            f"pivot {failed} is not positive (jitter={jitter:g})", pivot=failed
        )
    return CholeskyFactor(lower, float(jitter))


def logdet_psd(s, jitter=0.0):
    """``ln det(s + jitter * I)`` as ``2 * sum(ln L_ii)``."""
    return cholesky(s, jitter).logdet()


def det_psd(s, jitter=0.0, tolerant=False):
    """``det(s + jitter * I)`` as the product of squared Cholesky pivots.

    With ``tolerant=True`` and ``jitter == 0``, a matrix whose factorization
    fails but which is positive semi-definite to within 1e-10 (for instance
    two identical rows of ones) has determinant 0 instead of raising.
    """
    try:
        return cholesky(s, jitter).det()
    except NotPositiveDefinite:
        if not (tolerant and jitter == 0):
            raise
        # Re-raises if s is genuinely indefinite.
        cholesky(s, PSD_TOL * max(1, len(s)))
        return 0.0


def inverse_psd(s, jitter=0.0):
    """``(s + jitter * I)^-1`` from two triangular solves on the Cholesky factor."""
    return cholesky(s, jitter).inverse()
