"""Dense float64 linear algebra, log-gamma, and random matrix sampling.

Matrices are plain 2-d ``numpy.ndarray`` (row-major, float64) and vectors are
1-d arrays; the helpers here add the shape/finiteness validation the rest of
the package relies on.  Everything is a pure function of its inputs plus, for
the samplers, an explicit :class:`~tightbox.rng.Rng`.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import Rng


class ShapeError(ValueError):
    """Operand dimensions are incompatible."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a finite float64 2-d array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-d, got shape {m.shape}")
    if m.size and not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Validate and return ``v`` as a finite float64 1-d array."""
    x = np.asarray(v, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be 1-d, got shape {x.shape}")
    if x.size and not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit shape checking.

    Delegates to numpy's BLAS-backed ``@``, which is deterministic for fixed
    shapes on a given machine (row partitioning does not reorder the per-row
    accumulations).
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def abs_elementwise(a) -> np.ndarray:
    """Entrywise absolute value; normalizes -0.0 to +0.0."""
    return np.abs(as_matrix(a, "a"))


def ln_gamma(x: float) -> float:
    """Natural log of the gamma function for x > 0.

    Backed by the C library's ``lgamma`` (relative error well below 1e-12 on
    [0.5, 1e4]); used to evaluate gamma-function ratios in log space so width
    formulas stay finite for dimensions up to 1e6.
    """
    if x <= 0:
        raise ValueError(f"ln_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def sample_gaussian_matrix(rng: Rng, rows: int, cols: int, sigma: float) -> np.ndarray:
    """Matrix with i.i.d. N(0, sigma^2) entries, deterministic under rng."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    gen = rng.generator()
    return sigma * gen.standard_normal((rows, cols))


def sample_haar_orthogonal(rng: Rng, d: int) -> np.ndarray:
    """Orthogonal matrix drawn uniformly (Haar measure) from O(d).

    QR decomposition of a Gaussian matrix, with each column of Q flipped so
    the corresponding diagonal entry of R is positive.  The sign correction
    removes the QR convention dependence and makes the distribution exactly
    Haar (Mezzadri's recipe).
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    g = sample_gaussian_matrix(rng, d, d, 1.0)
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return q * signs[np.newaxis, :]
