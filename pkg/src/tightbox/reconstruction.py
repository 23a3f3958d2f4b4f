"""Box growth through a linear embed-and-reconstruct map U_k U_k^T.

Projecting a d-dimensional box onto a random k-dimensional subspace and back
is lossless for points but not for boxes: with U drawn Haar-uniformly from
the orthogonal group and U_k its first k columns, the layerwise radius
|U_k| |U_k|^T eps 1 grows linearly in k (slope ~ 2/pi for large d) while
even the optimal radius |U_k U_k^T| eps 1 grows like

    (2 / sqrt(pi)) * Gamma((k + 1) / 2) / Gamma(k / 2)  in Theta(sqrt(k)).

Only k = d (where U_k can be the identity) makes box reconstruction exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import ln_gamma, sample_haar_orthogonal
from .rng import Rng


@dataclass(frozen=True)
class ReconstructionResult:
    """Monte-Carlo per-dimension growth ratios E(delta_i / eps)."""

    d: int
    k: int
    layerwise_growth: float
    optimal_growth: float
    c_estimate: float  # layerwise_growth / k, the d-dependent slope
    samples: int
    layerwise_stderr: float
    optimal_stderr: float


def reconstruction_radii(u_k: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Layerwise and optimal output radii for a uniform input box of radius eps.

    ``u_k`` must have orthonormal columns (tolerance 1e-8).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    u_k = np.asarray(u_k, dtype=np.float64)
    if u_k.ndim != 2 or u_k.shape[0] < u_k.shape[1]:
        raise ValueError(f"u_k must be d x k with k <= d, got {u_k.shape}")
    gram = u_k.T @ u_k
    if np.abs(gram - np.eye(u_k.shape[1])).max() > 1e-8:
        raise ValueError("u_k columns are not orthonormal")
    ones = np.full(u_k.shape[0], eps)
    a = np.abs(u_k)
    layerwise = a @ (a.T @ ones)
    optimal = np.abs(u_k @ u_k.T) @ ones
    return layerwise, optimal


def mc_reconstruction(rng: Rng, d: int, k: int, samples: int) -> ReconstructionResult:
    """Growth ratios averaged over Haar samples and output dimensions.

    U_k is the first k columns of a full Haar sample (any k-subset of columns
    has the same distribution).  Standard errors treat each Haar sample's
    dimension-averaged growth as one observation.
    """
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    if samples < 100:
        raise ValueError("samples must be >= 100")
    lw = np.empty(samples)
    opt = np.empty(samples)
    for i in range(samples):
        u_k = sample_haar_orthogonal(rng.substream(i), d)[:, :k]
        layerwise, optimal = reconstruction_radii(u_k, 1.0)
        lw[i] = layerwise.mean()
        opt[i] = optimal.mean()
    n = math.sqrt(samples)
    return ReconstructionResult(
        d=d,
        k=k,
        layerwise_growth=float(lw.mean()),
        optimal_growth=float(opt.mean()),
        c_estimate=float(lw.mean() / k),
        samples=samples,
        layerwise_stderr=float(lw.std(ddof=1) / n),
        optimal_stderr=float(opt.std(ddof=1) / n),
    )


def theory_optimal_growth(k: int) -> float:
    """Large-d limit of the optimal growth ratio, Theta(sqrt(k))."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    log = math.log(2.0) - 0.5 * math.log(math.pi) + ln_gamma((k + 1) / 2.0) - ln_gamma(k / 2.0)
    return math.exp(log)
