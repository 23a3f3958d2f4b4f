"""How propagation tightness scales with width and depth at random init.

For a two-layer linear chain with i.i.d. zero-mean Gaussian weights, the
expected optimal radius over the expected layerwise radius has the closed
form

    init_tightness(d1) = sqrt(pi) * Gamma((d1 + 1) / 2) / (d1 * Gamma(d1 / 2)),

a Theta(1 / sqrt(d1)) decay in the inner width d1, independent of the weight
variances.  Its reciprocal ``slack_growth`` is strictly increasing, and an
L-layer chain with minimum inner width d is at most init_tightness(d) **
floor(L / 2) tight.  A two-layer ReLU net on inputs symmetric around zero is
asymptotically sqrt(2) tighter than the linear chain of the same widths.

The Monte-Carlo estimators here measure the ratio of expectations (matching
the closed forms), not the expectation of per-sample ratios; both are
reported.  Standard errors come from the delta method for a ratio of means.
Sample ``i`` always draws from ``rng.substream(i)``, so estimates do not
depend on batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import ln_gamma
from .rng import Rng

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class InitTightnessEstimate:
    """Closed-form reference plus a Monte-Carlo estimate with its stderr.

    ``analytic`` is the exact value where one exists (two-layer chains), an
    upper bound for deeper chains, and sqrt(2) for the ReLU factor.
    ``ratio_of_ratios`` is the informational mean of per-sample ratios.
    """

    analytic: float
    mc_mean: float
    mc_stderr: float
    samples: int
    ratio_of_ratios: float = float("nan")


def init_tightness(d1: int) -> float:
    """Expected tightness of a random two-layer linear chain with inner width d1.

    Evaluated via log-gamma so it stays finite up to d1 = 1e6.
    """
    if d1 < 1:
        raise ValueError(f"width must be >= 1, got {d1}")
    log = 0.5 * math.log(math.pi) + ln_gamma((d1 + 1) / 2.0) - math.log(d1) - ln_gamma(d1 / 2.0)
    return math.exp(log)


def slack_growth(n: int) -> float:
    """Reciprocal of init_tightness: the expected IBP-over-optimal blowup factor.

    Strictly increasing in n and asymptotically sqrt(n / pi).
    """
    if n < 1:
        raise ValueError(f"width must be >= 1, got {n}")
    log = math.log(n) + ln_gamma(n / 2.0) - 0.5 * math.log(math.pi) - ln_gamma((n + 1) / 2.0)
    return math.exp(log)


def depth_tightness_bound(tau_min: float, layers: int) -> float:
    """Upper bound tau_min ** floor(layers / 2) on expected tightness at init."""
    if not 0.0 < tau_min <= 1.0:
        raise ValueError(f"tau_min must be in (0, 1], got {tau_min}")
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    return tau_min ** (layers // 2)


def _ratio_estimate(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    """Mean(num)/mean(den) and its delta-method standard error."""
    n = num.shape[0]
    a, b = num.mean(), den.mean()
    ratio = a / b
    var_a = num.var(ddof=1)
    var_b = den.var(ddof=1)
    cov = ((num - a) * (den - b)).sum() / (n - 1)
    var_ratio = (var_a - 2.0 * ratio * cov + ratio * ratio * var_b) / (b * b * n)
    return float(ratio), float(math.sqrt(max(var_ratio, 0.0)))


def mc_linear_init_tightness(rng: Rng, dims, sigmas, samples: int) -> InitTightnessEstimate:
    """Monte-Carlo tightness of random Gaussian linear chains at unit radius.

    ``dims = (d0, ..., dL)`` and ``sigmas`` gives the per-layer weight std.
    Per sample, optimal and layerwise radii are averaged over output
    dimensions before entering the ratio of means.
    """
    dims = [int(d) for d in dims]
    sigmas = [float(s) for s in sigmas]
    if len(dims) < 2 or len(sigmas) != len(dims) - 1:
        raise ValueError("need dims (d0..dL) and one sigma per layer")
    if samples < 100:
        raise ValueError("samples must be >= 100")
    num = np.empty(samples)
    den = np.empty(samples)
    ratios = np.empty(samples)
    ones = np.ones(dims[0])
    for i in range(samples):
        gen = rng.substream(i).generator()
        prod = None
        layerwise = ones
        for k in range(len(dims) - 1):
            w = sigmas[k] * gen.standard_normal((dims[k + 1], dims[k]))
            prod = w if prod is None else w @ prod
            layerwise = np.abs(w) @ layerwise
        optimal = np.abs(prod) @ ones
        num[i] = optimal.mean()
        den[i] = layerwise.mean()
        ratios[i] = (optimal / layerwise).mean()
    mc, stderr = _ratio_estimate(num, den)
    if len(dims) == 3:
        analytic = init_tightness(dims[1])
    else:
        analytic = depth_tightness_bound(init_tightness(min(dims[1:-1])), len(dims) - 1)
    return InitTightnessEstimate(analytic, mc, stderr, samples, float(ratios.mean()))


def mc_relu_tightness_factor(rng: Rng, d0: int, d1: int, d2: int, samples: int) -> InitTightnessEstimate:
    """Ratio of ReLU-net local tightness to the linear-chain tightness at init.

    Draws standard Gaussian weights and standard Gaussian inputs (symmetric
    around zero, so each hidden unit is active with probability 1/2), masks
    the hidden layer with the realized activation pattern, and estimates the
    expected local tightness as a ratio of means.  Returned values are
    already divided by init_tightness(d1); the asymptotic target is sqrt(2).
    """
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    num = np.empty(samples)
    den = np.empty(samples)
    ratios = np.empty(samples)
    for i in range(samples):
        gen = rng.substream(i).generator()
        w1 = gen.standard_normal((d1, d0))
        w2 = gen.standard_normal((d2, d1))
        x = gen.standard_normal(d0)
        mask = (w1 @ x > 0.0).astype(np.float64)
        w1m = mask[:, np.newaxis] * w1
        optimal = np.abs(w2 @ w1m).sum(axis=1)
        layerwise = (np.abs(w2) * mask) @ np.abs(w1).sum(axis=1)
        num[i] = optimal.mean()
        den[i] = layerwise.mean()
        ratios[i] = float("nan") if np.all(layerwise == 0.0) else (optimal.mean() / layerwise.mean())
    tau_lin = init_tightness(d1)
    mc, stderr = _ratio_estimate(num, den)
    return InitTightnessEstimate(SQRT2, mc / tau_lin, stderr / tau_lin, samples, float(np.nanmean(ratios)) / tau_lin)
