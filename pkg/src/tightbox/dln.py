"""Deep linear networks: optimal vs layerwise box propagation and tightness.

For a weight chain W(L)...W(1) the smallest box enclosing the image of a box
with radius eps has radius |W(L)...W(1)| eps, while propagating layer by
layer (IBP) gives (|W(L)|...|W(1)|) eps.  Their elementwise ratio tau in
[0, 1] is the propagation tightness; tau = 1 for every input box is
propagation invariance (PI), which for two layers holds exactly when, for
each output/input pair (i, j), all the products W2[i,k] * W1[k,j] share one
sign.  ReLU networks get a local version of tau by freezing the activation
pattern at an input and analysing the masked linear chain, which is the
exact limit of the finite-box ratio as the box radius goes to zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .boxes import Box
from .nets import (
    Affine,
    Conv2d,
    Relu,
    ReluNet,
    forward_batch,
    forward_stages,
    ibp_forward,
    layer_matrix,
    relu_premasks_batch,
)
from .numerics import ShapeError, as_matrix, as_vector
from .rng import Rng


@dataclass(frozen=True)
class Dln:
    """Bias-free linear chain; ``weights[k+1]`` consumes ``weights[k]`` outputs."""

    weights: tuple[np.ndarray, ...]

    def __post_init__(self):
        ws = tuple(as_matrix(w, f"weights[{i}]") for i, w in enumerate(self.weights))
        if not ws:
            raise ValueError("a DLN needs at least one layer")
        for k in range(len(ws) - 1):
            if ws[k + 1].shape[1] != ws[k].shape[0]:
                raise ShapeError(f"layer {k + 1} expects {ws[k].shape[0]} inputs, got {ws[k + 1].shape[1]}")
        object.__setattr__(self, "weights", ws)

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]


@dataclass(frozen=True)
class TightnessReport:
    """Optimal and layerwise radii per output dimension plus their ratio.

    Dimensions where both radii vanish are flagged degenerate and report
    tau = 1 (the two approximations coincide there).
    """

    optimal_radius: np.ndarray
    layerwise_radius: np.ndarray
    tau: np.ndarray
    mean_tau: float
    degenerate: np.ndarray

    @property
    def all_degenerate(self) -> bool:
        return bool(self.degenerate.all())


def _make_report(optimal: np.ndarray, layerwise: np.ndarray) -> TightnessReport:
    degenerate = layerwise == 0.0
    tau = np.ones_like(layerwise)
    np.divide(optimal, layerwise, out=tau, where=~degenerate)
    return TightnessReport(optimal, layerwise, tau, float(tau.mean()), degenerate)


def collapse(f: Dln) -> np.ndarray:
    """The single matrix W(L)...W(1) the chain computes."""
    return reduce(lambda acc, w: w @ acc, f.weights[1:], f.weights[0])


def optimal_radius(f: Dln, eps) -> np.ndarray:
    """Radius of the smallest output box for input radius eps: |W(L)...W(1)| eps."""
    eps = _check_eps(f, eps)
    return np.abs(collapse(f)) @ eps


def layerwise_radius(f: Dln, eps) -> np.ndarray:
    """Output radius of layer-by-layer (IBP) propagation: (|W(L)|...|W(1)|) eps."""
    eps = _check_eps(f, eps)
    r = eps
    for w in f.weights:
        r = np.abs(w) @ r
    return r


def _check_eps(f: Dln, eps) -> np.ndarray:
    eps = as_vector(eps, "eps")
    if eps.shape[0] != f.in_dim:
        raise ShapeError(f"eps dim {eps.shape[0]}, DLN expects {f.in_dim}")
    if np.any(eps < 0):
        raise ValueError("eps must be nonnegative")
    return eps


def global_tightness(f: Dln, eps) -> TightnessReport:
    """Per-output tau = optimal radius / layerwise radius, and its mean."""
    return _make_report(optimal_radius(f, eps), layerwise_radius(f, eps))


# ---------------------------------------------------------------------------
# propagation invariance


@dataclass(frozen=True)
class PiCheck:
    """Sign-alignment verdict per (output, input) pair plus the conjunction."""

    per_pair: np.ndarray  # (out_dim, in_dim) bool
    overall: bool


def is_propagation_invariant_2layer(w2, w1, tol: float = 1e-12) -> PiCheck:
    """Exact PI test for a two-layer chain via sign alignment of products.

    Pair (i, j) passes iff the products w2[i, k] * w1[k, j] over k never mix
    strict signs.  Products at most ``tol`` times the largest magnitude in
    their pair count as zero, hence compatible with either sign.
    """
    w2 = as_matrix(w2, "w2")
    w1 = as_matrix(w1, "w1")
    if w2.shape[1] != w1.shape[0]:
        raise ShapeError(f"cannot chain {w2.shape} after {w1.shape}")
    prods = w2[:, :, np.newaxis] * w1[np.newaxis, :, :]  # (out, k, in)
    scale = np.abs(prods).max(axis=1, keepdims=True)
    cutoff = tol * scale
    has_pos = np.any(prods > cutoff, axis=1)
    has_neg = np.any(prods < -cutoff, axis=1)
    per_pair = ~(has_pos & has_neg)
    return PiCheck(per_pair, bool(per_pair.all()))


def non_invariance_witness(m) -> tuple[int, int, int, int] | None:
    """Indices (i, i', j, j') of a 2x2 block with negative entry product.

    Such a block rules out propagation invariance of any factorization whose
    relevant factor rows/columns are non-zero; returns None when every block
    product is nonnegative.  Advisory when the factors are unknown.
    """
    m = as_matrix(m, "m")
    s = np.sign(m)
    rows, cols = m.shape
    for i in range(rows):
        for ip in range(i + 1, rows):
            pair = s[i] * s[ip]  # per-column product of the two row signs
            pos = np.flatnonzero(pair > 0)
            neg = np.flatnonzero(pair < 0)
            if pos.size and neg.size:
                j, jp = int(pos[0]), int(neg[0])
                if j > jp:
                    j, jp = jp, j
                return (i, ip, j, jp)
    return None


def synthesize_pi_signs(row_signs, col_signs) -> np.ndarray:
    """Full sign matrix extending a first row and column, PI-compatibly.

    Every 2x2 block of a PI product matrix must have nonnegative entry
    product, which forces sign[i+1, j+1] = sign[i, j] * sign[i, j+1] *
    sign[i+1, j]; filling recursively from the given border yields the unique
    extension.  The shared corner entry must agree.
    """
    row = np.asarray(row_signs, dtype=np.float64)
    col = np.asarray(col_signs, dtype=np.float64)
    if row.ndim != 1 or col.ndim != 1:
        raise ShapeError("row_signs and col_signs must be 1-d")
    if not (np.all(np.abs(row) == 1.0) and np.all(np.abs(col) == 1.0)):
        raise ValueError("signs must be +-1")
    if row[0] != col[0]:
        raise ValueError("row_signs[0] and col_signs[0] must agree (shared corner)")
    s = np.empty((col.shape[0], row.shape[0]))
    s[0, :] = row
    s[:, 0] = col
    for i in range(1, s.shape[0]):
        for j in range(1, s.shape[1]):
            s[i, j] = s[i - 1, j - 1] * s[i - 1, j] * s[i, j - 1]
    return s


def random_pi_dln(rng: Rng, d2: int, d1: int, d0: int) -> Dln:
    """Random two-layer chain that is PI by construction.

    Magnitudes are uniform in [0.5, 1.5]; signs follow a rank-one pattern
    (output signs times input signs), so every product pair is sign-aligned.
    """
    gen = rng.generator()
    out_signs = np.where(gen.random(d2) < 0.5, -1.0, 1.0)
    in_signs = np.where(gen.random(d0) < 0.5, -1.0, 1.0)
    w2 = out_signs[:, np.newaxis] * gen.uniform(0.5, 1.5, (d2, d1))
    w1 = in_signs[np.newaxis, :] * gen.uniform(0.5, 1.5, (d1, d0))
    return Dln((w1, w2))


def random_non_pi_dln(rng: Rng, d2: int, d1: int, d0: int) -> Dln:
    """Random two-layer chain with a guaranteed sign-mixed product pair.

    Requires d1 >= 2; entries have magnitude in [0.5, 1.5] so the resulting
    tightness gap is far above numerical noise.
    """
    if d1 < 2:
        raise ValueError("need at least two inner units to mix signs")
    gen = rng.generator()
    w2 = gen.uniform(0.5, 1.5, (d2, d1)) * np.where(gen.random((d2, d1)) < 0.5, -1.0, 1.0)
    w1 = gen.uniform(0.5, 1.5, (d1, d0)) * np.where(gen.random((d1, d0)) < 0.5, -1.0, 1.0)
    # force products w2[0,0]*w1[0,0] > 0 > w2[0,1]*w1[1,0]
    w2[0, 0] = abs(w2[0, 0])
    w1[0, 0] = abs(w1[0, 0])
    w2[0, 1] = abs(w2[0, 1])
    w1[1, 0] = -abs(w1[1, 0])
    return Dln((w1, w2))


# ---------------------------------------------------------------------------
# ReLU networks: local tightness and a finite-radius oracle


@dataclass(frozen=True)
class ActivationPattern:
    """Binary on/off vector per ReLU layer; pre-activations of exactly 0 map to off."""

    masks: tuple[np.ndarray, ...]


def activation_pattern(net: ReluNet, x) -> ActivationPattern:
    stages = forward_stages(net, x)
    masks = [
        (stages[i] > 0.0).astype(np.float64)
        for i, layer in enumerate(net.layers)
        if isinstance(layer, Relu)
    ]
    return ActivationPattern(tuple(masks))


def masked_linear_chain(net: ReluNet, x) -> Dln:
    """Linear chain equivalent to the net at x's activation pattern.

    Each linear layer's explicit matrix has the rows of the following ReLU's
    off-neurons zeroed; biases are dropped (radii do not depend on them).
    """
    shapes = net.shapes()
    stages = forward_stages(net, x)
    mats: list[np.ndarray] = []
    for i, layer in enumerate(net.layers):
        if isinstance(layer, (Affine, Conv2d)):
            mats.append(layer_matrix(layer, shapes[i]))
        elif isinstance(layer, Relu):
            if not mats:
                raise ShapeError("ReLU before any linear layer is unsupported")
            mask = (stages[i] > 0.0).astype(np.float64)
            mats[-1] = mask[:, np.newaxis] * mats[-1]
        # Flatten: identity in the flat view
    if not mats:
        raise ShapeError("network has no linear layers")
    return Dln(tuple(mats))


def local_tightness(net: ReluNet, x) -> TightnessReport:
    """Tightness of the net at x in the zero-radius limit.

    Freezes the activation pattern reached from x, then compares optimal and
    layerwise radii of the masked linear chain at unit input radius.  A
    network whose pattern kills every path reports all dimensions degenerate.
    """
    chain = masked_linear_chain(net, x)
    ones = np.ones(chain.in_dim)
    return _make_report(optimal_radius(chain, ones), layerwise_radius(chain, ones))


def local_tightness_batch(net: ReluNet, xs: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Mean local tightness per sample for a batch of flat inputs.

    Equivalent to calling :func:`local_tightness` per row but evaluated with
    shared explicit layer matrices and batched chain products.  Output-
    dimension pairs with zero layerwise radius count as tau = 1, matching
    the per-sample report.
    """
    xs = np.asarray(xs, dtype=np.float64)
    shapes = net.shapes()
    mats: list[np.ndarray] = []
    mask_slot: list[int | None] = []  # index into the premask list, per matrix
    n_relu = 0
    for i, layer in enumerate(net.layers):
        if isinstance(layer, (Affine, Conv2d)):
            mats.append(layer_matrix(layer, shapes[i]))
            mask_slot.append(None)
        elif isinstance(layer, Relu):
            if not mats:
                raise ShapeError("ReLU before any linear layer is unsupported")
            mask_slot[-1] = n_relu
            n_relu += 1
    if not mats:
        raise ShapeError("network has no linear layers")
    out = np.empty(xs.shape[0])
    for start in range(0, xs.shape[0], chunk):
        batch = xs[start : start + chunk]
        masks = relu_premasks_batch(net, batch)
        prod = np.broadcast_to(mats[-1], (batch.shape[0], *mats[-1].shape)).copy()
        if mask_slot[-1] is not None:
            # a ReLU after the final linear layer masks that layer's rows
            prod = prod * masks[mask_slot[-1]][:, :, np.newaxis]
        prod_abs = np.abs(prod)
        for k in range(len(mats) - 2, -1, -1):
            w = mats[k]
            if mask_slot[k] is not None:
                m = masks[mask_slot[k]][:, np.newaxis, :]
                prod = (prod * m) @ w
                prod_abs = (prod_abs * m) @ np.abs(w)
            else:
                prod = prod @ w
                prod_abs = prod_abs @ np.abs(w)
        num = np.abs(prod).sum(axis=2)
        den = prod_abs.sum(axis=2)
        tau = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 1.0)
        out[start : start + chunk] = tau.mean(axis=1)
    return out


def finite_eps_tightness_oracle(net: ReluNet, x, eps: float, grid_points: int) -> np.ndarray:
    """Sampling lower bound on the true per-dimension tightness at radius eps.

    Evaluates the network on a dense grid over the input box (all corners
    included), takes per-dimension output ranges as a lower bound on the
    optimal radius, and divides by the IBP radius.  Refines monotonically
    whenever the new grid contains the old one (e.g. n -> 2n - 1).  Cost is
    grid_points ** dim, so inputs are capped at 3 dimensions.
    """
    x = as_vector(x, "x")
    if x.shape[0] > 3:
        raise ValueError("grid oracle supports at most 3 input dimensions")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if grid_points < 2:
        raise ValueError("need at least 2 grid points per dimension")
    axes = [np.linspace(v - eps, v + eps, grid_points) for v in x]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, x.shape[0])
    corners = np.stack(np.meshgrid(*[(v - eps, v + eps) for v in x], indexing="ij"), axis=-1).reshape(-1, x.shape[0])
    points = np.vstack([mesh, corners])
    outputs = forward_batch(net, points)
    est_radius = (outputs.max(axis=0) - outputs.min(axis=0)) / 2.0
    ibp_radius = ibp_forward(net, Box.around(x, eps)).output.radius
    report = _make_report(est_radius, ibp_radius)
    return report.tau
