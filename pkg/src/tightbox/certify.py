"""Robustness certification from output-box bounds on logit differences.

A classifier is robust on an input box exactly when every logit difference
y_i - y_target stays negative over the box.  Bounding each difference jointly
is tighter than subtracting independent interval bounds, so the final affine
layer is replaced ("elided") by rows W_i - W_t and biases b_i - b_t before
the last propagation step.  Certification then checks that all elided upper
bounds are strictly below zero; a tie at exactly zero does not certify.
"""

from __future__ import annotations

import numpy as np

from .boxes import Box
from .nets import Affine, ReluNet, _run_ibp, forward_batch
from .numerics import ShapeError, as_vector


def elision_selector(classes: int, target: int) -> np.ndarray:
    """(classes-1, classes) matrix mapping logits to differences y_i - y_t.

    Rows keep the ascending order of the non-target classes.
    """
    if not 0 <= target < classes:
        raise ValueError(f"target {target} out of range for {classes} classes")
    s = np.zeros((classes - 1, classes))
    others = [i for i in range(classes) if i != target]
    for row, i in enumerate(others):
        s[row, i] = 1.0
        s[row, target] = -1.0
    return s


def elide_last_affine(net: ReluNet, target: int) -> ReluNet:
    """Network computing logit differences instead of logits.

    The final layer must be affine; its rows become W_i - W_t (same for the
    bias), dropping the target row entirely.
    """
    last = net.layers[-1]
    if not isinstance(last, Affine):
        raise ShapeError("elision requires the network to end with an affine layer")
    s = elision_selector(last.w.shape[0], target)
    elided = Affine(s @ last.w, s @ last.b)
    return ReluNet([*net.layers[:-1], elided], net.input_shape)


def logit_diff_upper(net: ReluNet, box: Box, target: int) -> np.ndarray:
    """Upper bounds on y_i - y_target for all i != target over the box."""
    elided = elide_last_affine(net, target)
    stages, _ = _run_ibp(elided, box.center[np.newaxis], box.radius[np.newaxis])
    c, r = stages[-1]
    return (c + r)[0]


def certify(net: ReluNet, x, eps: float, target: int) -> bool:
    """True iff the box of radius eps around x is certified for the target.

    Strict inequality: an upper bound of exactly 0 is not certified.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    x = as_vector(x, "x")
    bounds = logit_diff_upper(net, Box.around(x, eps), target)
    return bool(np.all(bounds < 0.0))


def logit_diff_upper_batch(net: ReluNet, centers: np.ndarray, radii: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Elided upper bounds for a batch, (B, classes-1).

    Samples are grouped by target class so each group shares one elided final
    layer; all shared layers are propagated once for the whole batch.
    """
    last = net.layers[-1]
    if not isinstance(last, Affine):
        raise ShapeError("elision requires the network to end with an affine layer")
    classes = last.w.shape[0]
    trunk = ReluNet(net.layers[:-1], net.input_shape) if len(net.layers) > 1 else None
    if trunk is not None:
        stages, _ = _run_ibp(trunk, centers, radii)
        c, r = stages[-1]
        c, r = c.reshape(c.shape[0], -1), r.reshape(r.shape[0], -1)
    else:
        c, r = centers, radii
    out = np.empty((centers.shape[0], classes - 1))
    targets = np.asarray(targets)
    for t in np.unique(targets):
        s = elision_selector(classes, int(t))
        w_e, b_e = s @ last.w, s @ last.b
        mask = targets == t
        out[mask] = c[mask] @ w_e.T + b_e + r[mask] @ np.abs(w_e).T
    return out


def certify_batch(net: ReluNet, xs: np.ndarray, eps: float, targets: np.ndarray) -> np.ndarray:
    """Boolean mask of certified samples for uniform radius eps."""
    radii = np.full_like(xs, float(eps))
    bounds = logit_diff_upper_batch(net, xs, radii, targets)
    return np.all(bounds < 0.0, axis=1)


def accuracy(net: ReluNet, xs: np.ndarray, targets: np.ndarray) -> float:
    """Fraction of samples whose argmax logit matches the target."""
    preds = np.argmax(forward_batch(net, xs), axis=1)
    return float(np.mean(preds == np.asarray(targets)))
