"""The box (interval) abstract domain.

A box is an axis-aligned product of intervals stored as center and
nonnegative per-dimension radius; lower/upper bounds are derived views.
An affine map sends center c to W c + b and radius r to |W| r, and a ReLU
clamps lower and upper bounds independently.  Composing these per layer is
interval bound propagation (IBP); the resulting output box always contains
the true image of the input box, but is generally larger than the smallest
enclosing box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError, as_matrix, as_vector


@dataclass(frozen=True)
class Box:
    """Axis-aligned box: ``{x : |x - center| <= radius}`` per dimension."""

    center: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        c = as_vector(self.center, "center")
        r = as_vector(self.radius, "radius")
        if c.shape != r.shape:
            raise ShapeError(f"center {c.shape} vs radius {r.shape}")
        if np.any(r < 0):
            raise ValueError("radius must be nonnegative")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.radius

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.radius

    @classmethod
    def from_bounds(cls, lower, upper) -> "Box":
        lo = as_vector(lower, "lower")
        hi = as_vector(upper, "upper")
        if np.any(hi < lo):
            raise ValueError("upper must dominate lower")
        return cls((lo + hi) / 2.0, (hi - lo) / 2.0)

    @classmethod
    def around(cls, x, eps: float) -> "Box":
        """Uniform box of radius eps around a point."""
        x = as_vector(x, "x")
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        return cls(x, np.full_like(x, float(eps)))

    def contains(self, x, slack: float = 0.0) -> bool:
        x = as_vector(x, "x")
        return bool(np.all(np.abs(x - self.center) <= self.radius + slack))


def affine_transform(b: Box, w, bias) -> Box:
    """Exact box image of an affine map: center W c + bias, radius |W| r."""
    w = as_matrix(w, "w")
    bias = as_vector(bias, "bias")
    if w.shape[1] != b.dim:
        raise ShapeError(f"weight {w.shape} incompatible with box dim {b.dim}")
    if bias.shape[0] != w.shape[0]:
        raise ShapeError(f"bias {bias.shape} incompatible with weight {w.shape}")
    return Box(w @ b.center + bias, np.abs(w) @ b.radius)


def relu_transform(b: Box) -> Box:
    """Box image under ReLU: bounds are clamped at zero independently."""
    lo = np.maximum(b.lower, 0.0)
    hi = np.maximum(b.upper, 0.0)
    return Box((lo + hi) / 2.0, (hi - lo) / 2.0)
