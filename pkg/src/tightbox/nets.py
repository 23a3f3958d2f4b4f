"""Small ReLU networks: forward, IBP forward, and reverse-mode gradients.

Layers are plain dataclasses (affine, ReLU, 2-d convolution, flatten) chained
into a :class:`ReluNet`.  Two evaluation semantics share one backward engine:

* point semantics: ordinary evaluation of a single input (or a batch);
* box semantics: interval bound propagation, where an affine layer maps a
  radius r to |W| r, so gradients w.r.t. W pick up a sign(W) factor and the
  ReLU bound clamping differentiates lower/upper bounds separately.

Gradient conventions: the ReLU subgradient at exactly 0 is 0, and
d|w|/dw at w = 0 is 0 (both measure-zero choices that avoid spurious
updates).  All arrays are float64; batch variants take a leading axis.

Networks serialize to a small layer-tagged little-endian binary format
(magic ``TBX1``) with a bit-exact round trip, plus a plain-text export.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from math import prod

import numpy as np

from .boxes import Box
from .numerics import ShapeError, as_vector
from .rng import Rng

# ---------------------------------------------------------------------------
# layers


@dataclass
class Affine:
    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        if self.w.ndim != 2 or self.b.ndim != 1 or self.b.shape[0] != self.w.shape[0]:
            raise ShapeError(f"affine shapes {self.w.shape} / {self.b.shape}")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.b))):
            raise ValueError("affine parameters must be finite")


@dataclass
class Relu:
    pass


@dataclass
class Conv2d:
    kernel: np.ndarray  # (out_ch, in_ch, kh, kw)
    bias: np.ndarray  # (out_ch,)
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        self.kernel = np.ascontiguousarray(self.kernel, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.kernel.ndim != 4 or self.bias.shape != (self.kernel.shape[0],):
            raise ShapeError(f"conv shapes {self.kernel.shape} / {self.bias.shape}")
        if self.stride < 1 or self.padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")
        if not (np.all(np.isfinite(self.kernel)) and np.all(np.isfinite(self.bias))):
            raise ValueError("conv parameters must be finite")


@dataclass
class Flatten:
    pass


Layer = Affine | Relu | Conv2d | Flatten


def params_of(layer: Layer) -> tuple[np.ndarray, ...]:
    """Parameter arrays of a layer, in serialization order."""
    if isinstance(layer, Affine):
        return (layer.w, layer.b)
    if isinstance(layer, Conv2d):
        return (layer.kernel, layer.bias)
    return ()


def _conv_out_hw(layer: Conv2d, h: int, w: int) -> tuple[int, int]:
    kh, kw = layer.kernel.shape[2], layer.kernel.shape[3]
    ho = (h + 2 * layer.padding - kh) // layer.stride + 1
    wo = (w + 2 * layer.padding - kw) // layer.stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv kernel {kh}x{kw} too large for input {h}x{w}")
    return ho, wo


def _layer_out_shape(layer: Layer, shape: tuple[int, ...]) -> tuple[int, ...]:
    if isinstance(layer, Affine):
        if len(shape) != 1 or shape[0] != layer.w.shape[1]:
            raise ShapeError(f"affine expects ({layer.w.shape[1]},), got {shape}")
        return (layer.w.shape[0],)
    if isinstance(layer, Conv2d):
        if len(shape) != 3 or shape[0] != layer.kernel.shape[1]:
            raise ShapeError(f"conv expects (C,H,W) with C={layer.kernel.shape[1]}, got {shape}")
        ho, wo = _conv_out_hw(layer, shape[1], shape[2])
        return (layer.kernel.shape[0], ho, wo)
    if isinstance(layer, Flatten):
        return (prod(shape),)
    return shape  # Relu


@dataclass
class ReluNet:
    """Sequence of layers plus the (unbatched) input shape."""

    layers: list[Layer]
    input_shape: tuple[int, ...]

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        if not self.layers:
            raise ValueError("network needs at least one layer")
        self.shapes()  # validates the chain

    def shapes(self) -> list[tuple[int, ...]]:
        """Stage shapes from the input (index 0) to the output."""
        chain = [self.input_shape]
        for layer in self.layers:
            chain.append(_layer_out_shape(layer, chain[-1]))
        return chain

    @property
    def in_dim(self) -> int:
        return prod(self.input_shape)

    @property
    def out_dim(self) -> int:
        return prod(self.shapes()[-1])

    def copy(self) -> "ReluNet":
        layers: list[Layer] = []
        for layer in self.layers:
            if isinstance(layer, Affine):
                layers.append(Affine(layer.w.copy(), layer.b.copy()))
            elif isinstance(layer, Conv2d):
                layers.append(Conv2d(layer.kernel.copy(), layer.bias.copy(), layer.stride, layer.padding))
            elif isinstance(layer, Relu):
                layers.append(Relu())
            else:
                layers.append(Flatten())
        return ReluNet(layers, self.input_shape)

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.extend(params_of(layer))
        return out


@dataclass(frozen=True)
class Gradients:
    """Per-layer parameter gradients mirroring the network's shapes."""

    layers: tuple[tuple[np.ndarray, ...], ...]
    wrt_input: np.ndarray | None = None

    def arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for g in self.layers:
            out.extend(g)
        return out

    def flat(self) -> np.ndarray:
        arrs = self.arrays()
        if not arrs:
            return np.zeros(0)
        return np.concatenate([a.ravel() for a in arrs])


# ---------------------------------------------------------------------------
# im2col plumbing for convolutions


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    b, c, h, w = x.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((b, c, kh, kw, ho, wo), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(b, c * kh * kw, ho * wo), (ho, wo)


def _col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int, padding: int, ho: int, wo: int):
    b, c, h, w = x_shape
    cols = cols.reshape(b, c, kh, kw, ho, wo)
    xp = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    if padding:
        return xp[:, :, padding : padding + h, padding : padding + w]
    return xp


def _conv_apply(layer: Conv2d, x: np.ndarray, kernel: np.ndarray, with_bias: bool):
    f = kernel.shape[0]
    kh, kw = kernel.shape[2], kernel.shape[3]
    cols, (ho, wo) = _im2col(x, kh, kw, layer.stride, layer.padding)
    kmat = kernel.reshape(f, -1)
    y = np.einsum("fk,bkp->bfp", kmat, cols)
    if with_bias:
        y += layer.bias[np.newaxis, :, np.newaxis]
    return y.reshape(x.shape[0], f, ho, wo), cols, (ho, wo)


# ---------------------------------------------------------------------------
# point semantics


def forward_batch(net: ReluNet, x: np.ndarray) -> np.ndarray:
    """Evaluate a batch of flat inputs (B, in_dim) -> (B, out_dim)."""
    y, _ = _run_forward(net, x)
    return y


def forward(net: ReluNet, x) -> np.ndarray:
    """Evaluate one flat input vector; returns the flat output (logits)."""
    x = as_vector(x, "x")
    if x.shape[0] != net.in_dim:
        raise ShapeError(f"input dim {x.shape[0]}, net expects {net.in_dim}")
    return forward_batch(net, x[np.newaxis])[0]


def _run_forward(net: ReluNet, x: np.ndarray):
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeError(f"batch input must be (B, {net.in_dim}), got {x.shape}")
    cur = np.asarray(x, dtype=np.float64).reshape(x.shape[0], *net.input_shape)
    caches = []
    for layer in net.layers:
        if isinstance(layer, Affine):
            caches.append(cur)
            cur = cur @ layer.w.T + layer.b
        elif isinstance(layer, Relu):
            caches.append(cur)
            cur = np.maximum(cur, 0.0)
        elif isinstance(layer, Conv2d):
            y, cols, hw = _conv_apply(layer, cur, layer.kernel, with_bias=True)
            caches.append((cur.shape, cols, hw))
            cur = y
        else:  # Flatten
            caches.append(cur.shape)
            cur = cur.reshape(cur.shape[0], -1)
    return cur.reshape(cur.shape[0], -1), caches


def _run_backward(net: ReluNet, caches, gy: np.ndarray):
    shapes = net.shapes()
    grad = gy.reshape(gy.shape[0], *shapes[-1])
    layer_grads: list[tuple[np.ndarray, ...]] = [()] * len(net.layers)
    for idx in range(len(net.layers) - 1, -1, -1):
        layer, cache = net.layers[idx], caches[idx]
        if isinstance(layer, Affine):
            x = cache
            layer_grads[idx] = (grad.T @ x, grad.sum(axis=0))
            grad = grad @ layer.w
        elif isinstance(layer, Relu):
            grad = grad * (cache > 0.0)
        elif isinstance(layer, Conv2d):
            x_shape, cols, (ho, wo) = cache
            f = layer.kernel.shape[0]
            kh, kw = layer.kernel.shape[2], layer.kernel.shape[3]
            gflat = grad.reshape(grad.shape[0], f, ho * wo)
            gk = np.einsum("bfp,bkp->fk", gflat, cols).reshape(layer.kernel.shape)
            gb = gflat.sum(axis=(0, 2))
            layer_grads[idx] = (gk, gb)
            gcols = np.einsum("fk,bfp->bkp", layer.kernel.reshape(f, -1), gflat)
            grad = _col2im(gcols, x_shape, kh, kw, layer.stride, layer.padding, ho, wo)
        else:  # Flatten
            grad = grad.reshape(cache)
    return layer_grads, grad.reshape(grad.shape[0], -1)


def backward_point(net: ReluNet, x, upstream) -> Gradients:
    """Reverse-mode gradients of <upstream, f(x)> w.r.t. parameters and x."""
    x = as_vector(x, "x")
    upstream = as_vector(upstream, "upstream")
    _, caches = _run_forward(net, x[np.newaxis])
    layer_grads, gx = _run_backward(net, caches, upstream[np.newaxis])
    return Gradients(tuple(layer_grads), gx[0])


# ---------------------------------------------------------------------------
# box semantics (interval bound propagation)


@dataclass(frozen=True)
class PropagationTrace:
    """Per-stage boxes from the input box to the output box."""

    boxes: tuple[Box, ...]

    @property
    def output(self) -> Box:
        return self.boxes[-1]

    def __len__(self) -> int:
        return len(self.boxes)


def _run_ibp(net: ReluNet, c: np.ndarray, r: np.ndarray):
    cur_c = c.reshape(c.shape[0], *net.input_shape)
    cur_r = r.reshape(r.shape[0], *net.input_shape)
    stages = [(cur_c, cur_r)]
    caches = []
    for layer in net.layers:
        if isinstance(layer, Affine):
            caches.append((cur_c, cur_r))
            cur_c = cur_c @ layer.w.T + layer.b
            cur_r = cur_r @ np.abs(layer.w).T
        elif isinstance(layer, Relu):
            lo, hi = cur_c - cur_r, cur_c + cur_r
            caches.append((lo, hi))
            lo, hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
            cur_c, cur_r = (lo + hi) / 2.0, (hi - lo) / 2.0
        elif isinstance(layer, Conv2d):
            yc, ccols, hw = _conv_apply(layer, cur_c, layer.kernel, with_bias=True)
            yr, rcols, _ = _conv_apply(layer, cur_r, np.abs(layer.kernel), with_bias=False)
            caches.append((cur_c.shape, ccols, rcols, hw))
            cur_c, cur_r = yc, yr
        else:  # Flatten
            caches.append(cur_c.shape)
            cur_c = cur_c.reshape(cur_c.shape[0], -1)
            cur_r = cur_r.reshape(cur_r.shape[0], -1)
        stages.append((cur_c, cur_r))
    return stages, caches


def _run_ibp_backward(net: ReluNet, caches, gc: np.ndarray, gr: np.ndarray):
    shapes = net.shapes()
    gc = gc.reshape(gc.shape[0], *shapes[-1])
    gr = gr.reshape(gr.shape[0], *shapes[-1])
    layer_grads: list[tuple[np.ndarray, ...]] = [()] * len(net.layers)
    for idx in range(len(net.layers) - 1, -1, -1):
        layer, cache = net.layers[idx], caches[idx]
        if isinstance(layer, Affine):
            c_in, r_in = cache
            gw = gc.T @ c_in + np.sign(layer.w) * (gr.T @ r_in)
            gb = gc.sum(axis=0)
            layer_grads[idx] = (gw, gb)
            gc, gr = gc @ layer.w, gr @ np.abs(layer.w)
        elif isinstance(layer, Relu):
            lo, hi = cache
            glo = 0.5 * (gc - gr) * (lo > 0.0)
            ghi = 0.5 * (gc + gr) * (hi > 0.0)
            gc, gr = glo + ghi, ghi - glo
        elif isinstance(layer, Conv2d):
            x_shape, ccols, rcols, (ho, wo) = cache
            f = layer.kernel.shape[0]
            kh, kw = layer.kernel.shape[2], layer.kernel.shape[3]
            gcf = gc.reshape(gc.shape[0], f, ho * wo)
            grf = gr.reshape(gr.shape[0], f, ho * wo)
            gk = np.einsum("bfp,bkp->fk", gcf, ccols) + np.sign(
                layer.kernel.reshape(f, -1)
            ) * np.einsum("bfp,bkp->fk", grf, rcols)
            layer_grads[idx] = (gk.reshape(layer.kernel.shape), gcf.sum(axis=(0, 2)))
            gccols = np.einsum("fk,bfp->bkp", layer.kernel.reshape(f, -1), gcf)
            grcols = np.einsum("fk,bfp->bkp", np.abs(layer.kernel.reshape(f, -1)), grf)
            gc = _col2im(gccols, x_shape, kh, kw, layer.stride, layer.padding, ho, wo)
            gr = _col2im(grcols, x_shape, kh, kw, layer.stride, layer.padding, ho, wo)
        else:  # Flatten
            gc = gc.reshape(cache)
            gr = gr.reshape(cache)
    b = gc.shape[0]
    return layer_grads, gc.reshape(b, -1), gr.reshape(b, -1)


def ibp_forward(net: ReluNet, box: Box) -> PropagationTrace:
    """Propagate a box through every layer; last trace element is the output."""
    if box.dim != net.in_dim:
        raise ShapeError(f"box dim {box.dim}, net expects {net.in_dim}")
    stages, _ = _run_ibp(net, box.center[np.newaxis], box.radius[np.newaxis])
    flat = [Box(c.reshape(-1), r.reshape(-1)) for c, r in stages]
    return PropagationTrace(tuple(flat))


def ibp_bounds_batch(net: ReluNet, centers: np.ndarray, radii: np.ndarray):
    """Output-box centers and radii for a batch of input boxes."""
    stages, _ = _run_ibp(net, centers, radii)
    c, r = stages[-1]
    return c.reshape(c.shape[0], -1), r.reshape(r.shape[0], -1)


def backward_box(net: ReluNet, box: Box, upstream: tuple) -> Gradients:
    """Reverse-mode gradients through the IBP graph.

    ``upstream`` is a (grad wrt output center, grad wrt output radius) pair;
    the result also carries gradients w.r.t. the input center/radius as a
    stacked (2, in_dim) array in ``wrt_input``.
    """
    gc, gr = (as_vector(u, "upstream") for u in upstream)
    _, caches = _run_ibp(net, box.center[np.newaxis], box.radius[np.newaxis])
    layer_grads, gc0, gr0 = _run_ibp_backward(net, caches, gc[np.newaxis], gr[np.newaxis])
    return Gradients(tuple(layer_grads), np.stack([gc0[0], gr0[0]]))


# ---------------------------------------------------------------------------
# explicit-matrix views (used by tests and tightness evaluation)


def layer_matrix(layer: Layer, in_shape: tuple[int, ...]) -> np.ndarray | None:
    """Dense matrix of a linear layer acting on flattened inputs.

    Returns None for ReLU (nonlinear) and Flatten (identity in flat view).
    Conv layers are expanded by pushing the identity basis through the
    (bias-free) convolution, so the result is correct by construction.
    """
    if isinstance(layer, Affine):
        return layer.w
    if isinstance(layer, Conv2d):
        d = prod(in_shape)
        basis = np.eye(d).reshape(d, *in_shape)
        out, _, _ = _conv_apply(layer, basis, layer.kernel, with_bias=False)
        return out.reshape(d, -1).T
    return None


def relu_premasks_batch(net: ReluNet, xs: np.ndarray) -> list[np.ndarray]:
    """Activation pattern per ReLU layer for a batch, flattened to (B, d).

    Pre-activations of exactly 0 count as off.
    """
    _, caches = _run_forward(net, xs)
    masks = []
    for layer, cache in zip(net.layers, caches):
        if isinstance(layer, Relu):
            pre = cache.reshape(cache.shape[0], -1)
            masks.append((pre > 0.0).astype(np.float64))
    return masks


def forward_stages(net: ReluNet, x) -> list[np.ndarray]:
    """Flat values entering each layer plus the final output."""
    x = as_vector(x, "x")
    cur = x.reshape(1, *net.input_shape)
    stages = [cur.reshape(-1)]
    for layer in net.layers:
        if isinstance(layer, Affine):
            cur = cur @ layer.w.T + layer.b
        elif isinstance(layer, Relu):
            cur = np.maximum(cur, 0.0)
        elif isinstance(layer, Conv2d):
            cur, _, _ = _conv_apply(layer, cur, layer.kernel, with_bias=True)
        else:
            cur = cur.reshape(1, -1)
        stages.append(cur.reshape(-1))
    return stages


# ---------------------------------------------------------------------------
# constructors


def build_mlp(rng: Rng, in_dim: int, hidden: list[int], classes: int) -> ReluNet:
    """Fully connected ReLU classifier with Gaussian fan-in init.

    Weights are N(0, 2/fan_in), biases zero.
    """
    dims = [in_dim, *hidden, classes]
    gen = rng.generator()
    layers: list[Layer] = []
    for i in range(len(dims) - 1):
        if i > 0:
            layers.append(Relu())
        sigma = np.sqrt(2.0 / dims[i])
        layers.append(Affine(sigma * gen.standard_normal((dims[i + 1], dims[i])), np.zeros(dims[i + 1])))
    return ReluNet(layers, (in_dim,))


def build_cnn3(rng: Rng, in_shape: tuple[int, int, int], classes: int) -> ReluNet:
    """Three-layer convolutional classifier for small images.

    conv(8, 4x4, stride 2, pad 1) - ReLU - conv(16, 4x4, stride 2, pad 1) -
    ReLU - flatten - affine.  Gaussian fan-in init throughout.
    """
    gen = rng.generator()

    def conv(out_ch, in_ch):
        sigma = np.sqrt(2.0 / (in_ch * 16))
        return Conv2d(sigma * gen.standard_normal((out_ch, in_ch, 4, 4)), np.zeros(out_ch), stride=2, padding=1)

    c, h, w = in_shape
    layers: list[Layer] = [conv(8, c), Relu(), conv(16, 8), Relu(), Flatten()]
    flat = prod(_layer_out_shape(layers[2], _layer_out_shape(layers[0], in_shape)))
    sigma = np.sqrt(2.0 / flat)
    layers.append(Affine(sigma * gen.standard_normal((classes, flat)), np.zeros(classes)))
    return ReluNet(layers, in_shape)


# ---------------------------------------------------------------------------
# serialization: magic "TBX1", little-endian, layer-tagged records

_MAGIC = b"TBX1"
_FORMAT_VERSION = 1
_TAG_AFFINE, _TAG_RELU, _TAG_CONV, _TAG_FLATTEN = 1, 2, 3, 4


class NetFormatError(ValueError):
    """Malformed network file."""


def _write_array(buf, a: np.ndarray):
    buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_array(buf, shape) -> np.ndarray:
    n = prod(shape)
    raw = buf.read(8 * n)
    if len(raw) != 8 * n:
        raise NetFormatError(f"truncated parameter block at offset {buf.tell()}")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()


def dump_net(net: ReluNet) -> bytes:
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<II", _FORMAT_VERSION, len(net.input_shape)))
    buf.write(struct.pack(f"<{len(net.input_shape)}I", *net.input_shape))
    buf.write(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        if isinstance(layer, Affine):
            buf.write(struct.pack("<BII", _TAG_AFFINE, *layer.w.shape))
            _write_array(buf, layer.w)
            _write_array(buf, layer.b)
        elif isinstance(layer, Relu):
            buf.write(struct.pack("<B", _TAG_RELU))
        elif isinstance(layer, Conv2d):
            buf.write(struct.pack("<BIIIIII", _TAG_CONV, *layer.kernel.shape, layer.stride, layer.padding))
            _write_array(buf, layer.kernel)
            _write_array(buf, layer.bias)
        else:
            buf.write(struct.pack("<B", _TAG_FLATTEN))
    return buf.getvalue()


def load_net_bytes(data: bytes) -> ReluNet:
    buf = io.BytesIO(data)
    if buf.read(4) != _MAGIC:
        raise NetFormatError("bad magic, expected TBX1")
    version, ndim = struct.unpack("<II", buf.read(8))
    if version != _FORMAT_VERSION:
        raise NetFormatError(f"unsupported format version {version}")
    input_shape = struct.unpack(f"<{ndim}I", buf.read(4 * ndim))
    (n_layers,) = struct.unpack("<I", buf.read(4))
    layers: list[Layer] = []
    for _ in range(n_layers):
        tag_raw = buf.read(1)
        if not tag_raw:
            raise NetFormatError(f"truncated layer record at offset {buf.tell()}")
        tag = tag_raw[0]
        if tag == _TAG_AFFINE:
            out_d, in_d = struct.unpack("<II", buf.read(8))
            w = _read_array(buf, (out_d, in_d))
            b = _read_array(buf, (out_d,))
            layers.append(Affine(w, b))
        elif tag == _TAG_RELU:
            layers.append(Relu())
        elif tag == _TAG_CONV:
            oc, ic, kh, kw, stride, padding = struct.unpack("<IIIIII", buf.read(24))
            kernel = _read_array(buf, (oc, ic, kh, kw))
            bias = _read_array(buf, (oc,))
            layers.append(Conv2d(kernel, bias, stride, padding))
        elif tag == _TAG_FLATTEN:
            layers.append(Flatten())
        else:
            raise NetFormatError(f"unknown layer tag {tag} at offset {buf.tell()}")
    if buf.read(1):
        raise NetFormatError("trailing bytes after final layer")
    return ReluNet(layers, input_shape)


def save_net(net: ReluNet, path):
    with open(path, "wb") as fh:
        fh.write(dump_net(net))


def load_net(path) -> ReluNet:
    with open(path, "rb") as fh:
        return load_net_bytes(fh.read())


def export_text(net: ReluNet) -> str:
    """Human-readable dump; parameters printed with full precision."""
    lines = [f"tightbox net v{_FORMAT_VERSION}", f"input_shape {net.input_shape}"]
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Affine):
            lines.append(f"layer {i} affine {layer.w.shape[0]}x{layer.w.shape[1]}")
            for row in layer.w:
                lines.append("  w " + " ".join(f"{v:.17g}" for v in row))
            lines.append("  b " + " ".join(f"{v:.17g}" for v in layer.b))
        elif isinstance(layer, Relu):
            lines.append(f"layer {i} relu")
        elif isinstance(layer, Conv2d):
            oc, ic, kh, kw = layer.kernel.shape
            lines.append(f"layer {i} conv2d {oc}x{ic}x{kh}x{kw} stride {layer.stride} pad {layer.padding}")
            lines.append("  kernel " + " ".join(f"{v:.17g}" for v in layer.kernel.ravel()))
            lines.append("  bias " + " ".join(f"{v:.17g}" for v in layer.bias))
        else:
            lines.append(f"layer {i} flatten")
    return "\n".join(lines) + "\n"
