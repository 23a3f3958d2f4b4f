"""Desk-scale certified training: plain, IBP, PGD, and SABR objectives.

All methods minimize a cross-entropy built from logit differences,
L(y, t) = ln(1 + sum_{i != t} exp(y_i - y_t)); they differ in which logit
differences they use:

* STD: the clean forward pass;
* IBP: elided interval upper bounds over the full eps-box (a sound upper
  bound on the worst-case loss);
* PGD: the forward pass at an adversarial point found by projected
  sign-gradient ascent inside the eps-ball;
* SABR: interval upper bounds over a small box of radius lambda * eps
  centered at an adversarially chosen point inside the eps-ball, recovering
  IBP at lambda = 1 and PGD at lambda = 0.

The loop is minibatch Adam (or plain SGD) with a clean warmup epoch, a
linear eps ramp, stepwise learning-rate decay, and a global L2 gradient
clip; every random choice draws from substreams of the configured seed, so a
fixed config reproduces bit-identical runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .certify import accuracy, certify_batch, elision_selector
from .datasets import DatasetHandle
from .dln import Dln, local_tightness_batch
from .nets import (
    Affine,
    Gradients,
    ReluNet,
    _run_backward,
    _run_forward,
    _run_ibp,
    _run_ibp_backward,
    forward_batch,
)
from .numerics import as_vector
from .rng import Rng

METHODS = ("STD", "IBP", "PGD", "SABR")


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    method: str
    eps_target: float = 0.0
    sabr_lambda: float | None = None
    epochs: int = 10
    batch_size: int = 128
    lr: float = 5e-3
    lr_decay_epochs: tuple[int, ...] = ()
    lr_decay_factor: float = 0.2
    optimizer: str = "adam"  # "adam" or "sgd"; both are deterministic
    grad_clip_l2: float = 10.0
    warmup_epochs: int = 1  # clean-CE epochs before the eps ramp starts
    anneal_epochs: int = 4
    pgd_steps: int = 8
    pgd_step_size: float | None = None  # defaults to eps / 4
    pgd_restarts: int = 1
    seed: int = 0
    eval_subset: int = 512  # per-epoch metric subsample; 0 means the full set

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.method == "SABR":
            if self.sabr_lambda is None or not 0.0 <= self.sabr_lambda <= 1.0:
                raise ValueError("SABR requires sabr_lambda in [0, 1]")
        elif self.sabr_lambda is not None:
            raise ValueError("sabr_lambda is only meaningful for SABR")
        if self.eps_target < 0:
            raise ValueError("eps_target must be nonnegative")
        if self.eps_target == 0.0 and self.method != "STD":
            raise ValueError("eps_target = 0 is only permitted for STD")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


def digit_recipe(method: str, eps: float, seed: int = 0, sabr_lambda: float | None = None) -> TrainConfig:
    """Desk-scale recipe for the 28x28 digit experiments (10 epochs, Adam).

    Small batches buy enough optimizer steps for certified objectives within
    the 10-epoch budget; the radius ramps over 5 epochs after one clean
    warmup epoch, with late learning-rate decays.
    """
    return TrainConfig(
        method=method,
        eps_target=eps,
        sabr_lambda=sabr_lambda,
        epochs=10,
        batch_size=32,
        lr=5e-3,
        lr_decay_epochs=(8, 9),
        warmup_epochs=1,
        anneal_epochs=5,
        seed=seed,
    )


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    std_acc: float
    cert_acc: float
    mean_tightness: float


@dataclass(frozen=True)
class TrainReport:
    config: TrainConfig
    epochs: tuple[EpochMetrics, ...]
    net: ReluNet


# ---------------------------------------------------------------------------
# losses


def loss_ce(logits, target: int) -> tuple[float, np.ndarray]:
    """Cross-entropy on logit differences and its gradient w.r.t. the logits.

    Evaluated as logsumexp(y) - y_t, which is shift-stable.
    """
    logits = as_vector(logits, "logits")
    if not 0 <= target < logits.shape[0]:
        raise ValueError(f"target {target} out of range")
    m = logits.max()
    z = np.exp(logits - m)
    total = z.sum()
    loss = math.log(total) + m - logits[target]
    grad = z / total
    grad[target] -= 1.0
    return float(loss), grad


def _ce_batch(logits: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample CE losses and gradients for (B, c) logits."""
    m = logits.max(axis=1, keepdims=True)
    z = np.exp(logits - m)
    total = z.sum(axis=1, keepdims=True)
    idx = np.arange(logits.shape[0])
    losses = np.log(total[:, 0]) + m[:, 0] - logits[idx, targets]
    grads = z / total
    grads[idx, targets] -= 1.0
    return losses, grads


def _diff_ce(upper: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """CE over logit-difference upper bounds with the target slot fixed at 0.

    ``upper`` is (B, c-1); returns per-sample losses and d loss / d upper.
    """
    m = np.maximum(upper.max(axis=1, keepdims=True), 0.0)
    z = np.exp(upper - m)
    total = np.exp(-m[:, 0]) + z.sum(axis=1)
    losses = np.log(total) + m[:, 0]
    grads = z / total[:, np.newaxis]
    return losses, grads


def _robust_ce_batch(net: ReluNet, xs: np.ndarray, radii: np.ndarray, targets: np.ndarray):
    """Mean robust CE over a batch plus summed parameter gradients.

    The trunk (all layers but the last affine) is propagated once for the
    whole batch; samples are grouped by target class for the elided final
    layer, and trunk gradients flow back in a single reverse pass.
    """
    last = net.layers[-1]
    if not isinstance(last, Affine):
        raise ValueError("robust CE requires a final affine layer")
    classes = last.w.shape[0]
    b = xs.shape[0]
    trunk = ReluNet(net.layers[:-1], net.input_shape) if len(net.layers) > 1 else None
    if trunk is not None:
        stages, caches = _run_ibp(trunk, xs, radii)
        cp, rp = stages[-1]
        cp, rp = cp.reshape(b, -1), rp.reshape(b, -1)
    else:
        cp, rp = xs, radii

    losses = np.empty(b)
    gcp = np.empty_like(cp)
    grp = np.empty_like(rp)
    gw = np.zeros_like(last.w)
    gb = np.zeros_like(last.b)
    targets = np.asarray(targets)
    for t in np.unique(targets):
        sel = elision_selector(classes, int(t))
        w_e, b_e = sel @ last.w, sel @ last.b
        w_abs = np.abs(w_e)
        mask = targets == t
        upper = cp[mask] @ w_e.T + b_e + rp[mask] @ w_abs.T
        group_losses, gu = _diff_ce(upper)
        losses[mask] = group_losses
        gw_e = gu.T @ cp[mask] + np.sign(w_e) * (gu.T @ rp[mask])
        gw += sel.T @ gw_e
        gb += sel.T @ gu.sum(axis=0)
        gcp[mask] = gu @ w_e
        grp[mask] = gu @ w_abs
    if trunk is not None:
        trunk_grads, _, _ = _run_ibp_backward(trunk, caches, gcp, grp)
    else:
        trunk_grads = []
    grads = Gradients((*trunk_grads, (gw, gb)))
    return losses, grads


def loss_robust_ce(net: ReluNet, x, eps: float, target: int) -> tuple[float, Gradients]:
    """Robust cross-entropy of one instance over the eps-box around x."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    x = as_vector(x, "x")
    radii = np.full((1, x.shape[0]), float(eps))
    losses, grads = _robust_ce_batch(net, x[np.newaxis], radii, np.array([target]))
    return float(losses[0]), grads


# ---------------------------------------------------------------------------
# PGD


def _input_grads(net: ReluNet, xs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    logits, caches = _run_forward(net, xs)
    _, gy = _ce_batch(logits, targets)
    _, gx = _run_backward(net, caches, gy)
    return gx


def pgd_attack_batch(
    net: ReluNet,
    xs: np.ndarray,
    eps: float,
    targets: np.ndarray,
    steps: int,
    step_size: float,
    restarts: int,
    rng: Rng,
    domain: tuple[float, float] | None = (0.0, 1.0),
) -> np.ndarray:
    """Batched projected sign-gradient ascent on the CE loss.

    Starts each restart uniformly inside the ball, clips every iterate to
    the eps-ball intersected with the input domain, and keeps the best point
    per sample, never worse than the clean input.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    xs = np.asarray(xs, dtype=np.float64)
    lo, hi = xs - eps, xs + eps
    if domain is not None:
        np.clip(lo, domain[0], domain[1], out=lo)
        np.clip(hi, domain[0], domain[1], out=hi)
    best = xs.copy()
    best_loss, _ = _ce_batch(forward_batch(net, xs), targets)
    if eps == 0.0 or steps < 1:
        return best
    for restart in range(restarts):
        gen = rng.substream(restart).generator()
        xa = np.clip(xs + gen.uniform(-eps, eps, xs.shape), lo, hi)
        for _ in range(steps):
            gx = _input_grads(net, xa, targets)
            xa = np.clip(xa + step_size * np.sign(gx), lo, hi)
        losses, _ = _ce_batch(forward_batch(net, xa), targets)
        better = losses > best_loss
        best[better] = xa[better]
        best_loss = np.where(better, losses, best_loss)
    return best


def pgd_attack(
    net: ReluNet,
    x,
    eps: float,
    target: int,
    steps: int,
    step_size: float,
    restarts: int,
    rng: Rng,
    domain: tuple[float, float] | None = (0.0, 1.0),
) -> np.ndarray:
    """Adversarial point in the eps-ball around x (single instance)."""
    x = as_vector(x, "x")
    adv = pgd_attack_batch(net, x[np.newaxis], eps, np.array([target]), steps, step_size, restarts, rng, domain)
    return adv[0]


# ---------------------------------------------------------------------------
# SABR


def _sabr_centers(
    net: ReluNet,
    xs: np.ndarray,
    eps: float,
    lam: float,
    targets: np.ndarray,
    steps: int,
    step_size: float,
    restarts: int,
    rng: Rng,
    domain: tuple[float, float] | None,
) -> tuple[np.ndarray, float]:
    """Propagation-box centers for SABR; the box radius is always lambda*eps.

    The center is a PGD point in the shrunk ball of radius (1-lambda)*eps,
    clipped so the propagated box fits the input domain where possible; the
    final clip back into the shrunk ball guarantees the nesting
    B^{lambda eps}(x*) within B^{eps}(x), which takes priority on conflicts
    at the domain boundary.
    """
    tau = lam * eps
    shrunk = eps - tau
    centers = pgd_attack_batch(net, xs, shrunk, targets, steps, step_size, restarts, rng, domain)
    if domain is not None and domain[0] + tau <= domain[1] - tau:
        centers = np.clip(centers, domain[0] + tau, domain[1] - tau)
    centers = np.clip(centers, xs - shrunk, xs + shrunk)
    assert np.all(np.abs(centers - xs) <= shrunk + 1e-12), "SABR box escaped the eps-ball"
    return centers, tau


def loss_sabr(
    net: ReluNet,
    x,
    eps: float,
    lam: float,
    target: int,
    steps: int,
    step_size: float,
    restarts: int,
    rng: Rng,
    domain: tuple[float, float] | None = (0.0, 1.0),
) -> tuple[float, Gradients]:
    """SABR loss for one instance: robust CE over a shrunk, recentered box."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    x = as_vector(x, "x")
    centers, tau = _sabr_centers(net, x[np.newaxis], eps, lam, np.array([target]), steps, step_size, restarts, rng, domain)
    radii = np.full_like(centers, tau)
    losses, grads = _robust_ce_batch(net, centers, radii, np.array([target]))
    return float(losses[0]), grads


# ---------------------------------------------------------------------------
# the training loop


class _Adam:
    """Standard Adam with bias correction; fully deterministic."""

    def __init__(self, params: list[np.ndarray], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _Sgd:
    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float):
        for p, g in zip(params, grads):
            p -= lr * g


def _clip_gradients(grads: Gradients, max_norm: float) -> Gradients:
    flat = grads.flat()
    norm = float(np.sqrt(np.dot(flat, flat)))
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return Gradients(tuple(tuple(scale * g for g in layer) for layer in grads.layers), grads.wrt_input)


def _step_eps(cfg: TrainConfig, epoch: int, batch: int, batches_per_epoch: int) -> float:
    """Scheduled radius: zero during warmup, then a batch-granular linear ramp.

    Training at the full radius from an unfit network collapses it (the
    all-dead network minimizes the robust loss at chance accuracy), so the
    ramp starts only after ``warmup_epochs`` of clean cross-entropy.
    """
    if cfg.method == "STD":
        return 0.0
    if epoch < cfg.warmup_epochs:
        return 0.0
    if cfg.anneal_epochs <= 0:
        return cfg.eps_target
    steps = (epoch - cfg.warmup_epochs) * batches_per_epoch + batch
    return cfg.eps_target * min(1.0, steps / (cfg.anneal_epochs * batches_per_epoch))


def _step_kappa(cfg: TrainConfig, eps: float) -> float:
    """Clean-loss mixing weight: 1 - ramp progress, 0 once eps is at target."""
    if cfg.method not in ("IBP", "SABR") or cfg.eps_target == 0.0:
        return 0.0
    return 1.0 - eps / cfg.eps_target


def _epoch_lr(cfg: TrainConfig, epoch: int) -> float:
    decays = sum(1 for d in cfg.lr_decay_epochs if epoch >= d)
    return cfg.lr * (cfg.lr_decay_factor**decays)


def _clean_ce_grads(net, xs, targets):
    logits, caches = _run_forward(net, xs)
    losses, gy = _ce_batch(logits, targets)
    layer_grads, _ = _run_backward(net, caches, gy)
    return losses, Gradients(tuple(layer_grads))


def _mix_grads(a: Gradients, wa: float, b: Gradients, wb: float) -> Gradients:
    mixed = tuple(
        tuple(wa * ga + wb * gb for ga, gb in zip(la, lb)) for la, lb in zip(a.layers, b.layers)
    )
    return Gradients(mixed)


def _batch_loss_and_grads(net, xs, targets, eps, kappa, cfg: TrainConfig, rng: Rng, domain):
    """Loss and summed gradients for one batch under the configured method.

    Box-based methods (IBP, SABR) blend in a clean cross-entropy term with
    weight ``kappa`` while the radius anneals; kappa reaches 0 with the ramp,
    after which the objective is the pure robust loss.  Without this the
    all-dead network, which minimizes the robust loss at chance accuracy,
    wins over an unconverged fit under plain SGD.
    """
    if cfg.method == "IBP" and eps > 0.0:
        losses, grads = _robust_ce_batch(net, xs, np.full_like(xs, eps), targets)
    elif cfg.method == "SABR" and eps > 0.0:
        step = cfg.pgd_step_size if cfg.pgd_step_size is not None else eps / 4.0
        centers, tau = _sabr_centers(
            net, xs, eps, cfg.sabr_lambda, targets, cfg.pgd_steps, step, cfg.pgd_restarts, rng, domain
        )
        losses, grads = _robust_ce_batch(net, centers, np.full_like(centers, tau), targets)
    else:
        if cfg.method == "PGD" and eps > 0.0:
            step = cfg.pgd_step_size if cfg.pgd_step_size is not None else eps / 4.0
            xs = pgd_attack_batch(net, xs, eps, targets, cfg.pgd_steps, step, cfg.pgd_restarts, rng, domain)
        return _clean_ce_grads(net, xs, targets)
    if kappa > 0.0:
        clean_losses, clean_grads = _clean_ce_grads(net, xs, targets)
        losses = kappa * clean_losses + (1.0 - kappa) * losses
        grads = _mix_grads(clean_grads, kappa, grads, 1.0 - kappa)
    return losses, grads


def train(net: ReluNet, data: DatasetHandle, cfg: TrainConfig) -> TrainReport:
    """SGD training with eps annealing; returns per-epoch metrics and the net.

    Per-epoch metrics are computed on the first ``eval_subset`` training
    instances (the whole set if 0): mean training loss over the epoch's
    batches, standard accuracy, IBP-certified accuracy at the target eps,
    and mean local tightness.  Deterministic for a fixed config and data.
    """
    work = net.copy()
    xs, ys = data.inputs, data.labels
    n = xs.shape[0]
    rng = Rng(cfg.seed)
    eval_n = n if cfg.eval_subset <= 0 else min(cfg.eval_subset, n)
    eval_x, eval_y = xs[:eval_n], ys[:eval_n]
    metrics: list[EpochMetrics] = []
    optimizer = _Adam(work.parameters()) if cfg.optimizer == "adam" else _Sgd()
    batches_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    for epoch in range(cfg.epochs):
        lr = _epoch_lr(cfg, epoch)
        perm = rng.substream(epoch).generator().permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            eps = _step_eps(cfg, epoch, n_batches, batches_per_epoch)
            kappa = _step_kappa(cfg, eps)
            batch_rng = rng.substream(epoch).substream(n_batches)
            losses, grads = _batch_loss_and_grads(work, xs[idx], ys[idx], eps, kappa, cfg, batch_rng, data.domain)
            mean_loss = float(losses.mean())
            if not math.isfinite(mean_loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {n_batches}")
            scale = 1.0 / idx.shape[0]
            grads = Gradients(tuple(tuple(scale * g for g in layer) for layer in grads.layers))
            grads = _clip_gradients(grads, cfg.grad_clip_l2)
            optimizer.step(work.parameters(), grads.arrays(), lr)
            epoch_loss += mean_loss
            n_batches += 1
        cert = certify_batch(work, eval_x, cfg.eps_target, eval_y)
        metrics.append(
            EpochMetrics(
                epoch=epoch,
                train_loss=epoch_loss / max(n_batches, 1),
                std_acc=accuracy(work, eval_x, eval_y),
                cert_acc=float(cert.mean()),
                mean_tightness=float(local_tightness_batch(work, eval_x).mean()),
            )
        )
    return TrainReport(cfg, tuple(metrics), work)


# ---------------------------------------------------------------------------
# gradient-alignment diagnostic for two-layer linear chains


def _mean_tau_gradients(w1: np.ndarray, w2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of mean tightness of W2 W1 (unit input radius) w.r.t. both factors."""
    a = w2 @ w1
    sign_a = np.sign(a)
    num = np.abs(a).sum(axis=1)
    s1 = np.abs(w1).sum(axis=1)
    den = np.abs(w2) @ s1
    live = den > 0.0
    c = w2.shape[0]
    inv_den = np.where(live, 1.0 / np.where(live, den, 1.0), 0.0)
    tau = np.where(live, num * inv_den, 1.0)
    # d(num_i)/dW2[i,k] = sum_j sign(a_ij) w1[k,j];  d(den_i)/dW2[i,k] = sign(w2[i,k]) s1[k]
    gnum_w2 = sign_a @ w1.T
    gden_w2 = np.sign(w2) * s1[np.newaxis, :]
    gw2 = (gnum_w2 * inv_den[:, np.newaxis] - gden_w2 * (tau * inv_den)[:, np.newaxis]) / c
    gw2[~live] = 0.0
    # d(num_i)/dW1[k,j] = w2[i,k] sign(a_ij);  d(den_i)/dW1[k,j] = |w2[i,k]| sign(w1[k,j])
    coef = inv_den  # per output dim i
    gw1 = np.einsum("i,ik,ij->kj", coef / c, w2, sign_a)
    gw1 -= np.einsum("i,ik->k", tau * coef / c, np.abs(w2))[:, np.newaxis] * np.sign(w1)
    return gw1, gw2


def gradient_alignment_probe(dln: Dln, eps: float, rng: Rng | None = None, loss_scale: float = 1.0) -> float:
    """Inner product between the IBP-loss gradient shift and the tightness gradient.

    Builds a fixed 32-point Gaussian batch labelled by the chain's own clean
    predictions, computes grad(R(eps) - R(0)) of the mean robust CE, and
    returns its inner product with grad(mean tau), scaled by ``loss_scale``.
    Diagnostic only: nothing is asserted about the sign.
    """
    if dln.depth != 2:
        raise ValueError("the probe is defined for two-layer chains")
    if eps <= 0:
        raise ValueError("eps must be positive")
    w1, w2 = dln.weights
    if rng is None:
        rng = Rng(0xA11C)
    gen = rng.generator()
    xs = gen.standard_normal((32, dln.in_dim))
    net = ReluNet([Affine(w1, np.zeros(w1.shape[0])), Affine(w2, np.zeros(w2.shape[0]))], (dln.in_dim,))
    targets = np.argmax(forward_batch(net, xs), axis=1)

    def risk_grad(radius: float) -> np.ndarray:
        radii = np.full_like(xs, radius)
        _, grads = _robust_ce_batch(net, xs, radii, targets)
        flat = grads.flat() / xs.shape[0]
        return flat

    gdiff = (risk_grad(eps) - risk_grad(0.0)) * loss_scale
    gw1, gw2 = _mean_tau_gradients(w1, w2)
    gtau = np.concatenate([gw1.ravel(), np.zeros(w1.shape[0]), gw2.ravel(), np.zeros(w2.shape[0])])
    return float(np.dot(gdiff, gtau))
