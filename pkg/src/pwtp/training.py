"""Training loops: residual-only pretraining, joint two-task training with a
resolvable loss weight, and evaluation."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var, backward
from .gradcheck import grad_check
from .objectives import JointMode, TaskGradients, cross_entropy, enopr, resolve_alpha
from .projector import PwtpConfig, init_pwtp_params, is_trainable, pwtp_apply
from .recognizer import head_forward, init_head_params
from .rng import Rng, derive_seed

BN_MOMENTUM = 0.9
GRAD_CLIP = 20.0


@dataclass
class TrainConfig:
    lr: float = 0.05
    momentum: float = 0.9
    steps: int = 2000
    batch: int = 8
    warmup_steps: int = 100
    weight_decay: float = 1e-4
    seed: int = 0
    smoothing: float = 0.1

    def validate(self):
        if self.lr <= 0 or self.steps < 1 or self.batch < 1:
            raise ValueError("lr, steps and batch must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must be in [0, 1)")
        if self.warmup_steps < 0 or self.weight_decay < 0:
            raise ValueError("warmup_steps and weight_decay must be non-negative")


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """Linear warmup from lr/warmup_steps, then cosine decay over all steps."""
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return cfg.lr * (step + 1) / cfg.warmup_steps
    return cfg.lr * 0.5 * (1.0 + np.cos(np.pi * step / cfg.steps))


def group_names(params: dict, prefix: str):
    return sorted(n for n in params if n.startswith(prefix) and is_trainable(n))


def flatten(grads: dict, names) -> np.ndarray:
    if not names:
        return np.zeros(0)
    return np.concatenate([np.asarray(grads[n]).reshape(-1) for n in names])


class MomentumSgd:
    """SGD with momentum, decoupled-by-name weight decay (weight tensors only)
    and a global gradient-norm clip shared across parameter groups."""

    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.velocity = {
            n: np.zeros_like(v) for n, v in params.items() if is_trainable(n)
        }

    def step(self, params: dict, grads: dict, lr: float):
        total = 0.0
        effective = {}
        for name, g in grads.items():
            g = np.asarray(g, dtype=np.float64)
            if params[name].ndim >= 2 and self.cfg.weight_decay > 0:
                g = g + self.cfg.weight_decay * params[name]
            effective[name] = g
            total += float((g * g).sum())
        norm = np.sqrt(total)
        scale = GRAD_CLIP / norm if norm > GRAD_CLIP else 1.0
        for name, g in effective.items():
            v = self.velocity[name]
            v *= self.cfg.momentum
            v += scale * g
            params[name] = params[name] - lr * v


def _update_running_stats(params: dict, bn_stats: dict):
    for prefix, (mean, var) in bn_stats.items():
        params[prefix + "_rmean"] = (
            BN_MOMENTUM * params[prefix + "_rmean"] + (1 - BN_MOMENTUM) * mean
        )
        params[prefix + "_rvar"] = (
            BN_MOMENTUM * params[prefix + "_rvar"] + (1 - BN_MOMENTUM) * var
        )


def _sample_batch(rng: Rng, n: int, batch: int):
    return [rng.randint(n) for _ in range(batch)]


def rgb_segment_means(clips: np.ndarray) -> np.ndarray:
    """Per-segment temporal mean frames: (N, S, T, H, W, C) -> (N, S, H, W, C)."""
    return clips.mean(axis=2)


def _collect(var_params: dict, names) -> dict:
    return {n: var_params[n].grad.copy() for n in names}


def train_unsup(pwtp_cfg: PwtpConfig, train_cfg: TrainConfig, clips: np.ndarray):
    """Minimize the mean projection-residual loss alone.

    clips: (N, S, T, H, W, C). Returns (params, rows) with rows of
    (step, enopr, lr)."""
    pwtp_cfg.validate()
    train_cfg.validate()
    n, s, t, h, w, c = clips.shape
    rng = Rng(derive_seed(train_cfg.seed, 10))
    params = init_pwtp_params(pwtp_cfg, c, rng)
    names = group_names(params, "theta1/")
    opt = MomentumSgd(params, train_cfg)
    rows = []
    for step in range(train_cfg.steps):
        idx = _sample_batch(rng, n, train_cfg.batch)
        batch = clips[idx].reshape(-1, t, h, w, c)
        var_params = {k: Var(v) for k, v in params.items()}
        out = pwtp_apply(batch, var_params, pwtp_cfg, train=True)
        loss = enopr(out["residual"])
        backward(loss)
        lr = lr_schedule(step, train_cfg)
        opt.step(params, _collect(var_params, names), lr)
        _update_running_stats(params, out["bn_stats"])
        rows.append((step, float(loss.value), lr))
    return params, rows


def batch_enopr(params: dict, pwtp_cfg: PwtpConfig, clips: np.ndarray,
                train: bool = False) -> float:
    """Mean residual loss of (N, S, T, H, W, C) clips under fixed parameters."""
    n, s, t, h, w, c = clips.shape
    var_params = {k: Var(v) for k, v in params.items()}
    out = pwtp_apply(clips.reshape(-1, t, h, w, c), var_params, pwtp_cfg, train=train)
    return float(enopr(out["residual"]).value)


def train_joint(
    pwtp_cfg: PwtpConfig,
    train_cfg: TrainConfig,
    mode: JointMode,
    clips: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    input_mode: str = "da",
):
    """Joint training of the projector and the recognizer head.

    input_mode 'da' feeds dynamic appearances to the head and couples the two
    tasks through the shared projector parameters; 'rgb_baseline' feeds
    per-segment temporal means and trains the head alone.
    Returns (params, rows) with rows of (step, enopr, loss2, alpha).
    """
    pwtp_cfg.validate()
    train_cfg.validate()
    mode.validate()
    if input_mode not in ("da", "rgb_baseline"):
        raise ValueError(f"unknown input mode {input_mode!r}")
    n, s, t, h, w, c = clips.shape
    labels = np.asarray(labels, dtype=int)
    rng = Rng(derive_seed(train_cfg.seed, 11))
    params = init_pwtp_params(pwtp_cfg, c, rng)
    params.update(init_head_params(c, n_classes, rng))
    names1 = group_names(params, "theta1/")
    names2 = group_names(params, "theta2/")
    opt = MomentumSgd(params, train_cfg)
    rows = []
    split = train_cfg.steps // 2  # boundary for the two-phase separate mode
    for step in range(train_cfg.steps):
        idx = _sample_batch(rng, n, train_cfg.batch)
        batch = clips[idx]
        batch_labels = labels[idx]
        var_params = {k: Var(v) for k, v in params.items()}
        lr = lr_schedule(step, train_cfg)

        if input_mode == "rgb_baseline":
            logits = head_forward(rgb_segment_means(batch), var_params)
            loss2 = cross_entropy(logits, batch_labels, train_cfg.smoothing)
            backward(loss2)
            opt.step(params, _collect(var_params, names2), lr)
            rows.append((step, 0.0, float(loss2.value), 0.0))
            continue

        out = pwtp_apply(batch.reshape(-1, t, h, w, c), var_params, pwtp_cfg,
                         train=True)
        loss1 = enopr(out["residual"])
        da = out["da"]
        logits = head_forward(ad.reshape(da, (len(idx), s, h, w, c)), var_params)
        loss2 = cross_entropy(logits, batch_labels, train_cfg.smoothing)

        backward(loss1)
        g1 = {name: var_params[name].grad.copy() for name in names1}
        backward(loss2)
        g2 = {name: var_params[name].grad.copy() for name in names1}
        h2 = _collect(var_params, names2)

        if mode.kind == "separate":
            if step < split:
                opt.step(params, g1, lr)
                alpha = 1.0
            else:
                opt.step(params, h2, lr)
                alpha = 0.0
        else:
            grads = TaskGradients(
                g1=flatten(g1, names1), g2=flatten(g2, names1), h2=flatten(h2, names2)
            )
            alpha = resolve_alpha(mode, grads, step=step + 1, total=train_cfg.steps)
            combined = {
                name: alpha * g1[name] + (1.0 - alpha) * g2[name] for name in names1
            }
            combined.update(h2)
            opt.step(params, combined, lr)

        _update_running_stats(params, out["bn_stats"])
        rows.append((step, float(loss1.value), float(loss2.value), float(alpha)))
    return params, rows


def evaluate(
    params: dict,
    pwtp_cfg: PwtpConfig,
    clips: np.ndarray,
    labels: np.ndarray,
    input_mode: str = "da",
) -> float:
    """Top-1 accuracy on (N, S, T, H, W, C) clips, inference path."""
    n, s, t, h, w, c = clips.shape
    var_params = {k: Var(v) for k, v in params.items()}
    if input_mode == "rgb_baseline":
        inputs = Var(rgb_segment_means(clips))
    elif input_mode == "da":
        out = pwtp_apply(clips.reshape(-1, t, h, w, c), var_params, pwtp_cfg,
                         train=False)
        inputs = ad.reshape(out["da"], (n, s, h, w, c))
    else:
        raise ValueError(f"unknown input mode {input_mode!r}")
    logits = head_forward(inputs, var_params).value
    correct = (np.argmax(logits, axis=1) == np.asarray(labels, dtype=int)).sum()
    return float(correct) / n


def end_to_end_grad_check(pwtp_cfg: PwtpConfig, clips: np.ndarray,
                          labels: np.ndarray, n_classes: int, seed: int = 0,
                          h: float = 1e-5) -> float:
    """Max relative gradient error of the full recognition objective w.r.t.
    every trainable parameter (projector and head)."""
    n, s, t, hh, ww, c = clips.shape
    rng = Rng(derive_seed(seed, 12))
    params = init_pwtp_params(pwtp_cfg, c, rng)
    params.update(init_head_params(c, n_classes, rng))
    trainables = {k: v for k, v in params.items() if is_trainable(k)}
    frozen = {k: v for k, v in params.items() if not is_trainable(k)}

    def build(var_params):
        full = dict(var_params)
        full.update({k: Var(v) for k, v in frozen.items()})
        out = pwtp_apply(clips.reshape(-1, t, hh, ww, c), full, pwtp_cfg, train=True)
        da = ad.reshape(out["da"], (n, s, hh, ww, c))
        return cross_entropy(head_forward(da, full), labels, smoothing=0.0)

    return grad_check(build, trainables, h=h)


def unsup_grad_check(pwtp_cfg: PwtpConfig, clips: np.ndarray, seed: int = 0,
                     h: float = 1e-5) -> float:
    """Max relative gradient error of the residual loss w.r.t. the projector
    parameters."""
    n, s, t, hh, ww, c = clips.shape
    rng = Rng(derive_seed(seed, 13))
    params = init_pwtp_params(pwtp_cfg, c, rng)
    trainables = {k: v for k, v in params.items() if is_trainable(k)}
    frozen = {k: v for k, v in params.items() if not is_trainable(k)}

    def build(var_params):
        full = dict(var_params)
        full.update({k: Var(v) for k, v in frozen.items()})
        out = pwtp_apply(clips.reshape(-1, t, hh, ww, c), full, pwtp_cfg, train=True)
        return enopr(out["residual"])

    return grad_check(build, trainables, h=h)
