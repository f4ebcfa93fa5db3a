"""Training objectives and the two-task gradient combination step."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var

MGDA_DEGENERATE_EPS = 1e-24


def enopr(p) -> Var:
    """Mean squared temporal-fiber norm of the projection residual.

    p: (T, H, W, C) -> sum(p^2) / (H*W*C). Leading batch axes, if present,
    are averaged (each segment counts as one data point).
    """
    p = ad.as_var(p)
    if p.ndim < 4:
        raise ValueError(f"expected at least (T, H, W, C), got shape {p.shape}")
    h, w, c = p.shape[-3:]
    n_batch = int(np.prod(p.shape[: p.ndim - 4])) if p.ndim > 4 else 1
    total = ad.sum_(ad.mul(p, p))
    return ad.mul(total, 1.0 / (h * w * c * n_batch))


def smoothed_targets(labels: np.ndarray, k: int, smoothing: float) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    if (labels < 0).any() or (labels >= k).any():
        raise ValueError(f"label out of range for {k} classes")
    t = np.full((labels.size, k), smoothing / (k - 1))
    t[np.arange(labels.size), labels] = 1.0 - smoothing
    return t


def cross_entropy(logits, labels, smoothing: float = 0.0) -> Var:
    """Softmax cross-entropy against smoothed one-hot targets.

    logits: (K,) or (N, K); batched inputs return the mean loss.
    """
    logits = ad.as_var(logits)
    squeeze = logits.ndim == 1
    if squeeze:
        logits = ad.reshape(logits, (1, logits.shape[0]))
    n, k = logits.shape
    if k < 2:
        raise ValueError("need at least 2 classes")
    targets = smoothed_targets(labels, k, smoothing)
    if targets.shape[0] != n:
        raise ValueError("label count does not match logits")
    shift = logits.value.max(axis=-1, keepdims=True)  # constant, zero-gradient
    z = ad.sub(logits, shift)
    lse = ad.add(ad.log(ad.sum_(ad.exp(z), axis=-1, keepdims=True)), shift)
    per_sample = ad.sum_(ad.mul(ad.sub(lse, logits), targets), axis=-1)
    return ad.mean_(per_sample)


@dataclass
class TaskGradients:
    g1: np.ndarray  # d(residual loss)/d(shared params), flat
    g2: np.ndarray  # d(recognition loss)/d(shared params), flat
    h2: np.ndarray  # d(recognition loss)/d(head params), flat


def mgda_alpha(g1: np.ndarray, g2: np.ndarray) -> float:
    """Convex weight minimizing ||a*g1 + (1-a)*g2||^2 over a in [0, 1]."""
    g1 = np.asarray(g1, dtype=np.float64).reshape(-1)
    g2 = np.asarray(g2, dtype=np.float64).reshape(-1)
    if g1.shape != g2.shape:
        raise ValueError("gradient vectors must have equal length")
    if not (np.isfinite(g1).all() and np.isfinite(g2).all()):
        raise ValueError("non-finite gradients")
    diff = g1 - g2
    denom = float(diff @ diff)
    if denom < MGDA_DEGENERATE_EPS:
        return 0.5  # equal gradients: every weight gives the same direction
    alpha = float((g2 - g1) @ g2) / denom
    return min(max(alpha, 0.0), 1.0)


@dataclass
class SchedulerConfig:
    gamma: float  # fraction of iterations spent annealing from 1 to lam
    lam: float  # weight at the branch split
    total: int  # total iterations M
    step: int  # current iteration m, 1-based

    def validate(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must be in (0, 1)")
        if not (0.0 < self.lam <= 1.0):
            raise ValueError("lam must be in (0, 1]")
        if self.total < 1 or not (1 <= self.step):
            raise ValueError("need 1 <= step and total >= 1")


def scale_schedule(cfg: SchedulerConfig) -> float:
    """Two-branch annealing weight: cosine-like decay from 1 to lam over the
    first gamma*M iterations, then a decay reaching 0 at (1-gamma)*M and held
    at 0 afterwards. Result clamped to [0, 1]."""
    cfg.validate()
    m = float(cfg.step)
    split = cfg.gamma * cfg.total
    tail_zero = (1.0 - cfg.gamma) * cfg.total
    if m <= split:
        if cfg.lam >= 1.0:
            alpha = 1.0
        else:
            # base chosen so the value at m == split is exactly lam
            base = split ** (np.pi / np.arccos(2.0 * cfg.lam - 1.0))
            alpha = 0.5 * (1.0 + np.cos(np.pi * np.log(m) / np.log(base)))
    elif m >= tail_zero:
        alpha = 0.0
    else:
        alpha = 0.5 * cfg.lam * (1.0 + np.cos(np.pi * np.log(m) / np.log(tail_zero)))
    return float(min(max(alpha, 0.0), 1.0))


@dataclass
class JointMode:
    kind: str  # separate | constant | mgda | sched
    alpha: float = 0.5
    gamma: float = 0.2
    lam: float = 0.1

    def validate(self):
        if self.kind not in ("separate", "constant", "mgda", "sched"):
            raise ValueError(f"unknown joint mode {self.kind!r}")
        if self.kind == "constant" and not (0.0 <= self.alpha <= 1.0):
            raise ValueError("constant alpha must be in [0, 1]")

    @staticmethod
    def parse(text: str) -> "JointMode":
        """Parse 'separate', 'mgda', 'constant:<a>' or 'sched:<gamma>,<lam>'."""
        head, _, rest = text.partition(":")
        if head == "constant":
            mode = JointMode("constant", alpha=float(rest))
        elif head == "sched":
            g, _, l = rest.partition(",")
            mode = JointMode("sched", gamma=float(g), lam=float(l))
        elif head in ("separate", "mgda") and not rest:
            mode = JointMode(head)
        else:
            raise ValueError(f"cannot parse joint mode {text!r}")
        mode.validate()
        return mode


def resolve_alpha(mode: JointMode, grads: TaskGradients, step: int = 1,
                  total: int = 1) -> float:
    if mode.kind == "constant":
        return mode.alpha
    if mode.kind == "mgda":
        return mgda_alpha(grads.g1, grads.g2)
    if mode.kind == "sched":
        return scale_schedule(
            SchedulerConfig(gamma=mode.gamma, lam=mode.lam, total=total, step=step)
        )
    raise ValueError(f"mode {mode.kind!r} does not resolve to a single weight")


def joint_step(theta1: np.ndarray, theta2: np.ndarray, grads: TaskGradients,
               eta: float, mode: JointMode, step: int = 1, total: int = 1):
    """One plain gradient step on both parameter groups.

    theta1 <- theta1 - eta * (a*g1 + (1-a)*g2); theta2 <- theta2 - eta * h2.
    Returns (theta1, theta2, alpha).
    """
    alpha = resolve_alpha(mode, grads, step=step, total=total)
    t1 = np.asarray(theta1, dtype=np.float64) - eta * (
        alpha * grads.g1 + (1.0 - alpha) * grads.g2
    )
    t2 = np.asarray(theta2, dtype=np.float64) - eta * grads.h2
    return t1, t2, alpha
