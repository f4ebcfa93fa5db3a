"""Small convolutional classifier with segment-level average consensus."""

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .rng import Rng
from .projector import _glorot


def init_head_params(channels: int, n_classes: int, rng: Rng) -> dict:
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    return {
        "theta2/conv1_w": _glorot(
            rng, 9 * channels, 9 * 16, (3, 3, channels, 16)
        ),
        "theta2/conv1_b": np.zeros(16),
        "theta2/conv2_w": _glorot(rng, 9 * 16, 9 * 32, (3, 3, 16, 32)),
        "theta2/conv2_b": np.zeros(32),
        "theta2/fc_w": _glorot(rng, 32, n_classes, (32, n_classes)),
        "theta2/fc_b": np.zeros(n_classes),
    }


def _sorted_mean_segments(x: Var) -> Var:
    """Mean over the segment axis of (N, S, K) with the addends accumulated
    in a value-sorted order, so the result is bitwise invariant to segment
    permutation."""
    n, s, k = x.shape
    out = np.zeros((n, k))
    for i in range(n):
        order = np.lexsort(x.value[i].T[::-1])
        acc = np.zeros(k)
        for j in order:
            acc = acc + x.value[i, j]
        out[i] = acc / s

    def vjp(g, n=n, s=s, k=k):
        # the mean's gradient is uniform regardless of accumulation order
        return np.repeat(g[:, None, :] / s, s, axis=1)

    return Var(out, [(x, vjp)])


def head_forward(inputs, params: dict) -> Var:
    """Per-segment conv features, globally pooled, linearly classified, then
    averaged over segments. inputs: (S, H, W, C) or (N, S, H, W, C)."""
    x = ad.as_var(inputs)
    squeeze = x.ndim == 4
    if squeeze:
        x = ad.reshape(x, (1,) + tuple(x.shape))
    if x.ndim != 5:
        raise ValueError(f"expected (N, S, H, W, C) inputs, got shape {x.shape}")
    n, s, h, w, c = x.shape
    # per-sample RMS standardization so dynamic-appearance inputs (small
    # signed values) and raw frame means (unit-scale) meet the same filters
    ms = ad.mean_(ad.mul(x, x), axis=(1, 2, 3, 4), keepdims=True)
    x = ad.div(x, ad.sqrt(ad.add(ms, 1e-6)))
    frames = ad.reshape(x, (n * s, h, w, c))
    z = ad.gelu(ad.add(ad.conv2d(frames, _as_var(params, "theta2/conv1_w"), 1),
                       _as_var(params, "theta2/conv1_b")))
    z = ad.gelu(ad.add(ad.conv2d(z, _as_var(params, "theta2/conv2_w"), 2),
                       _as_var(params, "theta2/conv2_b")))
    pooled = ad.mean_(z, axis=(1, 2))  # (N*S, 32)
    logits = ad.add(ad.matmul(pooled, _as_var(params, "theta2/fc_w")),
                    _as_var(params, "theta2/fc_b"))
    k = logits.shape[-1]
    consensus = _sorted_mean_segments(ad.reshape(logits, (n, s, k)))
    return ad.reshape(consensus, (k,)) if squeeze else consensus


def _as_var(params: dict, name: str) -> Var:
    v = params[name]
    return v if isinstance(v, Var) else Var(v)


def predict(logits: np.ndarray) -> int:
    """Argmax class with lowest-index tie-break."""
    logits = np.asarray(logits)
    if logits.ndim != 1 or logits.size < 2:
        raise ValueError("expected a single logit vector over >= 2 classes")
    return int(np.argmax(logits))
