"""Pixel-wise temporal projection: split a clip into static appearance and
a dynamic-appearance residual.

Every pixel gets its own low-rank temporal basis, generated from local
frame-similarity descriptors by a small MLP. Projecting the pixel's temporal
fiber onto that basis yields the static part; the residual, averaged over
time, is the dynamic appearance.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .rng import Rng

BN_EPS = 1e-5


@dataclass
class MlpConfig:
    r: int = 2  # expansion ratio of the first layer
    beta: float = 0.25  # bottleneck width ratio
    blocks: int = 1

    def validate(self):
        if self.r < 1:
            raise ValueError("mlp expansion ratio r must be >= 1")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError("mlp bottleneck ratio beta must be in (0, 1]")
        if self.blocks < 0:
            raise ValueError("mlp block count must be >= 0")


@dataclass
class PwtpConfig:
    T: int = 8  # frames per segment
    D: int = 1  # subspace rank
    k: int = 9  # aggregation kernel size
    s: int = 8  # aggregation stride
    c_prime: int = 24  # aggregation output channels
    mlp: MlpConfig = field(default_factory=MlpConfig)
    ridge: float = 1e-6

    def validate(self):
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if not (1 <= self.D <= self.T // 2):
            raise ValueError("D must satisfy 1 <= D <= T/2")
        if self.k < self.s:
            raise ValueError("kernel size k must be >= stride s")
        if self.s < 1 or self.c_prime < 1:
            raise ValueError("stride and channel count must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        self.mlp.validate()

    @property
    def descriptor_len(self) -> int:
        return self.T * (self.T - 1) // 2

    @property
    def mlp_hidden(self) -> int:
        return self.mlp.r * self.descriptor_len

    @property
    def mlp_bottleneck(self) -> int:
        return max(1, round(self.mlp.beta * self.mlp_hidden))


@dataclass
class SegmentDecomposition:
    static: np.ndarray  # (T, H, W, C)
    residual: np.ndarray  # (T, H, W, C)
    da: np.ndarray  # (H, W, C)
    bases: np.ndarray  # (H*W, T, D)
    coeffs: np.ndarray  # (H*W, D, C)


def is_trainable(name: str) -> bool:
    return not (name.endswith("_rmean") or name.endswith("_rvar"))


RAMP_TILT = 0.5  # temporal tilt of the leading basis column at init
OUT_WEIGHT_SCALE = 0.1  # shrink of the basis head weights at init


def ramp_basis(t: int, d: int, tilt: float = RAMP_TILT) -> np.ndarray:
    """Orthonormalized polynomial columns; the leading column is a tilted
    constant (1 + tilt * ramp) so the temporal average of the projection
    residual responds to when, not only whether, a pixel changes."""
    x = np.linspace(-1.0, 1.0, t)
    v = np.vander(x, d, increasing=True)
    v[:, 0] += tilt * x
    q, _ = np.linalg.qr(v)
    signs = np.sign(q.sum(axis=0))
    signs[signs == 0] = 1.0
    return q * signs


def _glorot(rng: Rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform_array(shape, -a, a)


def _draw_params(cfg: PwtpConfig, channels: int, rng: Rng) -> dict:
    k, cp = cfg.k, cfg.c_prime
    f_in = cfg.descriptor_len
    hid = cfg.mlp_hidden
    bot = cfg.mlp_bottleneck
    out = cfg.T * cfg.D
    p = {
        "theta1/conv_w": _glorot(
            rng, k * k * channels, k * k * cp, (k, k, channels, cp)
        ),
        "theta1/mlp_fc0_w": _glorot(rng, f_in, hid, (f_in, hid)),
        "theta1/mlp_fc0_b": np.zeros(hid),
    }
    for i in range(cfg.mlp.blocks):
        p[f"theta1/mlp_blk{i}_bn_gamma"] = np.ones(hid)
        p[f"theta1/mlp_blk{i}_bn_beta"] = np.zeros(hid)
        p[f"theta1/mlp_blk{i}_bn_rmean"] = np.zeros(hid)
        p[f"theta1/mlp_blk{i}_bn_rvar"] = np.ones(hid)
        p[f"theta1/mlp_blk{i}_fc1_w"] = _glorot(rng, hid, bot, (hid, bot))
        p[f"theta1/mlp_blk{i}_fc1_b"] = np.zeros(bot)
        p[f"theta1/mlp_blk{i}_fc2_w"] = _glorot(rng, bot, hid, (bot, hid))
        p[f"theta1/mlp_blk{i}_fc2_b"] = np.zeros(hid)
    # keep the data-dependent part small at step 0 so the bases start near
    # the tilted polynomial basis, which guarantees rank D at every pixel
    p["theta1/mlp_out_w"] = OUT_WEIGHT_SCALE * _glorot(rng, hid, out, (hid, out))
    p["theta1/mlp_out_b"] = ramp_basis(cfg.T, cfg.D).reshape(-1).copy()
    return p


def bases_full_rank(bases: np.ndarray, tol: float = 1e-8) -> bool:
    """True when every per-pixel basis has D independent columns."""
    d = bases.shape[-1]
    sv = np.linalg.svd(bases, compute_uv=False)
    return bool((sv[:, d - 1] > tol * np.maximum(sv[:, 0], 1.0)).all())


def init_pwtp_params(
    cfg: PwtpConfig, channels: int, rng: Rng, probe_attempts: int = 5
) -> dict:
    """Draw PWTP parameters, re-seeding until a probe clip yields full-rank
    bases everywhere (at most probe_attempts draws)."""
    cfg.validate()
    side = max(cfg.k, 2 * cfg.s)
    for _ in range(probe_attempts):
        params = _draw_params(cfg, channels, rng)
        probe = rng.uniform_array((1, cfg.T, side, side, channels))
        var_params = {k: Var(v) for k, v in params.items()}
        out = pwtp_apply(probe, var_params, cfg, train=True)
        if bases_full_rank(out["bases"].value):
            return params
    raise RuntimeError(
        f"rank-deficient basis on probe input after {probe_attempts} attempts"
    )


# ------------------------------------------------------------ forward pieces


def _batchnorm(x: Var, params: dict, prefix: str, train: bool):
    """Per-feature normalization over the leading (position) axis."""
    gamma, beta = params[prefix + "_gamma"], params[prefix + "_beta"]
    if train:
        mu = ad.mean_(x, axis=0, keepdims=True)
        xc = ad.sub(x, mu)
        var = ad.mean_(ad.mul(xc, xc), axis=0, keepdims=True)
        inv = ad.div(1.0, ad.sqrt(ad.add(var, BN_EPS)))
        y = ad.add(ad.mul(gamma, ad.mul(xc, inv)), beta)
        stats = (mu.value.reshape(-1), var.value.reshape(-1))
    else:
        rmean = params[prefix + "_rmean"].value
        rvar = params[prefix + "_rvar"].value
        inv = 1.0 / np.sqrt(rvar + BN_EPS)
        y = ad.add(ad.mul(gamma, ad.mul(ad.sub(x, rmean), inv)), beta)
        stats = None
    return y, stats


def mlp_forward(u: Var, params: dict, cfg: PwtpConfig, train: bool):
    """Map descriptors (N, T(T-1)/2) to flattened bases (N, T*D)."""
    h = ad.gelu(ad.add(ad.matmul(u, params["theta1/mlp_fc0_w"]),
                       params["theta1/mlp_fc0_b"]))
    bn_stats = {}
    for i in range(cfg.mlp.blocks):
        pre = f"theta1/mlp_blk{i}_bn"
        z, stats = _batchnorm(h, params, pre, train)
        if stats is not None:
            bn_stats[pre] = stats
        z = ad.gelu(ad.add(ad.matmul(z, params[f"theta1/mlp_blk{i}_fc1_w"]),
                           params[f"theta1/mlp_blk{i}_fc1_b"]))
        z = ad.gelu(ad.add(ad.matmul(z, params[f"theta1/mlp_blk{i}_fc2_w"]),
                           params[f"theta1/mlp_blk{i}_fc2_b"]))
        h = ad.add(h, z)
    out = ad.add(ad.matmul(h, params["theta1/mlp_out_w"]),
                 params["theta1/mlp_out_b"])
    return out, bn_stats


def aggregate_conv(x, params: dict, cfg: PwtpConfig) -> Var:
    """Spatially aggregate each frame. x: (T, H, W, C) -> (T, h, w, C')."""
    x = ad.as_var(x)
    w = params["theta1/conv_w"]
    w = w if isinstance(w, Var) else Var(w)
    return ad.conv2d(x, w, cfg.s)


def temporal_descriptors(xt) -> Var:
    """Pairwise scaled frame products per position.
    xt: (T, h, w, C') -> (h*w, T*(T-1)/2)."""
    xt = ad.as_var(xt)
    t, h, w, cp = xt.shape
    per_pos = ad.reshape(ad.transpose(xt, (1, 2, 0, 3)), (h * w, t, cp))
    return ad.pairwise_dot(per_pos, scale=1.0 / cp)


def generate_bases(u, params: dict, cfg: PwtpConfig, grid_hw, target_hw) -> Var:
    """Run the MLP per position, upsample to full resolution and reshape to
    per-pixel (T, D) bases."""
    u = ad.as_var(u)
    h, w = grid_hw
    out_h, out_w = target_hw
    flat, _ = mlp_forward(u, params, cfg, train=False)
    grid = ad.reshape(flat, (1, h, w, cfg.T * cfg.D))
    up = ad.bilinear_upsample(grid, out_h, out_w)
    return ad.reshape(up, (out_h * out_w, cfg.T, cfg.D))


def project(x, bases, ridge: float = 0.0):
    """Least-squares projection of every pixel's temporal fiber onto its basis.

    x: (T, H, W, C), bases: (H*W, T, D) -> (coeffs (H*W, D, C), static (T, H, W, C)).
    """
    x = ad.as_var(x)
    bases = ad.as_var(bases)
    t, h, w, c = x.shape
    fibers = ad.reshape(ad.transpose(x, (1, 2, 0, 3)), (h * w, t, c))
    at = ad.swap_last2(bases)
    gram = ad.matmul(at, bases)
    coeffs = ad.spd_solve(gram, ad.matmul(at, fibers), ridge=ridge)
    static_f = ad.matmul(bases, coeffs)
    static = ad.transpose(ad.reshape(static_f, (h, w, t, c)), (2, 0, 1, 3))
    return coeffs, static


def residual_and_da(x, static):
    """Residual p = x - static (exact) and its temporal average."""
    x = ad.as_var(x)
    p = ad.sub(x, static)
    da = ad.mean_(p, axis=0)
    return p, da


# -------------------------------------------------------------- batched path


def pwtp_apply(clips: np.ndarray, params: dict, cfg: PwtpConfig, train: bool):
    """Full projection pipeline over a stack of segments.

    clips: (B, T, H, W, C) -> dict of Vars: static, residual, da, bases,
    coeffs, plus batch normalization statistics when train=True.
    """
    b, t, h, w, c = clips.shape
    frames = Var(clips.reshape(b * t, h, w, c))
    xt = ad.conv2d(frames, params["theta1/conv_w"], cfg.s)
    gh, gw = xt.shape[1], xt.shape[2]
    per_pos = ad.reshape(
        ad.transpose(ad.reshape(xt, (b, t, gh, gw, cfg.c_prime)), (0, 2, 3, 1, 4)),
        (b * gh * gw, t, cfg.c_prime),
    )
    u = ad.pairwise_dot(per_pos, scale=1.0 / cfg.c_prime)
    flat, bn_stats = mlp_forward(u, params, cfg, train)
    grid = ad.reshape(flat, (b, gh, gw, t * cfg.D))
    bases = ad.reshape(ad.bilinear_upsample(grid, h, w), (b * h * w, t, cfg.D))

    fibers = Var(np.ascontiguousarray(clips.transpose(0, 2, 3, 1, 4)).reshape(
        b * h * w, t, c))
    at = ad.swap_last2(bases)
    gram = ad.matmul(at, bases)
    coeffs = ad.spd_solve(gram, ad.matmul(at, fibers), ridge=cfg.ridge)
    static_f = ad.matmul(bases, coeffs)
    residual_f = ad.sub(fibers, static_f)
    # re-derive the static part from the residual so static + residual
    # reproduces the input bitwise
    static_f = ad.sub(fibers, residual_f)
    static = ad.transpose(ad.reshape(static_f, (b, h, w, t, c)), (0, 3, 1, 2, 4))
    residual = ad.transpose(ad.reshape(residual_f, (b, h, w, t, c)), (0, 3, 1, 2, 4))
    da = ad.mean_(residual, axis=1)
    return {
        "static": static,
        "residual": residual,
        "da": da,
        "bases": bases,
        "coeffs": coeffs,
        "bn_stats": bn_stats,
    }


def pwtp_forward(clip: np.ndarray, params: dict, cfg: PwtpConfig):
    """Decompose one clip of S segments. Uses stored normalization statistics
    (inference path). Returns (da (S, H, W, C), [SegmentDecomposition])."""
    cfg.validate()
    if clip.ndim != 5:
        raise ValueError(f"expected (S, T, H, W, C) clip, got shape {clip.shape}")
    if clip.shape[1] != cfg.T:
        raise ValueError(f"clip has {clip.shape[1]} frames per segment, config T={cfg.T}")
    var_params = {k: (v if isinstance(v, Var) else Var(v)) for k, v in params.items()}
    out = pwtp_apply(clip, var_params, cfg, train=False)
    s, t, h, w, c = clip.shape
    da = out["da"].value
    bases = out["bases"].value.reshape(s, h * w, t, cfg.D)
    coeffs = out["coeffs"].value.reshape(s, h * w, cfg.D, c)
    decomps = [
        SegmentDecomposition(
            static=out["static"].value[i],
            residual=out["residual"].value[i],
            da=da[i],
            bases=bases[i],
            coeffs=coeffs[i],
        )
        for i in range(s)
    ]
    return da, decomps
