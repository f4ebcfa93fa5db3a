"""Synthetic confounded video clips: a moving square whose direction encodes
the label, on static cluttered backgrounds shared across classes, optionally
stamped with a static distractor glyph uncorrelated with the label."""

from dataclasses import dataclass

import numpy as np

from .rng import Rng, derive_seed

PALETTE = np.linspace(0.2, 0.9, 8)
# backgrounds and glyphs draw from the dark bands, the moving shape from the
# bright ones, so the shape always has positive contrast against the scene
BG_BANDS = PALETTE[:5]
FG_BANDS = PALETTE[6:]
N_BACKGROUNDS = 8
N_GLYPHS = 4
SQUARE_SIZE = 6
SPEED = 1  # pixels per frame
# direction per class: (dy, dx)
DIRECTIONS = [(-1, 0), (1, 0), (0, -1), (0, 1)]


@dataclass
class SynthSpec:
    H: int = 32
    W: int = 32
    S: int = 4
    T: int = 8
    K: int = 4
    n_train: int = 40
    n_test: int = 40
    confound: float = 0.0
    seed: int = 0

    def validate(self):
        if self.K < 2 or self.K > len(DIRECTIONS):
            raise ValueError(f"K must be in [2, {len(DIRECTIONS)}]")
        travel = (self.T - 1) * SPEED
        if min(self.H, self.W) < SQUARE_SIZE + travel:
            raise ValueError("frame too small for the moving shape")
        if not (0.0 <= self.confound <= 1.0):
            raise ValueError("confound strength must be in [0, 1]")
        if self.n_train < self.K or self.n_test < self.K:
            raise ValueError("need at least K clips per split")


@dataclass
class LabeledClip:
    clip: np.ndarray  # (S, T, H, W, 3)
    label: int
    background_id: int
    glyph_id: int  # -1 when absent
    swept: np.ndarray  # (S, H, W) bool, pixels covered by the moving shape


def _pick_color(rng: Rng, bands: np.ndarray = BG_BANDS) -> np.ndarray:
    return bands[[rng.randint(len(bands)) for _ in range(3)]]


def render_background(spec: SynthSpec, bg_id: int) -> np.ndarray:
    """Cluttered static background; deterministic in (seed, bg_id)."""
    rng = Rng(derive_seed(spec.seed, 2, bg_id))
    img = np.empty((spec.H, spec.W, 3))
    img[:] = _pick_color(rng)
    for _ in range(12):
        hh = 3 + rng.randint(10)
        ww = 3 + rng.randint(10)
        y = rng.randint(spec.H - hh)
        x = rng.randint(spec.W - ww)
        img[y : y + hh, x : x + ww] = _pick_color(rng)
    return img


def _glyph_pattern(glyph_id: int) -> np.ndarray:
    g = np.zeros((7, 7), dtype=bool)
    if glyph_id == 0:  # cross
        g[3, :] = True
        g[:, 3] = True
    elif glyph_id == 1:  # box outline
        g[[0, -1], :] = True
        g[:, [0, -1]] = True
    elif glyph_id == 2:  # diagonal
        np.fill_diagonal(g, True)
        np.fill_diagonal(g[:, ::-1], True)
    else:  # checker
        g[::2, ::2] = True
        g[1::2, 1::2] = True
    return g


def render_clip(spec: SynthSpec, rng: Rng, label: int) -> LabeledClip:
    """One clip: static background (+ optional static glyph) with a square
    translating in the label's direction, restarting each segment."""
    spec.validate()
    if not (0 <= label < spec.K):
        raise ValueError(f"label {label} out of range for K={spec.K}")
    bg_id = rng.randint(N_BACKGROUNDS)
    background = render_background(spec, bg_id).copy()

    glyph_id = -1
    if rng.uniform(1)[0] < spec.confound:
        glyph_id = rng.randint(N_GLYPHS)
        pat = _glyph_pattern(glyph_id)
        gy = rng.randint(spec.H - pat.shape[0])
        gx = rng.randint(spec.W - pat.shape[1])
        background[gy : gy + pat.shape[0], gx : gx + pat.shape[1]][pat] = _pick_color(
            rng
        )

    dy, dx = DIRECTIONS[label]
    travel = (spec.T - 1) * SPEED
    clip = np.empty((spec.S, spec.T, spec.H, spec.W, 3))
    swept = np.zeros((spec.S, spec.H, spec.W), dtype=bool)
    for seg in range(spec.S):
        color = _pick_color(rng, FG_BANDS)
        y0 = (travel if dy < 0 else 0) + rng.randint(
            spec.H - SQUARE_SIZE - travel + 1
        )
        x0 = (travel if dx < 0 else 0) + rng.randint(
            spec.W - SQUARE_SIZE - travel + 1
        )
        for t in range(spec.T):
            frame = background.copy()
            y = y0 + dy * SPEED * t
            x = x0 + dx * SPEED * t
            frame[y : y + SQUARE_SIZE, x : x + SQUARE_SIZE] = color
            swept[seg, y : y + SQUARE_SIZE, x : x + SQUARE_SIZE] = True
            clip[seg, t] = frame
    return LabeledClip(clip, label, bg_id, glyph_id, swept)


def make_dataset(spec: SynthSpec):
    """Class-balanced train/test splits on disjoint PRNG substreams, sharing
    one background pool."""
    spec.validate()

    def split(split_id: int, n: int):
        return [
            render_clip(spec, Rng(derive_seed(spec.seed, split_id, i)), i % spec.K)
            for i in range(n)
        ]

    return split(0, spec.n_train), split(1, spec.n_test)
