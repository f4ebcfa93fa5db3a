import hashlib
from collections import Counter

import numpy as np
import pytest
import scipy.stats

from pwtp.datagen import SynthSpec, make_dataset, render_background, render_clip
from pwtp.linalg import spd_solve_batch
from pwtp.rng import Rng, derive_seed


def clip_digest(clip):
    return hashlib.sha256(np.ascontiguousarray(clip).tobytes()).hexdigest()


def test_render_clip_deterministic():
    spec = SynthSpec(confound=0.5, seed=3)
    a = render_clip(spec, Rng(derive_seed(3, 0, 0)), 1)
    b = render_clip(spec, Rng(derive_seed(3, 0, 0)), 1)
    assert np.array_equal(a.clip, b.clip)
    assert a.background_id == b.background_id
    assert a.glyph_id == b.glyph_id


def test_background_pixels_static_over_time():
    spec = SynthSpec(seed=1)
    clip = render_clip(spec, Rng(7), 2)
    for seg in range(spec.S):
        bg = ~clip.swept[seg]
        frames = clip.clip[seg]
        for t in range(1, spec.T):
            assert np.array_equal(frames[t][bg], frames[0][bg])
        spread = frames.max(axis=0) - frames.min(axis=0)  # exact, unlike var
        assert spread[bg].max() == 0.0


def test_foreground_actually_moves():
    spec = SynthSpec(seed=2)
    clip = render_clip(spec, Rng(8), 0)
    assert (clip.clip[0].var(axis=0) > 0).any()


def test_zero_confound_never_stamps_glyph():
    spec = SynthSpec(confound=0.0, n_train=20, n_test=8, seed=4)
    train, test = make_dataset(spec)
    assert all(c.glyph_id == -1 for c in train + test)


def test_full_confound_always_stamps_glyph():
    spec = SynthSpec(confound=1.0, n_train=20, n_test=8, seed=5)
    train, test = make_dataset(spec)
    assert all(c.glyph_id >= 0 for c in train + test)


def test_class_balance():
    spec = SynthSpec(n_train=40, n_test=12, seed=6)
    train, test = make_dataset(spec)
    counts = Counter(c.label for c in train)
    assert all(counts[k] == 10 for k in range(4))
    counts = Counter(c.label for c in test)
    assert max(counts.values()) - min(counts.values()) <= 1


def test_dataset_deterministic():
    spec = SynthSpec(n_train=8, n_test=8, confound=0.7, seed=9)
    t1, e1 = make_dataset(spec)
    t2, e2 = make_dataset(spec)
    for a, b in zip(t1 + e1, t2 + e2):
        assert np.array_equal(a.clip, b.clip)


def test_train_test_streams_disjoint():
    spec = SynthSpec(n_train=24, n_test=24, confound=0.5, seed=10)
    train, test = make_dataset(spec)
    train_hashes = {clip_digest(c.clip) for c in train}
    test_hashes = {clip_digest(c.clip) for c in test}
    assert not (train_hashes & test_hashes)


def test_backgrounds_shared_pool():
    spec = SynthSpec(n_train=40, n_test=40, seed=11)
    train, test = make_dataset(spec)
    assert {c.background_id for c in train} | {c.background_id for c in test} <= set(range(8))
    # the same id renders the same image in both splits
    assert np.array_equal(render_background(spec, 3), render_background(spec, 3))


def test_glyph_independent_of_label():
    spec = SynthSpec(n_train=240, n_test=4, confound=1.0, seed=12)
    train, _ = make_dataset(spec)
    table = np.zeros((4, 4))
    for c in train:
        table[c.label, c.glyph_id] += 1
    _, p, _, _ = scipy.stats.chi2_contingency(table)
    assert p > 0.01


def test_ones_basis_removes_background_residual():
    spec = SynthSpec(seed=13)
    lc = render_clip(spec, Rng(14), 3)
    x = lc.clip[0]  # (T, H, W, 3)
    t, h, w, c = x.shape
    fibers = x.transpose(1, 2, 0, 3).reshape(h * w, t, c)
    bases = np.ones((h * w, t, 1))
    at = np.swapaxes(bases, -1, -2)
    coeffs = spd_solve_batch(at @ bases, at @ fibers, ridge=0.0)
    resid = (fibers - bases @ coeffs).reshape(h, w, t, c)
    bg = ~lc.swept[0]
    assert np.abs(resid[bg]).max() <= 1e-12
    assert np.abs(resid[~bg]).max() > 1e-3


def test_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(K=5).validate()
    with pytest.raises(ValueError):
        SynthSpec(H=10, W=10).validate()  # too small for shape + travel
    with pytest.raises(ValueError):
        SynthSpec(confound=1.5).validate()
    with pytest.raises(ValueError):
        SynthSpec(n_train=2).validate()
    with pytest.raises(ValueError):
        render_clip(SynthSpec(), Rng(0), 4)


def test_pixel_values_in_palette_range():
    spec = SynthSpec(confound=1.0, seed=15)
    lc = render_clip(spec, Rng(16), 1)
    assert lc.clip.min() >= 0.2 and lc.clip.max() <= 0.9
