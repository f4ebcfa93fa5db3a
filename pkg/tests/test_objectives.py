import numpy as np
import pytest

from pwtp.autodiff import Var, backward
from pwtp.objectives import (
    JointMode,
    SchedulerConfig,
    TaskGradients,
    cross_entropy,
    enopr,
    joint_step,
    mgda_alpha,
    resolve_alpha,
    scale_schedule,
)
from pwtp.rng import Rng


# -------------------------------------------------------------------- enopr


def enopr_bruteforce(p):
    """Naive per-fiber loop: mean over (H, W, C) of squared fiber norms."""
    t, h, w, c = p.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            for ch in range(c):
                fiber = p[:, i, j, ch]
                total += float(fiber @ fiber)
    return total / (h * w * c)


def test_zero_residual_gives_zero():
    assert enopr(np.zeros((4, 3, 3, 2))).value == 0.0


def test_single_fiber_of_ones():
    p = np.ones((4, 1, 1, 1))
    assert np.allclose(enopr(p).value, 4.0)


def test_matches_bruteforce_loop():
    p = Rng(30).uniform_array((8, 8, 8, 3), -1.0, 1.0)
    assert abs(enopr(p).value - enopr_bruteforce(p)) <= 1e-12


def test_batched_mean_over_segments():
    p = Rng(31).uniform_array((3, 4, 5, 5, 2), -1.0, 1.0)
    want = np.mean([enopr_bruteforce(p[i]) for i in range(3)])
    assert abs(enopr(p).value - want) <= 1e-12


def test_nonnegative_and_zero_only_at_zero():
    p = Rng(32).uniform_array((4, 3, 3, 1), -1.0, 1.0)
    assert enopr(p).value > 0.0


def test_enopr_rank_check():
    with pytest.raises(ValueError):
        enopr(np.zeros((4, 3)))


# ------------------------------------------------------------ cross entropy


def test_uniform_logits_ln4():
    loss = cross_entropy(np.zeros(4), 0, smoothing=0.0)
    assert np.allclose(loss.value, np.log(4.0), atol=1e-9)


def test_uniform_logits_smoothing_invariant():
    # against uniform log-probabilities any target summing to 1 gives ln K
    loss = cross_entropy(np.zeros(4), 2, smoothing=0.1)
    assert np.allclose(loss.value, np.log(4.0), atol=1e-9)


def test_confident_correct_logit_drives_loss_to_zero():
    logits = np.array([50.0, 0.0, 0.0, 0.0])
    assert cross_entropy(logits, 0, smoothing=0.0).value < 1e-12


def test_batched_loss_is_mean():
    logits = Rng(33).uniform_array((5, 4), -2.0, 2.0)
    labels = np.array([0, 1, 2, 3, 0])
    per = [cross_entropy(logits[i], labels[i], 0.1).value for i in range(5)]
    got = cross_entropy(logits, labels, 0.1).value
    assert np.allclose(got, np.mean(per), atol=1e-12)


def test_label_out_of_range():
    with pytest.raises(ValueError):
        cross_entropy(np.zeros(4), 4, smoothing=0.0)


def test_gradient_points_toward_target():
    logits = Var(np.array([1.0, 0.0, 0.0]))
    loss = cross_entropy(logits, 0, smoothing=0.0)
    backward(loss)
    g = logits.grad
    assert g[0] < 0 and g[1] > 0 and g[2] > 0
    assert abs(g.sum()) <= 1e-12  # softmax gradient sums to zero


# --------------------------------------------------------------------- mgda


def grid_scan_alpha(g1, g2, step=1e-4):
    """Brute-force minimizer of ||a*g1 + (1-a)*g2||^2 over a grid."""
    alphas = np.arange(0.0, 1.0 + step / 2, step)
    combos = alphas[:, None] * g1[None] + (1.0 - alphas[:, None]) * g2[None]
    return float(alphas[np.argmin((combos * combos).sum(axis=1))])


def test_antiparallel_symmetric():
    g = np.array([1.0, -2.0, 0.5])
    assert mgda_alpha(-g, g) == 0.5


def test_parallel_clamp_to_zero():
    g2 = np.array([1.0, 1.0])
    assert mgda_alpha(2.0 * g2, g2) == 0.0


def test_parallel_clamp_to_one():
    g1 = np.array([1.0, 1.0])
    assert mgda_alpha(g1, 2.0 * g1) == 1.0


def test_orthogonal_unit_gradients():
    assert np.allclose(mgda_alpha(np.array([1.0, 0.0]), np.array([0.0, 1.0])), 0.5)


def test_equal_gradients_degenerate():
    g = np.array([0.3, -0.7])
    assert mgda_alpha(g, g) == 0.5


def test_matches_grid_scan_on_random_pairs():
    rng = Rng(34)
    for _ in range(500):
        g1 = rng.uniform_array((6,), -1.0, 1.0)
        g2 = rng.uniform_array((6,), -1.0, 1.0)
        assert abs(mgda_alpha(g1, g2) - grid_scan_alpha(g1, g2)) <= 2e-4


def test_minimizes_combined_norm_against_grid():
    rng = Rng(35)
    for _ in range(50):
        g1 = rng.uniform_array((8,), -1.0, 1.0)
        g2 = rng.uniform_array((8,), -1.0, 1.0)
        a = mgda_alpha(g1, g2)
        best = a * g1 + (1 - a) * g2
        best_norm = best @ best
        for astar in np.linspace(0.0, 1.0, 101):
            v = astar * g1 + (1 - astar) * g2
            assert best_norm <= v @ v + 1e-8


def test_scale_invariance():
    rng = Rng(36)
    g1 = rng.uniform_array((10,), -1.0, 1.0)
    g2 = rng.uniform_array((10,), -1.0, 1.0)
    a = mgda_alpha(g1, g2)
    for c in (1e-3, 7.0, 1e3):
        assert abs(mgda_alpha(c * g1, c * g2) - a) <= 1e-10


def test_nonfinite_gradients_rejected():
    with pytest.raises(ValueError):
        mgda_alpha(np.array([np.nan, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        mgda_alpha(np.array([1.0]), np.array([1.0, 2.0]))


# --------------------------------------------------------------- joint step


def test_toy_quadratic_joint_step():
    # L1 = t1^2, L2 = (t1 - 2)^2 + t2^2 at t1=1, t2=2
    grads = TaskGradients(
        g1=np.array([2.0]), g2=np.array([-2.0]), h2=np.array([4.0])
    )
    t1, t2, alpha = joint_step(
        np.array([1.0]), np.array([2.0]), grads, eta=0.1,
        mode=JointMode("mgda"),
    )
    assert alpha == 0.5
    assert np.allclose(t1, 1.0)
    assert np.allclose(t2, 1.6)


def test_constant_zero_uses_second_gradient_only():
    grads = TaskGradients(
        g1=np.array([5.0, 5.0]), g2=np.array([1.0, -1.0]), h2=np.array([0.0])
    )
    t1, _, alpha = joint_step(
        np.zeros(2), np.zeros(1), grads, eta=1.0,
        mode=JointMode("constant", alpha=0.0),
    )
    assert alpha == 0.0
    assert np.allclose(t1, [-1.0, 1.0])


def test_zero_step_size_is_identity():
    grads = TaskGradients(np.ones(3), -np.ones(3), np.ones(2))
    t1, t2, _ = joint_step(
        np.arange(3.0), np.arange(2.0), grads, eta=0.0,
        mode=JointMode("constant", alpha=0.3),
    )
    assert np.array_equal(t1, np.arange(3.0))
    assert np.array_equal(t2, np.arange(2.0))


def test_constant_mode_replays_mgda_update():
    rng = Rng(37)
    grads = TaskGradients(
        g1=rng.uniform_array((7,), -1.0, 1.0),
        g2=rng.uniform_array((7,), -1.0, 1.0),
        h2=rng.uniform_array((4,), -1.0, 1.0),
    )
    theta1, theta2 = np.zeros(7), np.zeros(4)
    t1a, t2a, a = joint_step(theta1, theta2, grads, 0.2, JointMode("mgda"))
    t1b, t2b, _ = joint_step(
        theta1, theta2, grads, 0.2, JointMode("constant", alpha=a)
    )
    assert np.array_equal(t1a, t1b)
    assert np.array_equal(t2a, t2b)


def test_mode_parsing():
    assert JointMode.parse("separate").kind == "separate"
    assert JointMode.parse("mgda").kind == "mgda"
    m = JointMode.parse("constant:0.25")
    assert m.kind == "constant" and m.alpha == 0.25
    m = JointMode.parse("sched:0.2,0.1")
    assert m.kind == "sched" and m.gamma == 0.2 and m.lam == 0.1
    with pytest.raises(ValueError):
        JointMode.parse("constant:1.5")
    with pytest.raises(ValueError):
        JointMode.parse("banana")


def test_separate_mode_has_no_single_weight():
    grads = TaskGradients(np.ones(1), np.ones(1), np.ones(1))
    with pytest.raises(ValueError):
        resolve_alpha(JointMode("separate"), grads)


# ---------------------------------------------------------------- scheduler


def test_schedule_starts_at_one():
    for gamma, lam in [(0.1, 0.1), (0.2, 0.1), (0.2, 0.3), (0.5, 0.3)]:
        cfg = SchedulerConfig(gamma=gamma, lam=lam, total=1000, step=1)
        assert scale_schedule(cfg) == 1.0


def test_schedule_hits_lam_at_split():
    for gamma, lam in [(0.1, 0.1), (0.2, 0.1), (0.2, 0.3), (0.5, 0.3)]:
        m = int(round(gamma * 1000))
        cfg = SchedulerConfig(gamma=gamma, lam=lam, total=1000, step=m)
        assert abs(scale_schedule(cfg) - lam) <= 1e-9


def test_schedule_zero_in_tail():
    for gamma, lam in [(0.1, 0.1), (0.2, 0.1), (0.2, 0.3), (0.5, 0.3)]:
        total = 1000
        m = max(int(round((1 - gamma) * total)), int(round(gamma * total)) + 1)
        cfg = SchedulerConfig(gamma=gamma, lam=lam, total=total, step=m)
        assert scale_schedule(cfg) == 0.0
        cfg.step = total
        assert scale_schedule(cfg) == 0.0


def test_schedule_nonincreasing_and_bounded_on_first_branch():
    for gamma, lam in [(0.1, 0.1), (0.2, 0.1), (0.2, 0.3), (0.5, 0.3)]:
        total = 1000
        vals = [
            scale_schedule(SchedulerConfig(gamma, lam, total, m))
            for m in range(1, int(gamma * total) + 1)
        ]
        diffs = np.diff(vals)
        assert (diffs <= 1e-12).all()
        assert all(0.0 <= v <= 1.0 for v in vals)


def test_schedule_bounded_everywhere():
    vals = [
        scale_schedule(SchedulerConfig(0.2, 0.3, 500, m))
        for m in range(1, 501)
    ]
    assert all(0.0 <= v <= 1.0 for v in vals)


def test_schedule_lam_one_stays_at_one_before_split():
    for m in (1, 10, 100):
        assert scale_schedule(SchedulerConfig(0.5, 1.0, 200, m)) == 1.0


def test_scheduler_config_validation():
    with pytest.raises(ValueError):
        scale_schedule(SchedulerConfig(0.0, 0.5, 100, 1))
    with pytest.raises(ValueError):
        scale_schedule(SchedulerConfig(0.5, 0.0, 100, 1))
    with pytest.raises(ValueError):
        scale_schedule(SchedulerConfig(0.5, 0.5, 100, 0))
