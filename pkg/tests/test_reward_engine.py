from __future__ import annotations

import random

import numpy as np
import pytest

from chartforge.reward_engine import (
    GroupRewards,
    RewardBreakdown,
    accuracy_reward,
    format_reward,
    group_advantages,
    normalize_group,
    relative_error,
    total_reward,
)


# ---------------------------------------------------------------------------
# Format reward
# ---------------------------------------------------------------------------


def test_strict_template_earns_format_reward():
    assert format_reward("<think>a</think><answer>5</answer>") == 1
    assert format_reward("  <think>a</think>\n<answer>5</answer>\n") == 1


def test_missing_think_block_fails_format():
    assert format_reward("<answer>5</answer>") == 0


def test_trailing_text_fails_strict_adherence():
    assert format_reward("<think>a</think><answer>5</answer> extra") == 0
    assert format_reward("preamble <think>a</think><answer>5</answer>") == 0


def test_empty_blocks_fail_format():
    assert format_reward("<think></think><answer>5</answer>") == 0
    assert format_reward("<think>a</think><answer>  </answer>") == 0


def test_duplicated_blocks_fail_format():
    assert format_reward("<think>a</think><answer>1</answer><answer>2</answer>") == 0


# ---------------------------------------------------------------------------
# Relative error
# ---------------------------------------------------------------------------


def test_relative_error_direct_evaluation():
    assert relative_error(101, 100) == pytest.approx(0.01, abs=1e-15)
    assert relative_error(100, 100) == 0.0
    assert relative_error(-49, -50) == pytest.approx(0.02, abs=1e-15)


def test_relative_error_requires_nonzero_ground_truth():
    with pytest.raises(ValueError):
        relative_error(1.0, 0.0)


def test_relative_error_joint_sign_flip():
    rng = random.Random(3)
    for _ in range(200):
        a, g = rng.uniform(0.1, 100), rng.uniform(0.1, 100)
        assert relative_error(a, g) == relative_error(-a, -g)


# ---------------------------------------------------------------------------
# Accuracy reward: piecewise quadratic
# ---------------------------------------------------------------------------


def test_quadratic_endpoints_and_quarter_point():
    assert accuracy_reward(0.0) == 1.0
    assert accuracy_reward(0.01, 0.02) == 0.25  # (1 - 0.5)^2
    assert accuracy_reward(0.02) == 0.0
    assert accuracy_reward(0.05) == 0.0


def test_quadratic_closed_form_grid():
    eps = 0.02
    for d in (0.0, 0.001, 0.005, 0.01, 0.015, 0.019, 0.02, 0.05):
        expected = (1 - d / eps) ** 2 if d < eps else 0.0
        assert abs(accuracy_reward(d, eps) - expected) < 1e-12


def test_negative_error_is_a_domain_error():
    with pytest.raises(ValueError):
        accuracy_reward(-0.001)
    with pytest.raises(ValueError):
        accuracy_reward(0.01, epsilon=0.0)


def test_monotone_decay_and_bounds():
    rng = random.Random(8)
    for _ in range(1000):
        d1, d2 = sorted((rng.uniform(0, 0.1), rng.uniform(0, 0.1)))
        r1, r2 = accuracy_reward(d1), accuracy_reward(d2)
        assert r1 >= r2
        assert 0.0 <= r1 <= 1.0 and 0.0 <= r2 <= 1.0


def test_finite_difference_slope_follows_the_quadratic():
    # (1 - d/eps)^2 is convex decreasing: |slope| = 2(1 - d/eps)/eps, so the
    # decay is steepest near zero error and flattens toward the tolerance.
    h = 1e-6
    slope_near_zero = abs(accuracy_reward(0.001 + h) - accuracy_reward(0.001 - h)) / (2 * h)
    slope_near_edge = abs(accuracy_reward(0.018 + h) - accuracy_reward(0.018 - h)) / (2 * h)
    assert slope_near_zero == pytest.approx(2 * (1 - 0.001 / 0.02) / 0.02, rel=1e-6)
    assert slope_near_edge == pytest.approx(2 * (1 - 0.018 / 0.02) / 0.02, rel=1e-6)
    assert slope_near_zero > slope_near_edge


def test_curve_shape_is_strictly_convex_inside_tolerance():
    assert accuracy_reward(0.0) == 1.0
    assert accuracy_reward(0.02) == 0.0
    rng = random.Random(12)
    for _ in range(300):
        a, b = sorted((rng.uniform(0, 0.0199), rng.uniform(0, 0.0199)))
        if b - a < 1e-6:
            continue
        mid = (a + b) / 2
        assert accuracy_reward(mid) < (accuracy_reward(a) + accuracy_reward(b)) / 2


def test_continuity_at_the_tolerance_edge():
    eps = 0.02
    just_inside = accuracy_reward(eps - 1e-12, eps)
    assert just_inside == pytest.approx(0.0, abs=1e-15)
    assert accuracy_reward(eps, eps) == 0.0


def test_reward_is_one_only_at_zero_error():
    assert accuracy_reward(0.0) == 1.0
    for d in (1e-9, 1e-6, 0.001, 0.0199):
        assert accuracy_reward(d) < 1.0


# ---------------------------------------------------------------------------
# Total reward
# ---------------------------------------------------------------------------


def test_perfect_response_totals_two():
    b = total_reward("<think>a</think><answer>80</answer>", 80.0)
    assert b == RewardBreakdown(format_reward=1, accuracy_reward=1.0, total=2.0, d_rel=0.0)


def test_out_of_tolerance_keeps_format_point():
    b = total_reward("<think>a</think><answer>104</answer>", 100.0)
    assert b.format_reward == 1
    assert b.accuracy_reward == 0.0
    assert b.total == 1.0
    assert b.d_rel == pytest.approx(0.04)


def test_garbage_scores_zero():
    b = total_reward("garbage", 100.0)
    assert b.total == 0.0 and b.d_rel is None


def test_wrong_format_can_still_earn_accuracy():
    b = total_reward("preamble <answer>100</answer>", 100.0)
    assert b.format_reward == 0
    assert b.accuracy_reward == 1.0


def test_no_answer_block_means_no_accuracy():
    b = total_reward("the answer is 100", 100.0)
    assert b.accuracy_reward == 0.0 and b.format_reward == 0


def test_total_reward_requires_nonzero_ground_truth():
    with pytest.raises(ValueError):
        total_reward("<answer>1</answer>", 0.0)


def test_breakdown_invariants_hold_over_random_inputs():
    rng = random.Random(5)
    for _ in range(500):
        gt = rng.choice([-1, 1]) * rng.uniform(0.5, 500)
        pred = gt * (1 + rng.uniform(-0.1, 0.1))
        text = f"<think>t</think><answer>{pred}</answer>"
        b = total_reward(text, gt)
        assert b.total == b.format_reward + b.accuracy_reward
        assert 0.0 <= b.total <= 2.0
        if b.accuracy_reward > 0:
            assert b.d_rel < 0.02


# ---------------------------------------------------------------------------
# Group advantages
# ---------------------------------------------------------------------------


def test_two_element_group():
    assert group_advantages([2, 0]) == [1.0, -1.0]


def test_degenerate_group_yields_zeros():
    assert group_advantages([1, 1, 1, 1]) == [0.0, 0.0, 0.0, 0.0]


def test_matches_two_pass_mean_std_oracle():
    rewards = [1.0, 0.25, 0.0, 0.0]
    expected = ((np.array(rewards) - np.mean(rewards)) / np.std(rewards)).tolist()
    got = group_advantages(rewards)
    assert got == pytest.approx(expected, abs=1e-9)


def test_group_smaller_than_two_is_a_domain_error():
    with pytest.raises(ValueError):
        group_advantages([1.0])


def test_normalization_statistics_over_random_groups():
    rng = random.Random(21)
    for _ in range(300):
        g = rng.randint(2, 16)
        rewards = [rng.uniform(0, 2) for _ in range(g)]
        adv = group_advantages(rewards)
        if np.std(rewards) > 1e-8:
            assert abs(np.mean(adv)) <= 1e-9
            assert abs(np.std(adv) - 1.0) <= 1e-9
        else:
            assert adv == [0.0] * g


def test_affine_invariance_of_advantages():
    rng = random.Random(22)
    for _ in range(300):
        g = rng.randint(2, 12)
        rewards = [rng.uniform(-5, 5) for _ in range(g)]
        if np.std(rewards) <= 1e-8:
            continue
        alpha = rng.uniform(0.1, 10)
        beta = rng.uniform(-100, 100)
        base = group_advantages(rewards)
        scaled = group_advantages([alpha * r + beta for r in rewards])
        assert scaled == pytest.approx(base, abs=1e-9)


def test_normalize_group_invariants():
    g = normalize_group([1.0, 0.5, 0.0])
    assert isinstance(g, GroupRewards)
    assert g.group_size == 3
    assert len(g.advantages) == 3
    assert abs(sum(g.advantages)) <= 1e-9
