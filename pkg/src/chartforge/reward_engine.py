"""Reward components and group-relative advantage normalization.

Total reward is the sum of two independent parts: a binary format reward
for strict adherence to the <think>/<answer> template, and a continuous
accuracy reward that decays quadratically from 1 to 0 as the relative
error approaches the tolerance epsilon (default 0.02):

    acc(d) = (1 - d / eps)^2  if d < eps, else 0

The quadratic keeps a gentle slope near zero error and an accelerating
penalty toward the tolerance edge. Advantages normalize each reward
against its group's mean and population standard deviation; all-equal
groups yield all-zero advantages instead of dividing by ~0.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional

from .response_eval import extract_number

_TEMPLATE_RE = re.compile(r"\A\s*<think>(.*?)</think>\s*<answer>(.*?)</answer>\s*\Z", re.DOTALL)
_ANSWER_BLOCK_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_ANY_TAG_RE = re.compile(r"</?(?:think|answer)>")

DEFAULT_EPSILON = 0.02
DEFAULT_STD_GUARD = 1e-8


@dataclass(frozen=True)
class RewardBreakdown:
    format_reward: int
    accuracy_reward: float
    total: float
    d_rel: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "format_reward": self.format_reward,
            "accuracy_reward": self.accuracy_reward,
            "total": self.total,
            "d_rel": self.d_rel,
        }


@dataclass(frozen=True)
class GroupRewards:
    group_size: int
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]


def format_reward(raw_text: str) -> int:
    """1 iff the response is exactly one think block then one answer block.

    Both blocks must be non-empty (after stripping whitespace), contain no
    stray template tags, and nothing but whitespace may surround them.
    """
    m = _TEMPLATE_RE.match(raw_text)
    if not m:
        return 0
    think, answer = m.group(1), m.group(2)
    if not think.strip() or not answer.strip():
        return 0
    if _ANY_TAG_RE.search(think) or _ANY_TAG_RE.search(answer):
        return 0
    return 1


def relative_error(a_pred: float, a_gt: float) -> float:
    """|pred - gt| / |gt|; the ground truth must be nonzero."""
    if a_gt == 0:
        raise ValueError("relative error is undefined for ground truth 0")
    return abs(a_pred - a_gt) / abs(a_gt)


def accuracy_reward(d_rel: float, epsilon: float = DEFAULT_EPSILON) -> float:
    """Quadratic decay from 1 at d_rel=0 to 0 at d_rel=epsilon; 0 beyond."""
    if d_rel < 0:
        raise ValueError("relative error must be nonnegative")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if d_rel >= epsilon:
        return 0.0
    return (1.0 - d_rel / epsilon) ** 2


def total_reward(raw_text: str, a_gt: float, epsilon: float = DEFAULT_EPSILON) -> RewardBreakdown:
    """Format plus accuracy, computed independently.

    A response that breaks the template can still earn accuracy reward if
    a number is extractable from an <answer> block; without such a block
    the accuracy component is 0.
    """
    if a_gt == 0:
        raise ValueError("total_reward requires a nonzero ground truth")
    fmt = format_reward(raw_text)
    acc = 0.0
    d_rel = None
    answer = _ANSWER_BLOCK_RE.search(raw_text)
    if answer is not None:
        value = extract_number(answer.group(1))
        if value is not None:
            d_rel = relative_error(value, a_gt)
            acc = accuracy_reward(d_rel, epsilon)
    return RewardBreakdown(format_reward=fmt, accuracy_reward=acc, total=fmt + acc, d_rel=d_rel)


def group_advantages(rewards, std_guard: float = DEFAULT_STD_GUARD) -> list[float]:
    """Normalize rewards within one group: (r - mean) / population std.

    Groups whose rewards are (numerically) all equal get zero advantages,
    the fixed point of "no preference signal".
    """
    rewards = [float(r) for r in rewards]
    n = len(rewards)
    if n < 2:
        raise ValueError(f"advantage normalization needs a group of >=2, got {n}")
    mean = sum(rewards) / n
    var = sum((r - mean) ** 2 for r in rewards) / n
    std = math.sqrt(var)
    if std < std_guard:
        return [0.0] * n
    return [(r - mean) / std for r in rewards]


def normalize_group(rewards, std_guard: float = DEFAULT_STD_GUARD) -> GroupRewards:
    rewards = tuple(float(r) for r in rewards)
    return GroupRewards(
        group_size=len(rewards),
        rewards=rewards,
        advantages=tuple(group_advantages(rewards, std_guard)),
    )
