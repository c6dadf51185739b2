"""Model-output parsing, the relaxed-accuracy protocol, and run reports.

Parsing is deliberately blind to the answer key: "75%" always becomes 75,
"1.2 million" always becomes 1200000, and when several numbers appear the
last complete one wins. A prediction is correct iff it falls inside the
closed interval |pred - gt| <= tau * |gt| (tau defaults to 0.02), the
absolute-value form keeping negative ground truths symmetric.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .errors import ConfigError, InputError
from .qa_engine import REAL_TYPE_ORDER, SYNTHETIC_TYPE_ORDER, Dataset

PARSE_MODES = ("direct", "optional_cot", "forced_cot")

_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)

# Sign, optional currency symbol, then either a strict thousands-grouped
# number or a plain decimal. "%" is never consumed: percent answers strip
# to the bare number.
_NUMBER_RE = re.compile(
    r"[-+]?[$€£¥]?(?:\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+)"
)
_MULTIPLIERS = {"thousand": 1e3, "million": 1e6, "billion": 1e9}
_MULTIPLIER_RE = re.compile(r"\s*(thousand|million|billion)\b", re.IGNORECASE)


@dataclass(frozen=True)
class ModelResponse:
    raw_text: str
    think_text: Optional[str] = None
    answer_text: Optional[str] = None
    answer_value: Optional[float] = None
    parse_status: str = "ok"  # ok | missing_tags | unparseable_number


def extract_number(text: str) -> Optional[float]:
    """Last complete number in the text, with word multipliers applied."""
    value = None
    for m in _NUMBER_RE.finditer(text):
        token = m.group(0)
        sign = -1.0 if token.startswith("-") else 1.0
        cleaned = token.lstrip("+-").lstrip("$€£¥").replace(",", "")
        if not cleaned or cleaned == ".":
            continue
        v = sign * float(cleaned)
        mult = _MULTIPLIER_RE.match(text, m.end())
        if mult:
            v *= _MULTIPLIERS[mult.group(1).lower()]
        value = v
    return value


def parse_response(raw_text: str, mode: str = "forced_cot") -> ModelResponse:
    """Parse one model output under the given prompting strategy.

    forced_cot requires both <think> and <answer> blocks; optional_cot
    uses the <answer> block when present and otherwise falls back to the
    trailing number; direct takes the trailing number of the whole text.
    """
    if mode not in PARSE_MODES:
        raise ConfigError(f"unknown parse mode '{mode}'; expected one of {PARSE_MODES}")

    think = _THINK_RE.search(raw_text)
    answer = _ANSWER_RE.search(raw_text)
    think_text = think.group(1).strip() if think else None
    answer_text = answer.group(1).strip() if answer else None

    def fail(status: str) -> ModelResponse:
        return ModelResponse(raw_text=raw_text, think_text=think_text,
                             answer_text=answer_text, parse_status=status)

    if mode == "forced_cot":
        # An unparseable answer block is the more informative diagnosis,
        # so it is checked before the missing-think case.
        if answer is None:
            return fail("missing_tags")
        value = extract_number(answer.group(1))
        if value is None:
            return fail("unparseable_number")
        if think is None:
            return fail("missing_tags")
    elif mode == "optional_cot" and answer is not None:
        value = extract_number(answer.group(1))
        if value is None:
            return fail("unparseable_number")
    else:
        value = extract_number(raw_text)
        if value is None:
            return fail("unparseable_number")

    return ModelResponse(
        raw_text=raw_text,
        think_text=think_text,
        answer_text=answer_text,
        answer_value=value,
        parse_status="ok",
    )


def relaxed_match(a_pred: float, a_gt: float, tau: float = 0.02) -> bool:
    """Closed-interval relative-tolerance check; a_gt must be nonzero."""
    if a_gt == 0:
        raise ValueError("relaxed_match requires a nonzero ground truth")
    if tau <= 0:
        raise ValueError("tau must be positive")
    return abs(a_pred - a_gt) <= tau * abs(a_gt)


# ---------------------------------------------------------------------------
# Run evaluation
# ---------------------------------------------------------------------------

REPORT_CELLS = tuple(
    [("synthetic", t) for t in SYNTHETIC_TYPE_ORDER] + [("real", t) for t in REAL_TYPE_ORDER]
)


@dataclass(frozen=True)
class EvalCell:
    source: str
    chart_type: str
    n: int
    correct: int

    @property
    def accuracy(self) -> float:
        return 100.0 * self.correct / self.n if self.n else 0.0


@dataclass(frozen=True)
class EvalReport:
    cells: tuple[EvalCell, ...]
    missing: int
    unparseable: int
    tau: float

    @property
    def total_n(self) -> int:
        return sum(c.n for c in self.cells)

    @property
    def total_correct(self) -> int:
        return sum(c.correct for c in self.cells)

    @property
    def overall(self) -> float:
        return 100.0 * self.total_correct / self.total_n if self.total_n else 0.0

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "cells": [
                {
                    "source": c.source,
                    "chart_type": c.chart_type,
                    "n": c.n,
                    "correct": c.correct,
                    "accuracy": round(c.accuracy, 4),
                }
                for c in self.cells
            ],
            "overall": {
                "n": self.total_n,
                "correct": self.total_correct,
                "accuracy": round(self.overall, 4),
            },
            "missing": self.missing,
            "unparseable": self.unparseable,
        }


def evaluate_run(responses, dataset: Dataset, tau: float = 0.02) -> EvalReport:
    """Score (item_id, ModelResponse) pairs against a dataset.

    Unparseable responses and items with no response at all count as
    incorrect; the latter are tallied in the ``missing`` diagnostic.
    """
    known = set(dataset.manifest.items)
    by_id: dict[str, ModelResponse] = {}
    for item_id, resp in responses:
        if item_id not in known:
            raise InputError(f"response references unknown item id '{item_id}'")
        by_id[item_id] = resp

    tallies = {key: [0, 0] for key in REPORT_CELLS}  # (source, type) -> [n, correct]
    missing = 0
    unparseable = 0
    for item in dataset.ordered_items():
        key = (item.source, item.chart_type.value)
        tallies[key][0] += 1
        resp = by_id.get(item.item_id)
        if resp is None:
            missing += 1
            continue
        if resp.parse_status != "ok" or resp.answer_value is None:
            unparseable += 1
            continue
        if relaxed_match(resp.answer_value, item.answer_gt, tau):
            tallies[key][1] += 1

    cells = tuple(
        EvalCell(source=src, chart_type=t, n=tallies[(src, t)][0], correct=tallies[(src, t)][1])
        for src, t in REPORT_CELLS
    )
    return EvalReport(cells=cells, missing=missing, unparseable=unparseable, tau=tau)


def format_report_table(report: EvalReport) -> str:
    """Aligned text table mirroring the benchmark's column order."""
    width = 9
    syn = [c for c in report.cells if c.source == "synthetic"]
    real = [c for c in report.cells if c.source == "real"]
    header_groups = (
        " " * 10
        + f"{'Synthetic Charts':^{width * len(syn)}}"
        + f"{'Real Charts':^{width * len(real)}}"
        + f"{'Overall':>{width}}"
    )
    names = (
        f"{'':10}"
        + "".join(f"{c.chart_type.title():>{width}}" for c in syn + real)
        + f"{'':>{width}}"
    )
    acc_row = (
        f"{'Accuracy':10}"
        + "".join(f"{c.accuracy:>{width}.2f}" for c in syn + real)
        + f"{report.overall:>{width}.2f}"
    )
    n_row = (
        f"{'N':10}"
        + "".join(f"{c.n:>{width}d}" for c in syn + real)
        + f"{report.total_n:>{width}d}"
    )
    footer = f"tau={report.tau}  missing={report.missing}  unparseable={report.unparseable}"
    return "\n".join([header_groups, names, acc_row, n_row, footer]) + "\n"
