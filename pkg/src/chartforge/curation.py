"""Multi-round inference logging, boundary filtering, and CoT distillation.

The boundary filter selects items a model answers correctly in at least
one inference round and incorrectly in at least one other: the cases that
carry the most training signal for group-relative RL. Rounds vary the
prompting mode and sampling temperature (0.9 for the stochastic rounds by
default). Distilled reasoning chains pass three gates before acceptance:
a structural tag check, answer verification at the relaxed tolerance, and
a scan for phrases that leak the provided answer.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import AuthError, ConfigError, TransportError
from .gen_client import SYSTEM_QA, load_prompt
from .qa_engine import Dataset, QaItem
from .response_eval import PARSE_MODES, extract_number, parse_response, relaxed_match
from .serialize import append_jsonl, read_jsonl, write_canonical_json

DEFAULT_ROUND_PLAN = (
    ("direct", 0.0),
    ("direct", 0.9),
    ("forced_cot", 0.9),
    ("optional_cot", 0.9),
)

DEFAULT_LEAK_PHRASES = ("original answer", "given answer", "ground truth", "provided answer")

# Production-scale target counts; desk-scale runs pass something <= 50.
DEFAULT_SFT_TARGET = 68_500
DEFAULT_RL_TARGET = 3_400

# Consecutive transport failures within a round that indicate the endpoint
# is down rather than flaky; the round aborts with the log persisted.
ABORT_AFTER_CONSECUTIVE_FAILURES = 5


@dataclass
class RoundResult:
    round_index: int
    prompt_mode: str
    temperature: float
    raw_text: str
    correct: bool
    error: Optional[str] = None

    def to_dict(self, item_id: str) -> dict:
        return {
            "item_id": item_id,
            "round_index": self.round_index,
            "prompt_mode": self.prompt_mode,
            "temperature": self.temperature,
            "raw_text": self.raw_text,
            "correct": self.correct,
            "error": self.error,
        }


@dataclass
class InferenceLog:
    rows: dict[str, list[RoundResult]] = field(default_factory=dict)

    def add(self, item_id: str, result: RoundResult) -> None:
        self.rows.setdefault(item_id, []).append(result)

    def has(self, item_id: str, round_index: int) -> bool:
        return any(r.round_index == round_index for r in self.rows.get(item_id, []))

    def save(self, path) -> None:
        records = []
        for item_id in sorted(self.rows):
            for r in sorted(self.rows[item_id], key=lambda x: x.round_index):
                records.append(r.to_dict(item_id))
        from .serialize import write_jsonl

        write_jsonl(path, records)


class RoundAborted(TransportError):
    """Endpoint went hard-down mid-run; partial log was persisted."""

    def __init__(self, message, log: InferenceLog):
        super().__init__(message)
        self.log = log


def load_inference_log(path) -> InferenceLog:
    log = InferenceLog()
    for row in read_jsonl(path):
        log.add(
            str(row["item_id"]),
            RoundResult(
                round_index=int(row["round_index"]),
                prompt_mode=str(row["prompt_mode"]),
                temperature=float(row["temperature"]),
                raw_text=str(row.get("raw_text", "")),
                correct=bool(row["correct"]),
                error=row.get("error"),
            ),
        )
    return log


def _score_round(item: QaItem, raw_text: str, mode: str, tau: float) -> bool:
    resp = parse_response(raw_text, mode)
    if resp.parse_status != "ok" or resp.answer_value is None:
        return False
    return relaxed_match(resp.answer_value, item.answer_gt, tau)


def run_rounds(
    dataset: Dataset,
    client,
    plan=DEFAULT_ROUND_PLAN,
    concurrency_limit: int = 1,
    tau: float = 0.02,
    log_path=None,
    resume: bool = False,
) -> InferenceLog:
    """One RoundResult per (item, plan entry), persisted as it goes.

    Individual transport failures are recorded as incorrect with an error
    note, never dropped. A run of consecutive transport failures (or any
    auth failure) aborts the round: the log written so far plus a cursor
    file survive, and a rerun with resume=True skips completed units.
    """
    plan = list(plan)
    if not plan:
        raise ConfigError("round plan must be non-empty")
    for mode, _temp in plan:
        if mode not in PARSE_MODES:
            raise ConfigError(f"unknown prompt mode '{mode}' in round plan")

    log = InferenceLog()
    if resume and log_path and Path(log_path).exists():
        log = load_inference_log(log_path)
    elif log_path:
        Path(log_path).write_text("", encoding="utf-8")

    items = dataset.ordered_items()
    templates = {mode: load_prompt(mode) for mode, _ in plan}

    def ask(item: QaItem, round_index: int, mode: str, temperature: float) -> RoundResult:
        prompt = templates[mode].format(question=item.question)
        image = dataset.image_path(item)
        try:
            raw = client.complete(
                SYSTEM_QA, prompt,
                image=str(image) if image.exists() else None,
                temperature=temperature,
            )
            error = None
        except TransportError as exc:
            raw, error = "", f"transport error: {exc}"
        correct = _score_round(item, raw, mode, tau) if not error else False
        return RoundResult(round_index, mode, temperature, raw, correct, error)

    for round_index, (mode, temperature) in enumerate(plan):
        todo = [it for it in items if not log.has(it.item_id, round_index)]
        if not todo:
            continue
        pairs: list[tuple[QaItem, RoundResult]] = []
        try:
            if concurrency_limit > 1:
                with ThreadPoolExecutor(max_workers=concurrency_limit) as pool:
                    futures = [pool.submit(ask, it, round_index, mode, temperature) for it in todo]
                    for it, fut in zip(todo, futures):
                        pairs.append((it, fut.result()))
            else:
                consecutive = 0
                for it in todo:
                    res = ask(it, round_index, mode, temperature)
                    pairs.append((it, res))
                    consecutive = consecutive + 1 if res.error else 0
                    if consecutive >= ABORT_AFTER_CONSECUTIVE_FAILURES:
                        raise RoundAborted(
                            f"round {round_index} aborted after {consecutive} "
                            "consecutive transport failures",
                            log,
                        )
        except RoundAborted:
            _commit(log, pairs, log_path, round_index, aborted=True)
            raise
        except AuthError as exc:
            _commit(log, pairs, log_path, round_index, aborted=True)
            raise RoundAborted(f"round {round_index} aborted: {exc}", log) from exc

        _commit(log, pairs, log_path, round_index, aborted=False)
        if concurrency_limit > 1 and _longest_failure_run(pairs) >= ABORT_AFTER_CONSECUTIVE_FAILURES:
            raise RoundAborted(
                f"round {round_index} aborted: endpoint failing consistently", log
            )
    return log


def _longest_failure_run(pairs) -> int:
    longest = current = 0
    for _, res in pairs:
        current = current + 1 if res.error else 0
        longest = max(longest, current)
    return longest


def _commit(log: InferenceLog, pairs, log_path, round_index: int, aborted: bool) -> None:
    for item, res in pairs:
        if not log.has(item.item_id, res.round_index):
            log.add(item.item_id, res)
            if log_path:
                append_jsonl(log_path, res.to_dict(item.item_id))
    if log_path:
        cursor = {
            "next_round_index": round_index if aborted else round_index + 1,
            "rows_written": sum(len(v) for v in log.rows.values()),
            "aborted": aborted,
        }
        write_canonical_json(Path(str(log_path) + ".cursor.json"), cursor)


def boundary_filter(log: InferenceLog) -> set[str]:
    """Items answered correctly in >=1 round and incorrectly in >=1 other."""
    out = set()
    for item_id, rounds in log.rows.items():
        flags = [r.correct for r in rounds]
        if any(flags) and not all(flags):
            out.add(item_id)
    return out


# ---------------------------------------------------------------------------
# CoT distillation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CotSample:
    item_id: str
    chart_ref: str
    question: str
    think_text: str
    answer_text: str
    source_model: str

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "chart_ref": self.chart_ref,
            "question": self.question,
            "think": self.think_text,
            "answer": self.answer_text,
            "source_model": self.source_model,
        }


@dataclass(frozen=True)
class CotValidation:
    status: str  # accepted | missing_tags | wrong_answer | leakage
    think_text: Optional[str] = None
    answer_text: Optional[str] = None

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"


def validate_cot(raw_text: str, a_gt: float, leak_phrases=DEFAULT_LEAK_PHRASES,
                 tau: float = 0.02) -> CotValidation:
    """Structural check, then answer verification, then leakage detection."""
    if a_gt == 0:
        raise ValueError("validate_cot requires a nonzero ground truth")
    think = re.search(r"<think>(.*?)</think>", raw_text, re.DOTALL)
    answer = re.search(r"<answer>(.*?)</answer>", raw_text, re.DOTALL)
    well_nested = think and answer and answer.start() >= think.end()
    if not well_nested or not think.group(1).strip() or not answer.group(1).strip():
        return CotValidation(status="missing_tags")
    think_text = think.group(1).strip()
    answer_text = answer.group(1).strip()

    value = extract_number(answer_text)
    if value is None or not relaxed_match(value, a_gt, tau):
        return CotValidation(status="wrong_answer", think_text=think_text, answer_text=answer_text)

    lowered = think_text.lower()
    if any(phrase.lower() in lowered for phrase in leak_phrases):
        return CotValidation(status="leakage", think_text=think_text, answer_text=answer_text)

    return CotValidation(status="accepted", think_text=think_text, answer_text=answer_text)


@dataclass
class DistillResult:
    samples: list[CotSample]
    stats: dict

    @property
    def shortfall(self) -> int:
        return self.stats.get("shortfall", 0)


def distill_cot(
    dataset: Dataset,
    teacher_client,
    target_count: int,
    max_attempts_per_item: int = 3,
    leak_phrases=DEFAULT_LEAK_PHRASES,
    tau: float = 0.02,
    source_model: str = "teacher",
) -> DistillResult:
    """Collect validated reasoning chains until the target count is reached.

    Only samples that survive all three validation gates are emitted.
    Per-category rejection counts are reported; if the items run out
    before the target is met the result carries the shortfall.
    """
    from .scales import format_number

    template = load_prompt("distill")
    samples: list[CotSample] = []
    stats = {"accepted": 0, "missing_tags": 0, "wrong_answer": 0, "leakage": 0,
             "transport_error": 0}

    for item in dataset.ordered_items():
        if len(samples) >= target_count:
            break
        prompt = template.format(question=item.question, answer=format_number(item.answer_gt))
        image = dataset.image_path(item)
        for _attempt in range(max_attempts_per_item):
            try:
                raw = teacher_client.complete(
                    SYSTEM_QA, prompt, image=str(image) if image.exists() else None
                )
            except TransportError:
                stats["transport_error"] += 1
                break
            verdict = validate_cot(raw, item.answer_gt, leak_phrases, tau)
            stats[verdict.status] += 1
            if verdict.accepted:
                samples.append(
                    CotSample(
                        item_id=item.item_id,
                        chart_ref=item.chart_ref,
                        question=item.question,
                        think_text=verdict.think_text,
                        answer_text=verdict.answer_text,
                        source_model=source_model,
                    )
                )
                break

    stats["shortfall"] = max(0, target_count - len(samples))
    return DistillResult(samples=samples, stats=stats)
