"""Acceptance suite: one test per criterion, one pass/fail line each.

Run with: pytest tests/test_acceptance.py -v -s
"""

from __future__ import annotations

import json
import random
import time
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from chartforge.chart_model import ChartType, DEFAULT_TOPICS, sample_spec
from chartforge.cli import main
from chartforge.curation import (
    InferenceLog,
    RoundResult,
    boundary_filter,
    distill_cot,
    validate_cot,
)
from chartforge.gen_client import MockChatClient
from chartforge.qa_engine import (
    DEFAULT_REAL_COUNTS,
    DEFAULT_SYNTHETIC_COUNTS,
    Dataset,
    DatasetManifest,
    QaItem,
    load_dataset,
)
from chartforge.renderer import annotation_leaks, render
from chartforge.response_eval import evaluate_run, parse_response, relaxed_match
from chartforge.reward_engine import accuracy_reward, group_advantages, relative_error
from chartforge.serialize import read_jsonl


def _report(criterion: int, name: str, ok: bool, elapsed: float, limit: float | None = None):
    status = "PASS" if ok else "FAIL"
    budget = f" ({elapsed:.2f}s" + (f" < {limit:.0f}s limit)" if limit else ")")
    print(f"[criterion {criterion}] {name}: {status}{budget}")
    assert ok, f"criterion {criterion} failed"
    if limit is not None:
        assert elapsed < limit, f"criterion {criterion} exceeded {limit}s ({elapsed:.2f}s)"


def _memory_dataset(items: list[QaItem], seed: int = 0) -> Dataset:
    counts: dict = {"synthetic": {}, "real": {}}
    for it in items:
        counts[it.source][it.chart_type.value] = counts[it.source].get(it.chart_type.value, 0) + 1
    manifest = DatasetManifest(
        dataset_id="ds-memory",
        items=tuple(it.item_id for it in items),
        counts=counts,
        seed=seed,
    )
    return Dataset(root=Path("."), manifest=manifest, items={it.item_id: it for it in items})


# ---------------------------------------------------------------------------
# 1. Reward exactness
# ---------------------------------------------------------------------------


def test_criterion_1_reward_exactness():
    t0 = time.monotonic()
    eps = 0.02
    ok = accuracy_reward(0.0, eps) == 1.0 and accuracy_reward(0.02, eps) == 0.0
    for d in (0.0, 0.001, 0.005, 0.01, 0.015, 0.019, 0.02, 0.05):
        expected = (1 - d / eps) ** 2 if d < eps else 0.0
        ok = ok and abs(accuracy_reward(d, eps) - expected) < 1e-12
    ok = ok and accuracy_reward(0.01, eps) == 0.25
    _report(1, "reward exactness", ok, time.monotonic() - t0, limit=1.0)


# ---------------------------------------------------------------------------
# 2. Advantage normalization
# ---------------------------------------------------------------------------


def test_criterion_2_advantage_normalization():
    t0 = time.monotonic()
    rng = random.Random(42)
    ok = True
    for i in range(1000):
        g = rng.randint(2, 16)
        if i % 10 == 0:
            rewards = [rng.uniform(0, 2)] * g  # all-equal group
        else:
            rewards = [rng.uniform(0, 2) for _ in range(g)]
        adv = group_advantages(rewards)
        if np.std(rewards) > 1e-8:
            ok = ok and abs(float(np.mean(adv))) <= 1e-9
            ok = ok and abs(float(np.std(adv)) - 1.0) <= 1e-9
            alpha, beta = rng.uniform(0.1, 10), rng.uniform(-50, 50)
            scaled = group_advantages([alpha * r + beta for r in rewards])
            ok = ok and max(abs(a - b) for a, b in zip(adv, scaled)) <= 1e-9
        else:
            ok = ok and adv == [0.0] * g
    _report(2, "advantage normalization", ok, time.monotonic() - t0, limit=5.0)


# ---------------------------------------------------------------------------
# 3. Relaxed-accuracy protocol
# ---------------------------------------------------------------------------


def test_criterion_3_relaxed_accuracy_protocol():
    t0 = time.monotonic()
    rng = random.Random(7)
    types = list(ChartType)
    items, responses = [], []
    expected_correct = 0

    n_random, n_boundary = 990, 10
    i = 0
    while i < n_random:
        d = rng.uniform(0.0, 0.05)
        if abs(d - 0.02) <= 1e-9:
            continue
        a_gt = rng.choice([-1.0, 1.0]) * rng.uniform(1.0, 1000.0)
        sign = rng.choice([-1.0, 1.0])
        a_pred = a_gt * (1.0 + sign * d)
        if d <= 0.02:
            expected_correct += 1
        items.append(
            QaItem(item_id=f"syn-fx-{i:05d}", chart_ref=f"c{i}", question=f"target {i}?",
                   answer_gt=a_gt, chart_type=types[i % 7], source="synthetic", topic="finance")
        )
        responses.append((f"syn-fx-{i:05d}",
                          parse_response(f"<think>est</think><answer>{a_pred!r}</answer>",
                                         "forced_cot")))
        i += 1

    # boundary cases with d_rel exactly 0.02: accepted by the closed interval
    for b in range(n_boundary):
        k = float(b + 1)
        a_gt, a_pred = 100.0 * k, 102.0 * k
        assert relative_error(a_pred, a_gt) == 0.02
        expected_correct += 1
        item_id = f"syn-fx-{n_random + b:05d}"
        items.append(QaItem(item_id=item_id, chart_ref="cb", question="boundary?",
                            answer_gt=a_gt, chart_type=types[b % 7], source="synthetic",
                            topic="finance"))
        responses.append((item_id,
                          parse_response(f"<think>e</think><answer>{a_pred!r}</answer>",
                                         "forced_cot")))

    report = evaluate_run(responses, _memory_dataset(items), tau=0.02)
    ok = report.total_n == 1000 and report.total_correct == expected_correct
    _report(3, "relaxed-accuracy analytic count", ok, time.monotonic() - t0)


# ---------------------------------------------------------------------------
# 4. Renderer geometry oracle + annotation audit
# ---------------------------------------------------------------------------

NS = "{http://www.w3.org/2000/svg}"


def _recover_values(spec, svg_text):
    root = ET.fromstring(svg_text)
    plot = next(el for el in root.iter(NS + "rect") if "plot-area" in (el.get("class") or ""))
    y0, h = float(plot.get("y")), float(plot.get("height"))
    y1 = y0 + h
    out = []
    for el in root.iter():
        cls = el.get("class") or ""
        si = el.get("data-series")
        if si is None or ("mark-bar" not in cls and "mark-point" not in cls):
            continue
        axis = spec.y_axis_secondary if el.get("data-axis") == "secondary" else spec.y_axis
        span = axis.max - axis.min
        if "mark-bar" in cls:
            value = axis.min + float(el.get("height")) / h * span
        else:
            value = axis.min + (y1 - float(el.get("cy"))) / h * span
        truth = spec.series[int(si)].points[int(el.get("data-point"))][1]
        out.append((truth, value, span))
    return out


def test_criterion_4_renderer_geometry_and_annotation_freedom():
    t0 = time.monotonic()
    geometry_types = {ChartType.BAR, ChartType.LINE, ChartType.SCATTER, ChartType.AREA,
                      ChartType.COMBO}
    ok = True
    n_recovered = 0
    for seed in range(500):
        ct = list(ChartType)[seed % 7]
        spec = sample_spec(seed, ct, DEFAULT_TOPICS[(seed * 3) % 38],
                           "hard" if seed % 2 else "easy")
        rendered = render(spec)
        if ct in geometry_types:
            recovered = _recover_values(spec, rendered.svg_text)
            ok = ok and bool(recovered)
            for truth, value, span in recovered:
                ok = ok and abs(value - truth) <= span / 1e4
                n_recovered += 1
        ok = ok and annotation_leaks(spec, rendered) == []
    ok = ok and n_recovered > 1000
    _report(4, "geometry inverse map + annotation audit (500 specs)", ok,
            time.monotonic() - t0, limit=60.0)


# ---------------------------------------------------------------------------
# 5. Boundary-filter oracle equivalence
# ---------------------------------------------------------------------------


def test_criterion_5_boundary_filter_oracle():
    t0 = time.monotonic()
    rng = random.Random(5)
    ok = True
    for _ in range(200):
        n_items = rng.randint(1, 500)
        log = InferenceLog()
        flags = {}
        for i in range(n_items):
            item_id = f"q{i:04d}"
            rounds = [rng.random() < 0.5 for _ in range(rng.randint(1, 6))]
            flags[item_id] = rounds
            for ri, flag in enumerate(rounds):
                log.add(item_id, RoundResult(ri, "direct", 0.9, "x", flag))
        oracle = {k for k, v in flags.items() if any(v) and any(not f for f in v)}
        ok = ok and boundary_filter(log) == oracle
    _report(5, "boundary filter == brute-force comprehension (200 logs)", ok,
            time.monotonic() - t0, limit=10.0)


# ---------------------------------------------------------------------------
# 6. CoT validation counts
# ---------------------------------------------------------------------------


def test_criterion_6_cot_validation_counts():
    t0 = time.monotonic()
    items = [
        QaItem(item_id=f"syn-cot-{i:04d}", chart_ref=f"c{i}", question=f"estimate target {i}?",
               answer_gt=float(10 + i), chart_type=list(ChartType)[i % 7],
               source="synthetic", topic="energy")
        for i in range(100)
    ]
    dataset = _memory_dataset(items)
    index_of = {it.question: i for i, it in enumerate(items)}

    def teacher(sys_p, user_p, image):
        i = next(v for q, v in index_of.items() if q in user_p)
        gt = items[i].answer_gt
        if i < 20:
            return f"the derivation gives {gt} without any tags"
        if i < 35:
            return f"<think>misread the scale</think><answer>{gt * 1.5}</answer>"
        if i < 45:
            return f"<think>the original answer is {gt}</think><answer>{gt}</answer>"
        return f"<think>gridline interpolation gives the value</think><answer>{gt}</answer>"

    result = distill_cot(dataset, MockChatClient(handler=teacher), target_count=100,
                         max_attempts_per_item=1)
    ok = (
        result.stats["missing_tags"] == 20
        and result.stats["wrong_answer"] == 15
        and result.stats["leakage"] == 10
        and result.stats["accepted"] == 55
        and len(result.samples) == 55
    )
    # every accepted sample revalidates idempotently
    for s in result.samples:
        rebuilt = f"<think>{s.think_text}</think><answer>{s.answer_text}</answer>"
        gt = next(it.answer_gt for it in items if it.item_id == s.item_id)
        ok = ok and validate_cot(rebuilt, gt).accepted
    _report(6, "CoT validation counts (20/15/10 rejected, 55 accepted)", ok,
            time.monotonic() - t0)


# ---------------------------------------------------------------------------
# 7. End-to-end determinism
# ---------------------------------------------------------------------------


def _pipeline_run(base: Path) -> dict[str, bytes]:
    """generate -> render -> evaluate -> reward, returning output bytes by name."""
    ds = base / "ds"
    counts = ",".join(f"{t}=3" for t in DEFAULT_SYNTHETIC_COUNTS)
    assert main(["generate", "--out", str(ds), "--count", counts, "--seed", "42"]) == 0

    rendered = base / "rendered"
    assert main(["render", "--dataset", str(ds), "--out", str(rendered)]) == 0

    items = read_jsonl(ds / "items.jsonl")
    responses = base / "responses.jsonl"
    with responses.open("w", encoding="utf-8") as fh:
        for i, it in enumerate(items):
            # deterministic mock model: near-correct on even items, off on odd
            value = it["answer_gt"] * (1.01 if i % 2 == 0 else 1.10)
            fh.write(json.dumps({
                "item_id": it["item_id"],
                "raw_text": f"<think>scale read</think><answer>{value!r}</answer>",
            }) + "\n")
    report_dir = base / "report"
    assert main(["evaluate", "--dataset", str(ds), "--responses", str(responses),
                 "--out", str(report_dir)]) == 0

    reward_in = base / "reward_in.jsonl"
    with reward_in.open("w", encoding="utf-8") as fh:
        for i, it in enumerate(items):
            value = it["answer_gt"] * (1.0 + 0.005 * (i % 5))
            fh.write(json.dumps({
                "id": it["item_id"],
                "raw_text": f"<think>t</think><answer>{value!r}</answer>",
                "answer_gt": it["answer_gt"],
            }) + "\n")
    breakdowns = base / "breakdowns.jsonl"
    assert main(["reward", "--responses", str(reward_in), "--out", str(breakdowns)]) == 0

    out: dict[str, bytes] = {}
    for path in sorted(ds.rglob("*")):
        if path.is_file():
            out[f"ds/{path.relative_to(ds)}"] = path.read_bytes()
    for path in sorted(rendered.rglob("*")):
        if path.is_file():
            out[f"rendered/{path.relative_to(rendered)}"] = path.read_bytes()
    out["report/report.json"] = (report_dir / "report.json").read_bytes()
    out["report/report.txt"] = (report_dir / "report.txt").read_bytes()
    out["breakdowns.jsonl"] = breakdowns.read_bytes()
    return out


def test_criterion_7_end_to_end_determinism(tmp_path):
    t0 = time.monotonic()
    run_a = _pipeline_run(tmp_path / "run_a")
    run_b = _pipeline_run(tmp_path / "run_b")
    ok = set(run_a) == set(run_b)
    ok = ok and all(run_a[name] == run_b[name] for name in run_a)
    ok = ok and any(name.endswith(".svg") for name in run_a)
    _report(7, "end-to-end byte determinism across two runs", ok, time.monotonic() - t0)


# ---------------------------------------------------------------------------
# 8. Benchmark-shape fidelity
# ---------------------------------------------------------------------------


def test_criterion_8_benchmark_shape(tmp_path):
    t0 = time.monotonic()
    fixtures = tmp_path / "real"
    fixtures.mkdir()
    records = []
    for chart_type, count in DEFAULT_REAL_COUNTS.items():
        img = fixtures / f"{chart_type}.png"
        img.write_bytes(b"\x89PNG\r\n\x1a\n" + chart_type.encode())
        for i in range(count):
            records.append({
                "image": img.name,
                "question": f"What is the {chart_type} value at position {i}?",
                "answer": float(i + 1),
                "chart_type": chart_type,
                "topic": "finance",
            })
    imports = fixtures / "real_imports.jsonl"
    with imports.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")

    ds = tmp_path / "benchmark"
    assert main(["generate", "--out", str(ds), "--seed", "42",
                 "--real-imports", str(imports)]) == 0
    dataset = load_dataset(ds)
    manifest = dataset.manifest
    elapsed = time.monotonic() - t0

    ok = manifest.total("synthetic") == 2101 and manifest.total("real") == 352
    ok = ok and manifest.total() == 2453
    ok = ok and manifest.counts["synthetic"] == DEFAULT_SYNTHETIC_COUNTS
    ok = ok and manifest.counts["real"] == DEFAULT_REAL_COUNTS
    svgs = list((ds / "images").glob("*.svg"))
    ok = ok and len(svgs) == 2101
    _report(8, "benchmark shape 2101 synthetic + 352 real", ok, elapsed, limit=600.0)


# ---------------------------------------------------------------------------
# 9. Cross-module consistency
# ---------------------------------------------------------------------------


def test_criterion_9_match_reward_consistency():
    t0 = time.monotonic()
    rng = random.Random(9)
    ok = True
    n_boundary_seen = 0
    pairs = []
    for _ in range(9900):
        a_gt = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 5000.0)
        a_pred = a_gt * (1.0 + rng.uniform(-0.05, 0.05))
        pairs.append((a_pred, a_gt))
    for k in range(1, 51):
        pairs.append((102.0 * k, 100.0 * k))
        pairs.append((-102.0 * k, -100.0 * k))
    assert len(pairs) == 10_000

    for a_pred, a_gt in pairs:
        d = relative_error(a_pred, a_gt)
        match = relaxed_match(a_pred, a_gt, 0.02)
        reward = accuracy_reward(d, 0.02)
        if d == 0.02:
            n_boundary_seen += 1
            ok = ok and match and reward == 0.0
        else:
            ok = ok and (match == (reward > 0.0))
    ok = ok and n_boundary_seen >= 100
    _report(9, "relaxed_match vs accuracy_reward boundary discipline (10k pairs)", ok,
            time.monotonic() - t0)
