"""Q&A generation, verification, real-chart import, and dataset assembly.

Synthetic answers are never estimated: they are read exactly out of the
chart spec that the renderer draws, so every item's ground truth is
recomputable. Question templates are documented in docs/templates.md and
embed their target names in single quotes, which lets verify_qa resolve
the target from the question text alone.

Dataset store layout (one directory per dataset):

    charts/<spec_id>.json   canonical chart specs
    images/<spec_id>.svg    rendered charts, plus copied real images
    items.jsonl             one canonical QaItem per line, sorted by id
    manifest.json           id list, per-(source, type) counts, seed
"""

from __future__ import annotations

import hashlib
import json
import re
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .chart_model import (
    BOX_STATISTICS,
    DEFAULT_TOPICS,
    ChartSpec,
    ChartType,
    box_stats,
    sample_spec,
    spec_dumps,
    spec_from_dict,
    validate_spec,
)
from .errors import (
    ChartforgeError,
    GenerationError,
    InputError,
    ReferenceResolutionError,
    ShortfallError,
)
from .renderer import render
from .rng import SeededRng, derive_seed
from .scales import format_number
from .serialize import content_hash, read_jsonl, write_canonical_json, write_jsonl

SCHEMA_VERSION = "1"

# Table-1 column order; real charts only come in the last three types.
SYNTHETIC_TYPE_ORDER = ("box", "area", "radar", "scatter", "bar", "line", "combo")
REAL_TYPE_ORDER = ("bar", "line", "combo")
REAL_CHART_TYPES = frozenset(REAL_TYPE_ORDER)

# Benchmark shape. The per-type totals are the exact cell populations the
# published accuracy percentages reduce to (2,101 synthetic + 352 real).
DEFAULT_SYNTHETIC_COUNTS = {
    "box": 91, "area": 164, "radar": 156, "scatter": 457,
    "bar": 358, "line": 302, "combo": 573,
}
DEFAULT_REAL_COUNTS = {"bar": 112, "line": 115, "combo": 125}


@dataclass(frozen=True)
class QaItem:
    item_id: str
    chart_ref: str
    question: str
    answer_gt: float
    chart_type: ChartType
    source: str  # "synthetic" | "real"
    topic: str
    unit: Optional[str] = None
    answer_nonzero: bool = True
    target: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "chart_ref": self.chart_ref,
            "question": self.question,
            "answer_gt": float(self.answer_gt),
            "chart_type": self.chart_type.value,
            "source": self.source,
            "topic": self.topic,
            "unit": self.unit,
            "answer_nonzero": bool(self.answer_nonzero),
            "target": self.target,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QaItem":
        return cls(
            item_id=str(d["item_id"]),
            chart_ref=str(d["chart_ref"]),
            question=str(d["question"]),
            answer_gt=float(d["answer_gt"]),
            chart_type=ChartType(d["chart_type"]),
            source=str(d["source"]),
            topic=str(d.get("topic", "")),
            unit=d.get("unit"),
            answer_nonzero=bool(d.get("answer_nonzero", True)),
            target=d.get("target"),
        )


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    items: tuple[str, ...]
    counts: dict
    seed: int
    schema_version: str = SCHEMA_VERSION

    def total(self, source: Optional[str] = None) -> int:
        sources = [source] if source else list(self.counts)
        return sum(sum(self.counts[s].values()) for s in sources)

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "items": list(self.items),
            "counts": self.counts,
            "seed": int(self.seed),
            "schema_version": self.schema_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            dataset_id=str(d["dataset_id"]),
            items=tuple(d["items"]),
            counts=d["counts"],
            seed=int(d["seed"]),
            schema_version=str(d.get("schema_version", SCHEMA_VERSION)),
        )


@dataclass
class Dataset:
    """A dataset store loaded into memory."""

    root: Path
    manifest: DatasetManifest
    items: dict[str, QaItem]

    def ordered_items(self) -> list[QaItem]:
        return [self.items[i] for i in self.manifest.items]

    def chart_spec(self, item: QaItem) -> ChartSpec:
        if item.source != "synthetic":
            raise InputError(f"item {item.item_id} has no chart spec (source={item.source})")
        path = self.root / "charts" / f"{item.chart_ref}.json"
        if not path.exists():
            raise ReferenceResolutionError(f"dangling chart_ref '{item.chart_ref}'")
        return spec_from_dict(json.loads(path.read_text(encoding="utf-8")))

    def image_path(self, item: QaItem) -> Path:
        if item.source == "synthetic":
            return self.root / "images" / f"{item.chart_ref}.svg"
        return self.root / item.chart_ref


# ---------------------------------------------------------------------------
# Question generation
# ---------------------------------------------------------------------------


def _unit_clause(unit: Optional[str]) -> str:
    return f" Answer in {unit}." if unit else ""


def _question_for(spec: ChartSpec, target: dict) -> str:
    prefix = f"In the chart titled '{spec.title}'," if spec.title else "In the chart,"
    unit = _unit_clause(spec.y_axis.unit if target.get("axis") != "secondary"
                        else spec.y_axis_secondary.unit)
    kind = target["kind"]
    if kind == "category":
        if spec.chart_type is ChartType.RADAR:
            return (
                f"{prefix} what value does '{target['series']}' reach on the "
                f"'{target['category']}' axis?{unit}"
            )
        return (
            f"{prefix} what is the value of '{target['series']}' at "
            f"'{target['category']}'?{unit}"
        )
    if kind == "scatter":
        return (
            f"{prefix} what is the y-value of the point at x = {format_number(target['x'])} "
            f"in series '{target['series']}'?{unit}"
        )
    if kind == "box":
        return f"{prefix} what is the {target['statistic']} of '{target['series']}'?{unit}"
    raise ValueError(f"unknown target kind '{kind}'")


def _candidate_targets(spec: ChartSpec) -> list[tuple[dict, float]]:
    out: list[tuple[dict, float]] = []
    if spec.chart_type is ChartType.BOX:
        for s in spec.series:
            stats = box_stats([v for _, v in s.points])
            for stat in BOX_STATISTICS:
                out.append(({"kind": "box", "series": s.name, "statistic": stat}, stats[stat]))
    elif spec.chart_type is ChartType.SCATTER:
        for s in spec.series:
            for x, y in s.points:
                out.append(({"kind": "scatter", "series": s.name, "x": float(x)}, y))
    else:
        for s in spec.series:
            axis_kind = "secondary" if spec.series_axis(s) is spec.y_axis_secondary else "primary"
            for cat, y in s.points:
                out.append(
                    ({"kind": "category", "series": s.name, "category": cat, "axis": axis_kind}, y)
                )
    return out


def generate_qa(spec: ChartSpec, rng_seed: int) -> QaItem:
    """One numerical-estimation item with its answer read exactly from the spec.

    Targets with answer 0 are skipped (the relative-error metric divides
    by the answer), as are targets whose question text would contain the
    answer's decimal rendering.
    """
    violations = validate_spec(spec)
    if violations:
        raise GenerationError(f"cannot generate from invalid spec: {violations[0].rule}")
    candidates = _candidate_targets(spec)
    usable = [(t, v) for t, v in candidates if v != 0.0]
    if not usable:
        raise GenerationError(f"spec {spec.id}: every candidate target has answer 0")

    rng = SeededRng(derive_seed(int(rng_seed), f"qa/{spec.id}"))
    start = rng.randint(0, len(usable) - 1)
    for k in range(len(usable)):
        target, value = usable[(start + k) % len(usable)]
        question = _question_for(spec, target)
        if format_number(value) not in question:
            unit = (
                spec.y_axis_secondary.unit
                if target.get("axis") == "secondary"
                else spec.y_axis.unit
            )
            return QaItem(
                item_id=f"qa-{spec.id}",
                chart_ref=spec.id,
                question=question,
                answer_gt=float(value),
                chart_type=spec.chart_type,
                source="synthetic",
                topic=spec.topic,
                unit=unit,
                answer_nonzero=True,
                target=target,
            )
    raise GenerationError(f"spec {spec.id}: no leak-free target available")


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerifyResult:
    passed: bool
    reason: str


_X_VALUE_RE = re.compile(r"x = ([-+]?[0-9.]+)")


def _resolve_target(question: str, spec: ChartSpec):
    """Resolve (series, value) from the question text, or None."""
    quoted = re.findall(r"'([^']*)'", question)
    series_names = {s.name: s for s in spec.series}
    matches = [t for t in quoted if t in series_names]
    if len(set(matches)) != 1:
        return None
    series = series_names[matches[0]]

    if spec.chart_type is ChartType.BOX:
        found = [stat for stat in BOX_STATISTICS if stat in question]
        # "quartile" statistics contain no other statistic name, but guard anyway
        if len(found) != 1:
            return None
        return box_stats([v for _, v in series.points])[found[0]]

    if spec.chart_type is ChartType.SCATTER:
        m = _X_VALUE_RE.search(question)
        if not m:
            return None
        try:
            x = float(m.group(1))
        except ValueError:
            return None
        hits = [y for px, y in series.points if px == x]
        return hits[0] if len(hits) == 1 else None

    cats = [t for t in quoted if t in set(spec.x_categories)]
    if len(set(cats)) != 1:
        return None
    for cat, y in series.points:
        if cat == cats[0]:
            return y
    return None


def verify_qa(item: QaItem, spec: ChartSpec) -> VerifyResult:
    """Recompute the target named by the question; pass iff it equals answer_gt exactly."""
    if item.source != "synthetic":
        raise InputError(f"verify_qa applies to synthetic items, got source={item.source}")
    if item.chart_ref != spec.id:
        raise ReferenceResolutionError(
            f"item {item.item_id} references chart '{item.chart_ref}', got spec '{spec.id}'"
        )
    value = _resolve_target(item.question, spec)
    if value is None:
        return VerifyResult(False, "unresolvable target")
    if value != item.answer_gt:
        return VerifyResult(False, f"mismatch: expected {value}, found {item.answer_gt}")
    return VerifyResult(True, "ok")


# ---------------------------------------------------------------------------
# Real chart import
# ---------------------------------------------------------------------------


@dataclass
class ImportResult:
    items: list[QaItem]
    rejections: list[tuple[int, str]]


def _as_record(rec) -> dict:
    if isinstance(rec, dict):
        return rec
    question, answer, chart_type = rec[:3]
    return {"question": question, "answer": answer, "chart_type": chart_type}


def import_real_chart(image_path, qa_records, images_dir=None, id_prefix="real") -> ImportResult:
    """Ingest human-vetted Q&A for one real chart image.

    Records with answer 0 or a chart type outside the real-chart columns
    (bar, line, combo) are rejected individually, never silently dropped.
    No ground-truth recomputation is attempted for real charts.
    """
    image_path = Path(image_path)
    if not image_path.exists():
        raise InputError(f"real chart image not found: {image_path}")

    chart_ref = str(image_path)
    if images_dir is not None:
        images_dir = Path(images_dir)
        images_dir.mkdir(parents=True, exist_ok=True)
        digest = hashlib.sha256(image_path.read_bytes()).hexdigest()[:12]
        dest = images_dir / f"real-{digest}{image_path.suffix}"
        if not dest.exists():
            shutil.copyfile(image_path, dest)
        chart_ref = f"images/{dest.name}"

    items: list[QaItem] = []
    rejections: list[tuple[int, str]] = []
    for idx, raw in enumerate(qa_records):
        rec = _as_record(raw)
        try:
            ct = ChartType(rec["chart_type"])
        except ValueError:
            rejections.append((idx, f"unknown chart type '{rec['chart_type']}'"))
            continue
        if ct.value not in REAL_CHART_TYPES:
            rejections.append((idx, f"chart type '{ct.value}' not in the real-chart columns"))
            continue
        answer = float(rec["answer"])
        if answer == 0.0:
            rejections.append((idx, "answer 0 is incompatible with the relative-error metric"))
            continue
        items.append(
            QaItem(
                item_id=f"{id_prefix}-{ct.value}-{idx:04d}",
                chart_ref=chart_ref,
                question=str(rec["question"]),
                answer_gt=answer,
                chart_type=ct,
                source="real",
                topic=str(rec.get("topic", "")),
                unit=rec.get("unit"),
                answer_nonzero=True,
                target=None,
            )
        )
    return ImportResult(items=items, rejections=rejections)


# ---------------------------------------------------------------------------
# Dataset build
# ---------------------------------------------------------------------------


@dataclass
class BuildConfig:
    out_dir: Path
    seed: int = 42
    synthetic_counts: dict = field(default_factory=lambda: dict(DEFAULT_SYNTHETIC_COUNTS))
    real_counts: dict = field(default_factory=lambda: dict(DEFAULT_REAL_COUNTS))
    topics: tuple = DEFAULT_TOPICS
    hard_fraction: float = 0.5


def _sample_item(config: BuildConfig, chart_type: str, index: int) -> tuple[ChartSpec, QaItem]:
    child = derive_seed(config.seed, f"syn/{chart_type}/{index}")
    for attempt in range(6):
        seed = child if attempt == 0 else derive_seed(child, f"retry{attempt}")
        rng = SeededRng(derive_seed(seed, "pick"))
        topic = rng.choice(config.topics)
        difficulty = "hard" if rng.random() < config.hard_fraction else "easy"
        spec = sample_spec(seed, chart_type, topic, difficulty, topics=config.topics)
        try:
            item = generate_qa(spec, derive_seed(seed, "qa"))
            return spec, item
        except GenerationError:
            continue
    raise GenerationError(f"could not generate a usable {chart_type} item at index {index}")


def build_dataset(
    config: BuildConfig,
    real_records: Optional[list[dict]] = None,
    synthetic_specs: Optional[list[ChartSpec]] = None,
) -> DatasetManifest:
    """Build a dataset store at config.out_dir and return its manifest.

    ``synthetic_specs`` substitutes a curated spec pool for seeded
    sampling (e.g. specs that survived the repair loop); counts then
    follow the pool. Real items come from ``real_records`` rows of the
    real_imports.jsonl shape; requesting more than supplied raises
    ShortfallError.
    """
    out = Path(config.out_dir)
    (out / "charts").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(parents=True, exist_ok=True)

    items: list[QaItem] = []
    counts: dict = {"synthetic": {}, "real": {}}

    if synthetic_specs is not None:
        ids = [s.id for s in synthetic_specs]
        if len(set(ids)) != len(ids):
            raise InputError("synthetic_specs contains duplicate spec ids")
        by_type: dict[str, list[ChartSpec]] = {}
        for spec in synthetic_specs:
            by_type.setdefault(spec.chart_type.value, []).append(spec)
        plan = [(t, by_type.get(t, [])) for t in SYNTHETIC_TYPE_ORDER]
        for chart_type, specs in plan:
            counts["synthetic"][chart_type] = len(specs)
            for i, spec in enumerate(specs):
                item = generate_qa(spec, derive_seed(config.seed, f"syn-spec/{spec.id}"))
                item = replace(item, item_id=f"syn-{chart_type}-{i:05d}")
                _store_synthetic(out, spec, item)
                items.append(item)
    else:
        for chart_type in SYNTHETIC_TYPE_ORDER:
            n = int(config.synthetic_counts.get(chart_type, 0))
            counts["synthetic"][chart_type] = n
            for i in range(n):
                spec, item = _sample_item(config, chart_type, i)
                item = replace(item, item_id=f"syn-{chart_type}-{i:05d}")
                _store_synthetic(out, spec, item)
                items.append(item)

    if real_records is not None:
        by_type: dict[str, list[dict]] = {t: [] for t in REAL_TYPE_ORDER}
        for rec in real_records:
            ct = str(rec.get("chart_type", ""))
            if ct in by_type:
                by_type[ct].append(rec)
        for chart_type in REAL_TYPE_ORDER:
            want = int(config.real_counts.get(chart_type, 0))
            have = by_type[chart_type]
            if want > len(have):
                raise ShortfallError(
                    f"requested {want} real {chart_type} items but only {len(have)} supplied"
                )
            counts["real"][chart_type] = want
            for i, rec in enumerate(have[:want]):
                result = import_real_chart(
                    rec["image"], [rec], images_dir=out / "images", id_prefix="tmp"
                )
                if result.rejections:
                    raise InputError(
                        f"real record rejected ({chart_type}[{i}]): {result.rejections[0][1]}"
                    )
                item = replace(result.items[0], item_id=f"real-{chart_type}-{i:05d}")
                items.append(item)
    else:
        for chart_type in REAL_TYPE_ORDER:
            counts["real"][chart_type] = 0

    items.sort(key=lambda it: it.item_id)
    ids = tuple(it.item_id for it in items)
    dataset_id = "ds-" + content_hash({"seed": config.seed, "counts": counts, "items": list(ids)})
    manifest = DatasetManifest(dataset_id=dataset_id, items=ids, counts=counts, seed=config.seed)

    write_jsonl(out / "items.jsonl", (it.to_dict() for it in items))
    write_canonical_json(out / "manifest.json", manifest.to_dict())
    return manifest


def _store_synthetic(out: Path, spec: ChartSpec, item: QaItem) -> None:
    check = verify_qa(item, spec)
    if not check.passed:
        raise ChartforgeError(f"generated item failed verification: {check.reason}")
    (out / "charts" / f"{spec.id}.json").write_text(spec_dumps(spec) + "\n", encoding="utf-8")
    rendered = render(spec)
    (out / "images" / f"{spec.id}.svg").write_text(rendered.svg_text, encoding="utf-8")


def load_dataset(root) -> Dataset:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise InputError(f"no dataset manifest at {manifest_path}")
    manifest = DatasetManifest.from_dict(json.loads(manifest_path.read_text(encoding="utf-8")))
    items = {}
    for row in read_jsonl(root / "items.jsonl"):
        item = QaItem.from_dict(row)
        items[item.item_id] = item
    missing = [i for i in manifest.items if i not in items]
    if missing:
        raise InputError(f"manifest lists items missing from items.jsonl: {missing[:5]}")
    return Dataset(root=root, manifest=manifest, items=items)
