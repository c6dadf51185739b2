"""Command-line interface: the whole pipeline as subcommands.

Configuration comes from defaults, then an optional TOML config file,
then flags (flags win). The seed defaults to 42 and can also be set via
the CHARTFORGE_SEED environment variable (flags and config file take
precedence over it). Every subcommand writes a run manifest recording the
hash of its semantic configuration (paths excluded, so reruns into a
different directory stay byte-identical), the seed, and the tool version.

Exit codes: 0 success, 1 validation or input error, 2 transport error,
3 partial completion.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from pathlib import Path

from . import __version__
from .chart_model import spec_from_dict
from .curation import (
    DEFAULT_ROUND_PLAN,
    boundary_filter,
    distill_cot,
    load_inference_log,
    run_rounds,
)
from .errors import (
    AuthError,
    ConfigError,
    GenerationError,
    InputError,
    InvalidSpecError,
    PartialCompletion,
    ReferenceResolutionError,
    ShortfallError,
    TransportError,
)
from .gen_client import ClientConfig, HttpChatClient, MockChatClient
from .qa_engine import (
    DEFAULT_REAL_COUNTS,
    DEFAULT_SYNTHETIC_COUNTS,
    REAL_TYPE_ORDER,
    SYNTHETIC_TYPE_ORDER,
    BuildConfig,
    build_dataset,
    import_real_chart,
    load_dataset,
)
from .renderer import render, render_meta
from .response_eval import evaluate_run, format_report_table, parse_response
from .reward_engine import group_advantages, total_reward
from .serialize import (
    content_hash,
    read_jsonl,
    write_canonical_json,
    write_jsonl,
)

DEFAULT_SEED = 42


def _load_config(path):
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise InputError(f"config file not found: {p}")
    try:
        import tomllib as toml  # Python 3.11+
    except ImportError:
        import tomli as toml
    with p.open("rb") as fh:
        return toml.load(fh)


def _resolve(flag_value, section: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    if key in section:
        return section[key]
    return default


def _resolve_seed(flag_value, section: dict) -> int:
    if flag_value is not None:
        return int(flag_value)
    if "seed" in section:
        return int(section["seed"])
    env = os.environ.get("CHARTFORGE_SEED")
    if env:
        return int(env)
    return DEFAULT_SEED


def _parse_counts(text: str, allowed, what: str) -> dict:
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"bad {what} count '{part}'; expected type=N")
        key, _, num = part.partition("=")
        key = key.strip()
        if key not in allowed:
            raise ConfigError(f"unknown {what} chart type '{key}'")
        out[key] = int(num)
    return out


def _parse_plan(text: str):
    plan = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        mode, _, temp = part.partition(":")
        plan.append((mode.strip(), float(temp) if temp else 0.0))
    if not plan:
        raise ConfigError("round plan is empty")
    return plan


def _write_run_manifest(out_dir: Path, command: str, semantic_config: dict, outputs) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_hash": content_hash(semantic_config),
        "seed": semantic_config.get("seed"),
        "tool_version": __version__,
        "config": semantic_config,
        "outputs": sorted(str(o) for o in outputs),
    }
    write_canonical_json(out_dir / f"run-manifest-{command}.json", manifest)


def _make_client(args, config: dict):
    if getattr(args, "mock_script", None):
        return MockChatClient.from_script_file(args.mock_script)
    section = config.get("client", {})
    cc = ClientConfig(
        endpoint_url=section.get("endpoint_url", ClientConfig.endpoint_url),
        model_name=section.get("model_name", ClientConfig.model_name),
        api_key_env=section.get("api_key_env", ClientConfig.api_key_env),
        max_retries=int(section.get("max_retries", ClientConfig.max_retries)),
        timeout_s=float(section.get("timeout_s", ClientConfig.timeout_s)),
        temperature=float(section.get("temperature", ClientConfig.temperature)),
        max_tokens=int(section.get("max_tokens", ClientConfig.max_tokens)),
    )
    return HttpChatClient(cc)


def _require_fields(rows, fields, path) -> None:
    for i, row in enumerate(rows):
        missing = [f for f in fields if f not in row]
        if missing:
            raise InputError(f"{path}: line {i + 1} is missing field(s) {missing}")


def _load_real_records(path) -> list[dict]:
    records_path = Path(path)
    if not records_path.exists():
        raise InputError(f"real imports file not found: {records_path}")
    records = read_jsonl(records_path)
    base = records_path.parent
    for rec in records:
        image = Path(rec.get("image", ""))
        if not image.is_absolute():
            rec["image"] = str(base / image)
    return records


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    config = _load_config(args.config)
    section = config.get("generate", {})
    seed = _resolve_seed(args.seed, section)

    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise InputError(f"output directory {out} is not empty; pass --force to rebuild")
        for sub in ("charts", "images"):
            shutil.rmtree(out / sub, ignore_errors=True)
        for name in ("items.jsonl", "manifest.json", "run-manifest-generate.json"):
            (out / name).unlink(missing_ok=True)

    if args.count:
        synthetic_counts = _parse_counts(args.count, SYNTHETIC_TYPE_ORDER, "synthetic")
    elif "synthetic_counts" in section:
        synthetic_counts = dict(section["synthetic_counts"])
    else:
        synthetic_counts = dict(DEFAULT_SYNTHETIC_COUNTS)

    if args.real_count:
        real_counts = _parse_counts(args.real_count, REAL_TYPE_ORDER, "real")
    elif "real_counts" in section:
        real_counts = dict(section["real_counts"])
    else:
        real_counts = dict(DEFAULT_REAL_COUNTS)

    real_records = _load_real_records(args.real_imports) if args.real_imports else None
    hard_fraction = float(_resolve(args.hard_fraction, section, "hard_fraction", 0.5))

    build = BuildConfig(
        out_dir=out,
        seed=seed,
        synthetic_counts=synthetic_counts,
        real_counts=real_counts,
        hard_fraction=hard_fraction,
    )
    manifest = build_dataset(build, real_records=real_records)

    semantic = {
        "seed": seed,
        "synthetic_counts": synthetic_counts,
        "real_counts": real_counts if real_records is not None else {},
        "hard_fraction": hard_fraction,
    }
    _write_run_manifest(out, "generate", semantic, ["manifest.json", "items.jsonl"])
    print(
        f"dataset {manifest.dataset_id}: {manifest.total('synthetic')} synthetic, "
        f"{manifest.total('real')} real -> {out}"
    )
    return 0


def cmd_render(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec_paths = []
    if args.spec:
        spec_paths.append(Path(args.spec))
    if args.dataset:
        charts = Path(args.dataset) / "charts"
        if not charts.exists():
            raise InputError(f"no charts directory under {args.dataset}")
        spec_paths.extend(sorted(charts.glob("*.json")))
    if not spec_paths:
        raise InputError("nothing to render; pass --spec or --dataset")

    written = []
    for path in spec_paths:
        try:
            spec = spec_from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"bad chart spec {path}: {exc}") from exc
        rendered = render(spec)
        (out / f"{spec.id}.svg").write_text(rendered.svg_text, encoding="utf-8")
        write_canonical_json(out / f"{spec.id}.meta.json", render_meta(spec, rendered))
        written.append(f"{spec.id}.svg")

    _write_run_manifest(out, "render", {"seed": None, "count": len(written)}, written)
    print(f"rendered {len(written)} chart(s) -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    tau = float(_resolve(args.tau, config.get("evaluate", {}), "tau", 0.02))
    dataset = load_dataset(args.dataset)
    responses_path = Path(args.responses)
    if not responses_path.exists():
        raise InputError(f"responses file not found: {responses_path}")

    rows = read_jsonl(responses_path)
    _require_fields(rows, ("item_id", "raw_text"), responses_path)
    responses = [(str(r["item_id"]), parse_response(str(r["raw_text"]), args.mode)) for r in rows]
    report = evaluate_run(responses, dataset, tau=tau)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_canonical_json(out / "report.json", report.to_dict())
    (out / "report.txt").write_text(format_report_table(report), encoding="utf-8")

    semantic = {"seed": dataset.manifest.seed, "tau": tau, "mode": args.mode,
                "dataset_id": dataset.manifest.dataset_id}
    _write_run_manifest(out, "evaluate", semantic, ["report.json", "report.txt"])
    sys.stdout.write(format_report_table(report))
    return 0


def cmd_reward(args) -> int:
    rows = read_jsonl(args.responses)
    _require_fields(rows, ("raw_text", "answer_gt"), args.responses)
    out_records = []
    for row in rows:
        breakdown = total_reward(str(row["raw_text"]), float(row["answer_gt"]), epsilon=args.epsilon)
        rec = breakdown.to_dict()
        if "id" in row:
            rec["id"] = row["id"]
        out_records.append(rec)
    out = Path(args.out)
    write_jsonl(out, out_records)
    _write_run_manifest(out.parent, "reward", {"seed": None, "epsilon": args.epsilon},
                        [out.name])
    print(f"wrote {len(out_records)} reward breakdown(s) -> {out}")
    return 0


def cmd_advantages(args) -> int:
    rows = read_jsonl(args.rewards)
    _require_fields(rows, ("prompt_id",), args.rewards)
    groups: dict[str, list[float]] = {}
    order: list[str] = []
    for row in rows:
        pid = str(row["prompt_id"])
        if pid not in groups:
            groups[pid] = []
            order.append(pid)
        if "rewards" in row:
            groups[pid].extend(float(r) for r in row["rewards"])
        elif "reward" in row:
            groups[pid].append(float(row["reward"]))
        else:
            raise InputError(f"{args.rewards}: row for '{pid}' has neither reward nor rewards")

    out_records = []
    for pid in order:
        rewards = groups[pid]
        try:
            adv = group_advantages(rewards, std_guard=args.std_guard)
        except ValueError as exc:
            raise InputError(f"prompt '{pid}': {exc}") from exc
        out_records.append({"prompt_id": pid, "rewards": rewards, "advantages": adv})
    out = Path(args.out)
    write_jsonl(out, out_records)
    _write_run_manifest(out.parent, "advantages", {"seed": None, "std_guard": args.std_guard},
                        [out.name])
    print(f"wrote advantages for {len(out_records)} group(s) -> {out}")
    return 0


def cmd_curate_boundary(args) -> int:
    log_path = Path(args.log)
    if not log_path.exists():
        raise InputError(f"inference log not found: {log_path}")
    ids = sorted(boundary_filter(load_inference_log(log_path)))
    for item_id in ids:
        print(item_id)
    if args.out:
        write_canonical_json(Path(args.out), {"boundary_items": ids, "count": len(ids)})
    return 0


def cmd_curate_run_rounds(args) -> int:
    config = _load_config(args.config)
    dataset = load_dataset(args.dataset)
    plan = _parse_plan(args.plan) if args.plan else list(DEFAULT_ROUND_PLAN)
    client = _make_client(args, config)
    log = run_rounds(
        dataset,
        client,
        plan=plan,
        concurrency_limit=args.jobs,
        tau=args.tau,
        log_path=args.log,
        resume=args.resume,
    )
    n_rows = sum(len(v) for v in log.rows.values())
    semantic = {"seed": dataset.manifest.seed, "plan": [[m, t] for m, t in plan], "tau": args.tau}
    _write_run_manifest(Path(args.log).parent, "curate", semantic, [Path(args.log).name])
    print(f"logged {n_rows} round results for {len(log.rows)} item(s) -> {args.log}")
    return 0


def cmd_distill(args) -> int:
    config = _load_config(args.config)
    target = _resolve(args.target, config.get("distill", {}), "target", None)
    if target is None:
        raise ConfigError("distillation target count required (--target or [distill] target)")
    target = int(target)
    dataset = load_dataset(args.dataset)
    client = _make_client(args, config)
    result = distill_cot(
        dataset,
        client,
        target_count=target,
        max_attempts_per_item=args.max_attempts,
        source_model="mock" if args.mock_script else config.get("client", {}).get("model_name", "teacher"),
    )
    out = Path(args.out)
    write_jsonl(out, (s.to_dict() for s in result.samples))
    if args.stats:
        write_canonical_json(Path(args.stats), result.stats)
    semantic = {"seed": dataset.manifest.seed, "target": target,
                "max_attempts": args.max_attempts}
    _write_run_manifest(out.parent, "distill", semantic, [out.name])
    print(
        f"accepted {result.stats['accepted']}, rejected "
        f"missing_tags={result.stats['missing_tags']} "
        f"wrong_answer={result.stats['wrong_answer']} leakage={result.stats['leakage']}"
    )
    if result.shortfall:
        raise PartialCompletion(
            f"collected {len(result.samples)} of {target} requested samples"
        )
    return 0


def cmd_import_real(args) -> int:
    records = _load_real_records(args.records)
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)

    items = []
    rejections = []
    for idx, rec in enumerate(records):
        result = import_real_chart(rec["image"], [rec], images_dir=out / "images")
        for _local_idx, reason in result.rejections:
            rejections.append({"index": idx, "reason": reason})
        for item in result.items:
            items.append(item)
    items = [
        it.to_dict() | {"item_id": f"real-{it.chart_type.value}-{i:05d}"}
        for i, it in enumerate(items)
    ]
    write_jsonl(out / "real_items.jsonl", items)
    write_canonical_json(out / "import_report.json",
                         {"accepted": len(items), "rejections": rejections})
    _write_run_manifest(out, "import-real", {"seed": None, "records": len(records)},
                        ["real_items.jsonl", "import_report.json"])
    print(f"imported {len(items)} item(s), rejected {len(rejections)} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chartforge",
        description="Build, render, and score non-annotated chart benchmarks.",
    )
    parser.add_argument("--version", action="version", version=f"chartforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build a dataset (specs, SVGs, items, manifest)")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--count", default=None, help="synthetic counts, e.g. bar=3,radar=2")
    p.add_argument("--real-count", default=None, help="real counts, e.g. bar=112,line=115")
    p.add_argument("--real-imports", default=None, help="real_imports.jsonl with vetted Q&A")
    p.add_argument("--hard-fraction", type=float, default=None)
    p.add_argument("--force", action="store_true", help="rebuild over a non-empty directory")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("render", help="render chart specs to SVG plus sidecar metadata")
    p.add_argument("--spec", default=None, help="single chart spec JSON file")
    p.add_argument("--dataset", default=None, help="render every spec in a dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("evaluate", help="score a responses.jsonl against a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=None, help="relative tolerance (default 0.02)")
    p.add_argument("--mode", choices=["direct", "optional_cot", "forced_cot"],
                   default="optional_cot")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reward", help="compute reward breakdowns for raw responses")
    p.add_argument("--responses", required=True, help="JSONL with raw_text and answer_gt")
    p.add_argument("--out", required=True)
    p.add_argument("--epsilon", type=float, default=0.02)
    p.set_defaults(func=cmd_reward)

    p = sub.add_parser("advantages", help="normalize grouped rewards into advantages")
    p.add_argument("--rewards", required=True, help="JSONL with prompt_id and reward(s)")
    p.add_argument("--out", required=True)
    p.add_argument("--std-guard", type=float, default=1e-8)
    p.set_defaults(func=cmd_advantages)

    p = sub.add_parser("curate", help="multi-round inference logging and boundary filtering")
    curate_sub = p.add_subparsers(dest="curate_command", required=True)

    pb = curate_sub.add_parser("boundary", help="items correct in some rounds, wrong in others")
    pb.add_argument("--log", required=True)
    pb.add_argument("--out", default=None)
    pb.set_defaults(func=cmd_curate_boundary)

    pr = curate_sub.add_parser("run-rounds", help="run the multi-round inference plan")
    pr.add_argument("--dataset", required=True)
    pr.add_argument("--log", required=True, help="inference log JSONL to write")
    pr.add_argument("--plan", default=None, help="e.g. direct:0.0,forced_cot:0.9")
    pr.add_argument("--tau", type=float, default=0.02)
    pr.add_argument("--jobs", type=int, default=1)
    pr.add_argument("--resume", action="store_true")
    pr.add_argument("--mock-script", default=None)
    pr.add_argument("--config", default=None)
    pr.set_defaults(func=cmd_curate_run_rounds)

    p = sub.add_parser("distill", help="collect validated reasoning chains from a teacher")
    p.add_argument("--dataset", required=True)
    p.add_argument("--target", type=int, default=None,
                   help="sample count (or [distill] target in the config file)")
    p.add_argument("--out", required=True)
    p.add_argument("--stats", default=None)
    p.add_argument("--max-attempts", type=int, default=3)
    p.add_argument("--mock-script", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("import-real", help="validate and stage real-chart Q&A records")
    p.add_argument("--records", required=True, help="real_imports.jsonl")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import_real)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputError, InvalidSpecError, GenerationError,
            ReferenceResolutionError, ShortfallError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TransportError, AuthError) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 2
    except PartialCompletion as exc:
        print(f"partial completion: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
