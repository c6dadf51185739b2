"""Canonical JSON used for every artifact the pipeline writes.

Canonical form: sorted keys, compact separators, UTF-8 without ASCII
escaping, floats in Python's shortest round-trip representation, and a
trailing newline on whole-file documents. Two processes that agree on the
input structure emit identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"), allow_nan=False)


def write_canonical_json(path: Path, obj) -> None:
    Path(path).write_text(canonical_dumps(obj) + "\n", encoding="utf-8")


def write_jsonl(path: Path, records) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(canonical_dumps(rec) + "\n")


def append_jsonl(path: Path, record) -> None:
    with Path(path).open("a", encoding="utf-8") as fh:
        fh.write(canonical_dumps(record) + "\n")


def read_jsonl(path: Path) -> list:
    rows = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def content_hash(obj) -> str:
    """Short stable hash of the canonical form; used for ids and manifests."""
    return hashlib.sha256(canonical_dumps(obj).encode("utf-8")).hexdigest()[:12]
