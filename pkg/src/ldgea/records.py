"""Newline-delimited JSON archive files.

One record per archived candidate::

    {"run_id": ..., "kind": "ldgea", "seed": 1, "iteration": 3, "slot": 5,
     "descriptor": "+-+|3,0,7", "x": [...], "materials": [...],
     "image_distance": 44.6, "value": 0.012, "breakdown": {...},
     "timestamp": "..."}

Floats are written with ``repr`` precision, so values survive a round trip
exactly.  ``timestamp`` is the only field that differs between repeated runs;
:func:`strip_timestamps` removes it for comparisons.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .hvea import NicheArchive

ARCHIVE_NAME = "archive.jsonl"
GENERATIONS_NAME = "generations.jsonl"
RUN_NAME = "run.json"
SUMMARY_NAME = "summary.json"


def run_id(config: dict, kind: str) -> str:
    """Deterministic id from the configuration (thread settings excluded)."""
    d = {k: v for k, v in config.items() if k != "threads"}
    blob = json.dumps({"kind": kind, "config": d}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def clean(value):
    if isinstance(value, dict):
        return {k: clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [clean(v) for v in value.tolist()]
    if isinstance(value, (float, np.floating)):
        # strict JSON has no infinities; failed evaluations are written as null
        return float(value) if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def dumps(record: dict) -> str:
    return json.dumps(clean(record), separators=(",", ":"), allow_nan=False)


class ArchiveWriter:
    """Append-only writer; callers flush once per generation."""

    def __init__(self, path: str | Path, run_id: str, kind: str, seed: int):
        self.path = Path(path)
        self.run_id = run_id
        self.kind = kind
        self.seed = seed
        self.count = 0
        self._fh: IO[str] | None = open(self.path, "w", encoding="utf-8")

    def write(self, iteration: int, slot: int, descriptor: str, x, materials, value: float,
              image_distance: float | None = None, breakdown: dict | None = None, **extra) -> None:
        rec = {
            "run_id": self.run_id,
            "kind": self.kind,
            "seed": self.seed,
            "iteration": int(iteration),
            "slot": int(slot),
            "descriptor": descriptor,
            "x": [float(v) for v in np.asarray(x, dtype=float)],
            "materials": [int(m) for m in materials],
            "image_distance": None if image_distance is None else float(image_distance),
            "value": float(value),
            "breakdown": breakdown,
        }
        rec.update(extra)
        rec["timestamp"] = now()
        self._fh.write(dumps(rec) + "\n")
        self.count += 1

    def flush(self) -> None:
        if self._fh is not None:
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class JsonlLog:
    """Small line-per-record log (generation records, restart log)."""

    def __init__(self, path: str | Path):
        self._fh = open(path, "w", encoding="utf-8")

    def write(self, record: dict) -> None:
        self._fh.write(dumps(record) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{n}: malformed record ({exc})") from None
    return out


def strip_timestamps(records: Iterable[dict]) -> list[dict]:
    return [{k: v for k, v in r.items() if k != "timestamp"} for r in records]


@dataclass
class LoadedArchive:
    """Records of one archive file plus the per-descriptor archives they rebuild."""

    path: Path
    records: list[dict]
    window: float = math.inf
    archives: dict[str, NicheArchive] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.records[0]["kind"] if self.records else "unknown"

    @property
    def values(self) -> list[float]:
        return [v for a in self.archives.values() for v in a.values]

    @property
    def candidates(self) -> int:
        return sum(len(a) for a in self.archives.values())

    @property
    def descriptors(self) -> set[str]:
        return {k for k, a in self.archives.items() if len(a)}

    def ranked(self) -> list[tuple[float, str, dict]]:
        """Surviving records by ascending value, ties by descriptor."""
        live = []
        for key, a in self.archives.items():
            for v, rec in a.entries():
                live.append((v, key, rec))
        live.sort(key=lambda r: (r[0], r[1]))
        return live


def load_archive(path: str | Path, window: float | None = None) -> LoadedArchive:
    """Replay the inserts of an archive file.

    ``window`` defaults to the value stored in the neighbouring ``run.json``,
    or to infinity (keep everything) when there is none.  Baseline archives
    are not windowed: each restart's point is kept.
    """
    path = Path(path)
    records = read_jsonl(path)
    if window is None:
        meta = path.parent / RUN_NAME
        window = math.inf
        if meta.exists():
            cfg = json.loads(meta.read_text(encoding="utf-8")).get("config", {})
            window = float(cfg.get("window", math.inf))
    out = LoadedArchive(path, records, window)
    for rec in records:
        w = math.inf if rec.get("kind") == "baseline" else window
        key = rec["descriptor"]
        arch = out.archives.setdefault(key, NicheArchive(w, key))
        if rec["value"] is not None:
            arch.insert(rec, rec["value"], key)
    return out


def rebuild_archives(loaded: LoadedArchive) -> dict[str, NicheArchive]:
    """Archives keyed by descriptor holding parameter vectors, as a run keeps them."""
    out: dict[str, NicheArchive] = {}
    for rec in loaded.records:
        w = math.inf if rec.get("kind") == "baseline" else loaded.window
        key = rec["descriptor"]
        arch = out.setdefault(key, NicheArchive(w, key))
        if rec["value"] is not None:
            arch.insert(np.array(rec["x"], dtype=float), rec["value"], key)
    return out


def write_json(path: str | Path, data: dict) -> None:
    Path(path).write_text(json.dumps(clean(data), indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
