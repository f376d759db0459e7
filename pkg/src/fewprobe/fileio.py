"""File formats: embeddings (CSV and binary), tasks/labels JSONL,
fingerprints CSV, episode manifests JSONL, results CSV, run manifests.

All text files are UTF-8 with LF line endings; floats are printed with 17
significant digits so write -> read -> write is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .core import BinaryFingerprint, EmbeddingSet
from .episodes import TaskRecord, TaskSample

EMB_MAGIC = b"EMB1"
TOOL_VERSION = "fewprobe 0.1.0"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# Embeddings


def write_embeddings_csv(path: str | Path, embeddings: EmbeddingSet) -> None:
    d = embeddings.dim
    header = "id," + ",".join(f"e{j}" for j in range(d))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for sample_id in sorted(embeddings.entries):
            v = embeddings.entries[sample_id]
            fh.write(sample_id + "," + ",".join(_fmt(x) for x in v) + "\n")


def read_embeddings_csv(path: str | Path) -> EmbeddingSet:
    vectors: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "id":
            raise ValueError(f"{path}: expected header starting with 'id'")
        d = len(header) - 1
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != d + 1:
                raise ValueError(f"{path}:{line_no}: expected {d + 1} fields")
            vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
    return EmbeddingSet.from_vectors(vectors)


def write_embeddings_binary(path: str | Path, embeddings: EmbeddingSet) -> None:
    """Binary variant: magic EMB1, u32 count, u32 dim (little-endian),
    float32 rows in id order, then the ids as LF-separated UTF-8."""
    ids = sorted(embeddings.entries)
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", len(ids), embeddings.dim))
        for sample_id in ids:
            fh.write(embeddings.entries[sample_id].astype("<f4").tobytes())
        fh.write("\n".join(ids).encode("utf-8"))


def read_embeddings_binary(path: str | Path) -> EmbeddingSet:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMB_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        count, dim = struct.unpack("<II", fh.read(8))
        rows = np.frombuffer(fh.read(count * dim * 4), dtype="<f4")
        rows = rows.reshape(count, dim).astype(np.float64)
        ids = fh.read().decode("utf-8").split("\n")
    if len(ids) != count:
        raise ValueError(f"{path}: id table has {len(ids)} entries, "
                         f"expected {count}")
    return EmbeddingSet.from_vectors({i: r for i, r in zip(ids, rows)})


def read_embeddings(path: str | Path) -> EmbeddingSet:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == EMB_MAGIC:
        return read_embeddings_binary(path)
    return read_embeddings_csv(path)


# ---------------------------------------------------------------------------
# Tasks (JSONL, one object per sample)


@dataclass
class ParseReport:
    bad_lines: list[int] = field(default_factory=list)


def read_tasks_jsonl(path: str | Path,
                     report: ParseReport | None = None) -> list[TaskRecord]:
    """Read {"task_id", "sample_id", "label"|"activity"} records.

    Malformed lines are recorded in ``report`` (with line numbers) and
    skipped.
    """
    grouped: dict[str, list[TaskSample]] = {}
    order: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                task_id = obj["task_id"]
                sample_id = obj["sample_id"]
                label = obj.get("label")
                activity = obj.get("activity")
                if label is None and activity is None:
                    raise KeyError("label or activity required")
                if label is not None and int(label) not in (0, 1):
                    raise ValueError("label must be 0 or 1")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                if report is not None:
                    report.bad_lines.append(line_no)
                continue
            if task_id not in grouped:
                grouped[task_id] = []
                order.append(task_id)
            grouped[task_id].append(TaskSample(
                sample_id=sample_id,
                activity=None if activity is None else float(activity),
                label=None if label is None else int(label)))
    return [TaskRecord(task_id=t, samples=tuple(grouped[t])) for t in order]


def write_tasks_jsonl(path: str | Path, tasks: Sequence[TaskRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for task in tasks:
            for s in task.samples:
                obj: dict = {"task_id": task.task_id, "sample_id": s.sample_id}
                if s.label is not None:
                    obj["label"] = int(s.label)
                elif s.activity is not None:
                    obj["activity"] = float(s.activity)
                fh.write(json.dumps(obj, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Fingerprints (CSV id,hexstring with a bit-length comment header)


def write_fingerprints_csv(path: str | Path,
                           fingerprints: dict[str, BinaryFingerprint]) -> None:
    n_bits = len(next(iter(fingerprints.values())))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# bits={n_bits}\n")
        fh.write("id,fingerprint\n")
        for sample_id in sorted(fingerprints):
            fh.write(f"{sample_id},{fingerprints[sample_id].to_hex()}\n")


def read_fingerprints_csv(path: str | Path) -> dict[str, BinaryFingerprint]:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# bits="):
            raise ValueError(f"{path}: missing '# bits=' header")
        n_bits = int(first.split("=", 1)[1])
        header = fh.readline().strip()
        if header != "id,fingerprint":
            raise ValueError(f"{path}: bad column header {header!r}")
        out = {}
        for line in fh:
            line = line.strip()
            if not line:
                continue
            sample_id, hexstring = line.split(",", 1)
            out[sample_id] = BinaryFingerprint.from_hex(hexstring, n_bits)
    return out


# ---------------------------------------------------------------------------
# Episode manifests


def write_episode_manifest(path: str | Path, episodes: Iterable) -> None:
    from .core import Episode  # local to avoid cycle in type checkers

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for repeat, ep in episodes:
            fh.write(json.dumps({
                "task_id": ep.task_id,
                "repeat": repeat,
                "support_ids": [s.id for s in ep.support],
                "support_labels": [s.label for s in ep.support],
                "query_ids": [q.id for q in ep.query],
                "query_labels": [q.label for q in ep.query],
            }, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Results and manifests


def write_results_csv(path: str | Path, rows: pd.DataFrame) -> None:
    """Fixed-order CSV with 17-significant-digit floats."""
    columns = list(rows.columns)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for _, row in rows.iterrows():
            cells = []
            for col in columns:
                val = row[col]
                if isinstance(val, (float, np.floating)):
                    cells.append(_fmt(val))
                else:
                    cells.append(str(val))
            fh.write(",".join(cells) + "\n")


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Reproducibility envelope written next to every results file."""

    config: dict
    input_digests: dict[str, str]
    master_seed: int
    tool_version: str = TOOL_VERSION
    wall_clock: str = ""
    stage_timings: dict[str, float] = field(default_factory=dict)

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump({
                "tool_version": self.tool_version,
                "master_seed": self.master_seed,
                "config": self.config,
                "input_digests": self.input_digests,
                "wall_clock": self.wall_clock,
                "stage_timings": self.stage_timings,
            }, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def now() -> str:
        return time.strftime("%Y-%m-%dT%H:%M:%S%z")
