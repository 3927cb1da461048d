"""Labelled hazard-event records, JSONL I/O, embedding reduction and splits.

One record per line::

    {"id": "...", "severity": 3, "possibility": 2, "risk": 2,
     "embedding": [[...768 floats...], ...]}

or the same with ``"hts": [...]`` instead of ``"embedding"``.  Lines whose
object has the single key ``"_meta"`` carry run metadata and are skipped by
the parser.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import InvalidInput, ParseError, SchemaError
from .series import TimeSeries

EMBEDDING_WIDTH = 768
LABEL_RANGES = {"severity": (1, 5), "possibility": (1, 5), "risk": (1, 4)}
ASPECTS = tuple(LABEL_RANGES)


class Axis(str, enum.Enum):
    OVER_TOKENS = "tokens"  # mean over token rows -> one value per embedding column
    OVER_DIMS = "dims"  # mean over columns -> one value per token


@dataclass(frozen=True, eq=False)
class HaERecord:
    id: str
    severity: int
    possibility: int
    risk: int
    embedding: np.ndarray | None = None
    hts: np.ndarray | None = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise SchemaError("record id must be a non-empty string")
        for aspect, (lo, hi) in LABEL_RANGES.items():
            value = getattr(self, aspect)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise SchemaError(f"{aspect} must be an integer, got {value!r}")
            if not lo <= value <= hi:
                raise SchemaError(f"{aspect}={value} outside [{lo}, {hi}]")
        if (self.embedding is None) == (self.hts is None):
            raise SchemaError("exactly one of 'embedding' and 'hts' must be present")
        if self.embedding is not None:
            emb = np.asarray(self.embedding, dtype=np.float64)
            if emb.ndim != 2 or emb.shape[0] < 1 or emb.shape[1] != EMBEDDING_WIDTH:
                raise SchemaError(
                    f"embedding must be tokens x {EMBEDDING_WIDTH}, got shape {emb.shape}"
                )
            object.__setattr__(self, "embedding", emb)
        else:
            hts = np.asarray(self.hts, dtype=np.float64)
            if hts.ndim != 1 or hts.size < 1:
                raise SchemaError("hts must be a non-empty list of numbers")
            object.__setattr__(self, "hts", hts)

    def label(self, aspect: str) -> int:
        if aspect not in LABEL_RANGES:
            raise InvalidInput(f"unknown aspect {aspect!r}")
        return int(getattr(self, aspect))

    def series(self, axis: Axis | str = Axis.OVER_TOKENS) -> TimeSeries:
        if self.hts is not None:
            return TimeSeries(self.hts)
        return reduce_to_hts(self.embedding, axis)

    def to_json(self) -> str:
        obj = {"id": self.id, "severity": int(self.severity),
               "possibility": int(self.possibility), "risk": int(self.risk)}
        if self.embedding is not None:
            obj["embedding"] = self.embedding.tolist()
        else:
            obj["hts"] = self.hts.tolist()
        return json.dumps(obj)


def _record_from_obj(obj) -> HaERecord:
    if not isinstance(obj, dict):
        raise SchemaError("each line must hold a JSON object")
    missing = [k for k in ("id", *ASPECTS) if k not in obj]
    if missing:
        raise SchemaError(f"missing field(s): {', '.join(missing)}")
    extra = set(obj) - {"id", *ASPECTS, "embedding", "hts"}
    if extra:
        raise SchemaError(f"unknown field(s): {', '.join(sorted(extra))}")
    payload = {}
    for key in ("embedding", "hts"):
        if key in obj:
            try:
                payload[key] = np.asarray(obj[key], dtype=np.float64)
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{key} is not a numeric array: {exc}") from None
    return HaERecord(id=obj["id"], severity=obj["severity"], possibility=obj["possibility"],
                     risk=obj["risk"], **payload)


def parse_records(lines: Iterable[str]) -> list[HaERecord]:
    """Validate JSONL lines into records, in input order.

    Blank lines and ``{"_meta": ...}`` lines are skipped.  The first
    malformed line raises :class:`ParseError` (bad JSON) or
    :class:`SchemaError` (bad content) naming its 1-based line number.
    """
    records = []
    seen = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: malformed JSON ({exc.msg})") from None
        if isinstance(obj, dict) and set(obj) == {"_meta"}:
            continue
        try:
            rec = _record_from_obj(obj)
        except SchemaError as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
        if rec.id in seen:
            raise SchemaError(f"line {lineno}: duplicate record id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def read_meta(lines: Iterable[str]) -> dict | None:
    for line in lines:
        if line.strip():
            obj = json.loads(line)
            return obj["_meta"] if isinstance(obj, dict) and set(obj) == {"_meta"} else None
    return None


def write_records(records: Sequence[HaERecord], fh: TextIO, meta: dict | None = None) -> None:
    if meta is not None:
        fh.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
    for rec in records:
        fh.write(rec.to_json() + "\n")


def reduce_to_hts(matrix, axis: Axis | str = Axis.OVER_TOKENS) -> TimeSeries:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise InvalidInput("embedding matrix must be a non-empty 2-D array")
    return TimeSeries(m.mean(axis=0 if Axis(axis) is Axis.OVER_TOKENS else 1))


@dataclass(frozen=True)
class SplitAssignment:
    train: tuple[str, ...]
    test: tuple[str, ...]
    validation: tuple[str, ...]
    seed: int

    def select(self, records: Sequence[HaERecord], part: str) -> list[HaERecord]:
        by_id = {r.id: r for r in records}
        return [by_id[i] for i in getattr(self, part)]


def split_dataset(records: Sequence[HaERecord], seed: int) -> SplitAssignment:
    """Seeded shuffle then an 8:1:1 train/test/validation cut; remainders go to train."""
    n = len(records)
    if n < 10:
        raise InvalidInput(f"need at least 10 records to split, got {n}")
    order = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    ids = [records[i].id for i in order]
    n_test = n_val = n // 10
    n_train = n - n_test - n_val
    return SplitAssignment(
        train=tuple(ids[:n_train]),
        test=tuple(ids[n_train:n_train + n_test]),
        validation=tuple(ids[n_train + n_test:]),
        seed=seed,
    )
