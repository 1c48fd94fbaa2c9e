"""Dataset model and on-disk formats.

A dataset directory contains:

    manifest.json    {"name", "n", "image_dim", "text_dim", "encoder_id", "seed", ...}
    image_emb.f32    n * image_dim little-endian float32, row-major, no header
    text_emb.f32     n * text_dim  little-endian float32, row-major, no header
    records.jsonl    one JSON object per sample

Embeddings are stored exactly as the encoder produced them (unnormalized);
normalization is the concern of the distance functions.  Score tables are
CSV with header ``index,method,score,d_mm,s_n,s_m``.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

VALID_SPLITS = ("train", "val", "test")

REQUIRED_MANIFEST_KEYS = ("name", "n", "image_dim", "text_dim", "encoder_id", "seed")

SCORE_CSV_HEADER = ["index", "method", "score", "d_mm", "s_n", "s_m"]


@dataclass(frozen=True)
class SampleRecord:
    """One sample's metadata; embeddings live in the sibling matrices."""

    index: int
    caption_text: str = ""
    class_id: int | None = None
    category: str | None = None
    noun_set: frozenset[str] | None = None
    split: str = "train"
    mislabel_flag: bool | None = None
    swap_source: int | None = None

    def validate(self) -> None:
        if self.index < 0:
            raise ValidationError(f"record {self.index}: index must be >= 0")
        if self.split not in VALID_SPLITS:
            raise ValidationError(
                f"record {self.index}: split {self.split!r} not one of {VALID_SPLITS}"
            )
        if self.swap_source is not None and self.swap_source == self.index:
            raise ValidationError(f"record {self.index}: swap_source equals own index")

    def to_json_obj(self) -> dict:
        obj: dict = {"index": self.index, "caption_text": self.caption_text, "split": self.split}
        if self.class_id is not None:
            obj["class_id"] = self.class_id
        if self.category is not None:
            obj["category"] = self.category
        if self.noun_set is not None:
            obj["noun_set"] = sorted(self.noun_set)
        if self.mislabel_flag is not None:
            obj["mislabel_flag"] = self.mislabel_flag
        if self.swap_source is not None:
            obj["swap_source"] = self.swap_source
        return obj

    @staticmethod
    def from_json_obj(obj: dict, line_no: int) -> "SampleRecord":
        try:
            noun_set = obj.get("noun_set")
            rec = SampleRecord(
                index=int(obj["index"]),
                caption_text=str(obj.get("caption_text", "")),
                class_id=None if obj.get("class_id") is None else int(obj["class_id"]),
                category=None if obj.get("category") is None else str(obj["category"]),
                noun_set=None if noun_set is None else frozenset(str(t) for t in noun_set),
                split=str(obj.get("split", "train")),
                mislabel_flag=None
                if obj.get("mislabel_flag") is None
                else bool(obj["mislabel_flag"]),
                swap_source=None if obj.get("swap_source") is None else int(obj["swap_source"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"records.jsonl line {line_no}: {exc}") from exc
        rec.validate()
        return rec


def _check_embedding_matrix(arr: np.ndarray, label: str) -> np.ndarray:
    """Validate one modality's matrix: 2-D float32, finite, no zero rows."""
    if arr.ndim != 2:
        raise ValidationError(f"{label}: expected a 2-D matrix, got shape {arr.shape}")
    bad = ~np.isfinite(arr)
    if bad.any():
        row = int(np.argwhere(bad)[0][0])
        raise ValidationError(f"{label}: non-finite value at row {row}")
    zero = ~arr.any(axis=1)
    if zero.any():
        row = int(np.argmax(zero))
        raise ValidationError(f"{label}: row {row} is all zeros (cosine distance undefined)")
    return arr


@dataclass
class Dataset:
    """Immutable paired-embedding collection.

    ``image_embeddings`` and ``text_embeddings`` are float32 arrays with one
    row per record; row i belongs to ``records[i]`` and ``records[i].index == i``.
    """

    image_embeddings: np.ndarray
    text_embeddings: np.ndarray
    records: list[SampleRecord]
    manifest: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.records)

    def validate(self) -> None:
        _check_embedding_matrix(self.image_embeddings, "image_emb.f32")
        _check_embedding_matrix(self.text_embeddings, "text_emb.f32")
        n = len(self.records)
        if self.image_embeddings.shape[0] != n or self.text_embeddings.shape[0] != n:
            raise ValidationError(
                f"row counts disagree: {self.image_embeddings.shape[0]} image rows, "
                f"{self.text_embeddings.shape[0]} text rows, {n} records"
            )
        flagged_splits: dict[str, list[bool]] = {}
        for pos, rec in enumerate(self.records):
            rec.validate()
            if rec.index != pos:
                raise ValidationError(
                    f"records.jsonl row {pos}: index {rec.index} does not match position"
                )
            flagged_splits.setdefault(rec.split, []).append(rec.mislabel_flag is not None)
        for split, present in flagged_splits.items():
            if any(present) and not all(present):
                row = present.index(False)
                raise ValidationError(
                    f"split {split!r}: mislabel_flag present on some records but "
                    f"missing on the {row}-th record of the split"
                )

    def split_positions(self, split: str) -> np.ndarray:
        """Row indices belonging to a split, in dataset order."""
        if split not in VALID_SPLITS:
            raise ValidationError(f"unknown split {split!r}")
        return np.array([r.index for r in self.records if r.split == split], dtype=np.int64)

    def with_replaced(
        self,
        text_embeddings: np.ndarray | None = None,
        records: list[SampleRecord] | None = None,
        manifest: dict | None = None,
    ) -> "Dataset":
        """Copy with selected parts swapped out (noise injection uses this)."""
        return Dataset(
            image_embeddings=self.image_embeddings,
            text_embeddings=self.text_embeddings if text_embeddings is None else text_embeddings,
            records=list(self.records) if records is None else records,
            manifest=dict(self.manifest) if manifest is None else manifest,
        )


def _read_f32_matrix(path: Path, n: int, dim: int) -> np.ndarray:
    if not path.is_file():
        raise ValidationError(f"{path.name}: file missing")
    raw = path.read_bytes()
    expected = n * dim * 4
    if len(raw) != expected:
        raise ValidationError(
            f"{path.name}: {len(raw)} bytes but manifest declares n={n}, dim={dim} "
            f"({expected} bytes)"
        )
    arr = np.frombuffer(raw, dtype="<f4").reshape(n, dim)
    return np.ascontiguousarray(arr)


def load_dataset(path: str | os.PathLike) -> Dataset:
    """Load and fully validate a dataset directory."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise ValidationError(f"{manifest_path.name}: file missing in {root}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest.json: invalid JSON ({exc})") from exc
    for key in REQUIRED_MANIFEST_KEYS:
        if key not in manifest:
            raise ValidationError(f"manifest.json: missing key {key!r}")
    n = int(manifest["n"])
    image = _read_f32_matrix(root / "image_emb.f32", n, int(manifest["image_dim"]))
    text = _read_f32_matrix(root / "text_emb.f32", n, int(manifest["text_dim"]))

    records_path = root / "records.jsonl"
    if not records_path.is_file():
        raise ValidationError(f"records.jsonl: file missing in {root}")
    records: list[SampleRecord] = []
    with records_path.open() as fh:
        for line_no, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"records.jsonl line {line_no}: invalid JSON ({exc})") from exc
            records.append(SampleRecord.from_json_obj(obj, line_no))
    if len(records) != n:
        raise ValidationError(f"records.jsonl: {len(records)} records but manifest declares n={n}")

    ds = Dataset(image_embeddings=image, text_embeddings=text, records=records, manifest=manifest)
    ds.validate()
    return ds


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def write_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    """Write a dataset directory; round-trips bit-exactly through load_dataset."""
    dataset.validate()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    manifest = dict(dataset.manifest)
    manifest.setdefault("name", "dataset")
    manifest["n"] = dataset.n
    manifest["image_dim"] = int(dataset.image_embeddings.shape[1])
    manifest["text_dim"] = int(dataset.text_embeddings.shape[1])
    manifest.setdefault("encoder_id", "unknown")
    manifest.setdefault("seed", 0)

    _atomic_write_text(root / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    _atomic_write_bytes(root / "image_emb.f32", dataset.image_embeddings.astype("<f4", copy=False).tobytes())
    _atomic_write_bytes(root / "text_emb.f32", dataset.text_embeddings.astype("<f4", copy=False).tobytes())
    lines = [json.dumps(rec.to_json_obj(), sort_keys=True) for rec in dataset.records]
    _atomic_write_text(root / "records.jsonl", "\n".join(lines) + ("\n" if lines else ""))


@dataclass(frozen=True)
class ScoreBreakdown:
    """The mislabel score and its three components."""

    d_mm: float
    s_n: float
    s_m: float
    s: float


@dataclass(frozen=True)
class ScoreRow:
    index: int
    method: str
    score: float
    breakdown: ScoreBreakdown | None = None


@dataclass
class ScoreTable:
    rows: list[ScoreRow]

    def validate(self) -> None:
        seen: set[int] = set()
        for row in self.rows:
            if row.index in seen:
                raise ValidationError(f"score table: duplicate index {row.index}")
            seen.add(row.index)
            if not math.isfinite(row.score):
                raise ValidationError(f"score table: non-finite score at index {row.index}")

    def indices(self) -> np.ndarray:
        return np.array([r.index for r in self.rows], dtype=np.int64)

    def scores(self) -> np.ndarray:
        return np.array([r.score for r in self.rows], dtype=np.float64)


def _fmt(x: float) -> str:
    # repr of a float is the shortest string that round-trips exactly
    return repr(float(x))


def write_scores(table: ScoreTable, path: str | os.PathLike) -> None:
    table.validate()
    out = Path(path)
    buf = []
    buf.append(",".join(SCORE_CSV_HEADER))
    for row in table.rows:
        if row.breakdown is None:
            extra = ["", "", ""]
        else:
            extra = [_fmt(row.breakdown.d_mm), _fmt(row.breakdown.s_n), _fmt(row.breakdown.s_m)]
        buf.append(",".join([str(row.index), row.method, _fmt(row.score), *extra]))
    _atomic_write_text(out, "\n".join(buf) + "\n")


def read_scores(path: str | os.PathLike) -> ScoreTable:
    src = Path(path)
    if not src.is_file():
        raise ValidationError(f"{src}: file missing")
    rows: list[ScoreRow] = []
    seen: set[int] = set()
    with src.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{src.name}: empty file") from None
        if header != SCORE_CSV_HEADER:
            raise ValidationError(f"{src.name}: bad header {header!r}")
        for line_no, parts in enumerate(reader, start=2):
            if not parts:
                continue
            if len(parts) != len(SCORE_CSV_HEADER):
                raise ValidationError(f"{src.name} line {line_no}: expected 6 fields, got {len(parts)}")
            try:
                index = int(parts[0])
                score = float(parts[2])
            except ValueError as exc:
                raise ValidationError(f"{src.name} line {line_no}: {exc}") from exc
            if index in seen:
                raise ValidationError(f"{src.name} line {line_no}: duplicate index {index}")
            seen.add(index)
            if not math.isfinite(score):
                raise ValidationError(f"{src.name} line {line_no}: non-finite score")
            breakdown = None
            if any(p != "" for p in parts[3:]):
                try:
                    d_mm, s_n, s_m = (float(p) for p in parts[3:])
                except ValueError as exc:
                    raise ValidationError(f"{src.name} line {line_no}: {exc}") from exc
                breakdown = ScoreBreakdown(d_mm=d_mm, s_n=s_n, s_m=s_m, s=score)
            rows.append(ScoreRow(index=index, method=parts[1], score=score, breakdown=breakdown))
    return ScoreTable(rows=rows)


__all__ = [
    "Dataset",
    "SampleRecord",
    "ScoreBreakdown",
    "ScoreRow",
    "ScoreTable",
    "load_dataset",
    "write_dataset",
    "write_scores",
    "read_scores",
    "VALID_SPLITS",
]
