"""Dataset ingestion and nonconformity scoring.

A dataset row carries a feature vector plus exactly one of: a strong
label ``y``, a weak label set ``y_set`` (finite candidates, one of which
is the truth), or a precomputed nonconformity ``score``.  Scores follow
the convention that larger means worse model error.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

Score = float
ScoreFn = Callable[[Sequence[float], float], float]

WEAK_DELIMITER = "|"
_RESERVED_COLUMNS = ("y", "y_set", "score")


class MalformedInputError(ValueError):
    """Input file cannot be parsed into a dataset; message names the row."""


@dataclass(frozen=True)
class LabeledPoint:
    """One observation: features plus a strong label, weak set, or score."""

    x: tuple[float, ...]
    y: float | None = None
    y_set: tuple[float, ...] | None = None
    score: float | None = None

    def __post_init__(self):
        if self.y is not None and self.y_set is not None:
            raise ValueError("point cannot carry both y and y_set")
        if self.y is None and self.y_set is None and self.score is None:
            raise ValueError("point needs a label (y or y_set) or a score")
        if self.y_set is not None and len(self.y_set) == 0:
            raise ValueError("weak label set must be nonempty")

    @property
    def is_weak(self) -> bool:
        return self.y_set is not None


@dataclass
class ScoreSample:
    """A scored observation; origin records which split it came from."""

    index: int
    score: float
    origin: str  # "calibration" | "test"

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"score at index {self.index} is not finite")
        if self.origin not in ("calibration", "test"):
            raise ValueError(f"unknown origin {self.origin!r}")


@dataclass
class Dataset:
    points: list[LabeledPoint]
    role: str = "calibration"  # "calibration" | "test"

    def __post_init__(self):
        if not self.points:
            raise ValueError("dataset must be nonempty")
        if self.role not in ("calibration", "test"):
            raise ValueError(f"unknown role {self.role!r}")
        dims = {len(p.x) for p in self.points}
        if len(dims) > 1:
            raise ValueError(f"inconsistent feature dimensions: {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def features(self) -> np.ndarray:
        return np.asarray([p.x for p in self.points], dtype=float)


def residual_score(x, y: float, predict) -> float:
    """Absolute residual |y - predict(x)| of a point prediction."""
    pred = float(predict(x))
    if not math.isfinite(pred):
        raise ValueError(f"prediction is not finite: {pred!r}")
    return abs(float(y) - pred)


def min_score(x, w: Iterable[float], score_fn: ScoreFn) -> float:
    """Most optimistic score over a weak label set: min_{y in w} score_fn(x, y)."""
    candidates = list(w)
    if not candidates:
        raise ValueError("weak label set must be nonempty")
    return min(score_fn(x, float(y)) for y in candidates)


def score_dataset(dataset: Dataset, predict=None, score_fn: ScoreFn | None = None) -> np.ndarray:
    """Nonconformity scores for every point, in row order.

    Precomputed ``score`` fields win; strong labels go through
    ``score_fn`` (default: absolute residual of ``predict``); weak sets
    take the minimum of ``score_fn`` over their candidates.
    """
    if score_fn is None and predict is not None:
        score_fn = lambda x, y: residual_score(x, y, predict)  # noqa: E731
    out = np.empty(len(dataset.points), dtype=float)
    for i, p in enumerate(dataset.points):
        if p.score is not None:
            out[i] = p.score
        elif score_fn is None:
            raise ValueError(
                f"row {i} has no precomputed score and no predictor/score_fn was supplied"
            )
        elif p.is_weak:
            out[i] = min_score(p.x, p.y_set, score_fn)
        else:
            out[i] = score_fn(p.x, p.y)
        if not math.isfinite(out[i]):
            raise ValueError(f"row {i} produced a non-finite score")
    return out


def score_samples(dataset: Dataset, predict=None, score_fn: ScoreFn | None = None) -> list[ScoreSample]:
    """score_dataset wrapped into ScoreSample records, tagged with the
    dataset's role."""
    scores = score_dataset(dataset, predict=predict, score_fn=score_fn)
    return [ScoreSample(index=i, score=float(s), origin=dataset.role)
            for i, s in enumerate(scores)]


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise MalformedInputError(f"row {row}: cannot parse {col}={text!r} as a number") from None


def _point_from_fields(x, y_txt, yset_txt, score_txt, row: int) -> LabeledPoint:
    y = _parse_float(y_txt, row, "y") if y_txt else None
    score = _parse_float(score_txt, row, "score") if score_txt else None
    y_set = None
    if yset_txt:
        y_set = tuple(_parse_float(t, row, "y_set") for t in str(yset_txt).split(WEAK_DELIMITER))
    try:
        return LabeledPoint(x=tuple(x), y=y, y_set=y_set, score=score)
    except ValueError as exc:
        raise MalformedInputError(f"row {row}: {exc}") from None


def _infer_format(path: Path, format: str | None) -> str:
    if format is not None:
        if format not in ("csv", "json"):
            raise ValueError(f"unknown format {format!r}")
        return format
    suffix = path.suffix.lower().lstrip(".")
    if suffix in ("csv", "json"):
        return suffix
    raise ValueError(f"cannot infer format from {path.name!r}; pass format='csv' or 'json'")


def load_dataset(path, format: str | None = None, role: str = "calibration") -> Dataset:
    """Read a CSV (with header) or JSON (array of objects) dataset.

    CSV feature columns are every column not named y / y_set / score;
    weak sets are pipe-delimited in the y_set column.  Strong and weak
    rows may be mixed within one file.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    fmt = _infer_format(path, format)
    points: list[LabeledPoint] = []
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise MalformedInputError(f"{path}: empty file, expected a header row")
            feature_cols = [c for c in reader.fieldnames if c not in _RESERVED_COLUMNS]
            for rownum, rec in enumerate(reader, start=1):
                x = [_parse_float(rec[c], rownum, c) for c in feature_cols if rec.get(c)]
                points.append(
                    _point_from_fields(
                        x, rec.get("y", ""), rec.get("y_set", ""), rec.get("score", ""), rownum
                    )
                )
    else:
        with open(path, encoding="utf-8") as fh:
            try:
                records = json.load(fh)
            except json.JSONDecodeError as exc:
                raise MalformedInputError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(records, list):
            raise MalformedInputError(f"{path}: expected a JSON array of objects")
        for rownum, rec in enumerate(records, start=1):
            if not isinstance(rec, dict):
                raise MalformedInputError(f"row {rownum}: expected an object")
            x = rec.get("x", [])
            yset = rec.get("y_set")
            yset_txt = WEAK_DELIMITER.join(str(v) for v in yset) if yset is not None else ""
            y = rec.get("y")
            score = rec.get("score")
            points.append(
                _point_from_fields(
                    [float(v) for v in x],
                    "" if y is None else str(y),
                    yset_txt,
                    "" if score is None else str(score),
                    rownum,
                )
            )
    if not points:
        raise MalformedInputError(f"{path}: no data rows")
    return Dataset(points=points, role=role)


def write_dataset(dataset: Dataset, path, format: str | None = None) -> None:
    """Serialize a dataset so that load_dataset round-trips it exactly."""
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "csv":
        dim = len(dataset.points[0].x)
        cols = [f"x{j + 1}" for j in range(dim)] + ["y", "y_set", "score"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for p in dataset.points:
                yset = WEAK_DELIMITER.join(repr(v) for v in p.y_set) if p.y_set else ""
                writer.writerow(
                    [repr(v) for v in p.x]
                    + ["" if p.y is None else repr(p.y), yset, "" if p.score is None else repr(p.score)]
                )
    else:
        records = []
        for p in dataset.points:
            rec: dict = {"x": list(p.x)}
            if p.y is not None:
                rec["y"] = p.y
            if p.y_set is not None:
                rec["y_set"] = list(p.y_set)
            if p.score is not None:
                rec["score"] = p.score
            records.append(rec)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(records, fh)
            fh.write("\n")
