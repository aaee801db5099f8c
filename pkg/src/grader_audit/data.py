"""Observation records, categorical factors, CSV ingestion and validation.

Two dataset kinds are supported:

* Scores: one row per (grader, response) with an ordinal score in 1..K.
* Pairwise: one row per forced choice between two model responses.

Factor level order is always first-appearance order in the source file, so
codes are stable across reloads of the same bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateLengths,
    InconsistentGraderType,
    InvalidValue,
    MissingColumn,
    NegativeTokenCount,
    ScoreOutOfRange,
    SelfComparison,
    UnknownLevel,
)

SCORES_COLUMNS = ("grader", "grader_type", "llm", "item", "score")
PAIRWISE_COLUMNS = (
    "grader",
    "llm_first",
    "llm_second",
    "item",
    "tokens_first",
    "tokens_second",
    "chose_first",
)


class GraderType(str, Enum):
    HUMAN = "human"
    AUTOGRADER = "autograder"


class DatasetKind(str, Enum):
    SCORES = "scores"
    PAIRWISE = "pairwise"


@dataclass(frozen=True)
class FactorTable:
    """Ordered set of categorical levels with a label -> code bijection."""

    name: str
    levels: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.levels)) != len(self.levels):
            raise InvalidValue(f"factor {self.name!r} has duplicate levels")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def codes(self) -> dict[str, int]:
        return {lvl: i for i, lvl in enumerate(self.levels)}

    def code(self, label: str) -> int:
        try:
            return self.codes[label]
        except KeyError:
            raise UnknownLevel(
                f"level {label!r} not in factor {self.name!r} (levels: {list(self.levels)})"
            ) from None

    @classmethod
    def from_values(cls, name: str, values) -> "FactorTable":
        seen: dict[str, None] = {}
        for v in values:
            if v is not None and v not in seen:
                seen[v] = None
        return cls(name=name, levels=tuple(seen))


@dataclass(frozen=True)
class GradeRecord:
    grader: str
    grader_type: GraderType
    llm: str
    item: str | None
    score: int


@dataclass(frozen=True)
class PairwiseRecord:
    grader: str
    llm_first: str
    llm_second: str
    item: str | None
    tokens_first: int
    tokens_second: int
    chose_first: bool


def pair_label(llm_a: str, llm_b: str) -> str:
    """Canonical label for an unordered LLM pair, members in lexicographic order."""
    lo, hi = sorted((llm_a, llm_b))
    return f"{lo}_vs_{hi}"


@dataclass(frozen=True)
class Dataset:
    """Immutable, validated collection of records plus their factor tables."""

    kind: DatasetKind
    records: tuple
    factors: dict[str, FactorTable]
    n_categories: int | None = None
    grader_types: dict[str, GraderType] | None = None

    @property
    def n_records(self) -> int:
        return len(self.records)

    def factor(self, name: str) -> FactorTable:
        try:
            return self.factors[name]
        except KeyError:
            raise UnknownLevel(f"dataset has no factor {name!r}") from None

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if self.kind is DatasetKind.SCORES:
            writer.writerow(SCORES_COLUMNS)
            for r in self.records:
                writer.writerow(
                    [r.grader, r.grader_type.value, r.llm, r.item or "", r.score]
                )
        else:
            writer.writerow(PAIRWISE_COLUMNS)
            for r in self.records:
                writer.writerow(
                    [
                        r.grader,
                        r.llm_first,
                        r.llm_second,
                        r.item or "",
                        r.tokens_first,
                        r.tokens_second,
                        int(r.chose_first),
                    ]
                )
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    def fingerprint(self) -> str:
        """SHA-256 of the canonical CSV serialization (used to match fits)."""
        return hashlib.sha256(self.to_csv_text().encode("utf-8")).hexdigest()


def _open_rows(path, required: tuple[str, ...]):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise MissingColumn(f"{path.name}: missing column(s) {missing}")
        rows = list(reader)
    return rows


def _parse_int(value: str, *, row: int, column: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise InvalidValue(f"row {row}: column {column!r} is not an integer: {value!r}") from None


def load_scores(path, k_categories: int | None = None) -> Dataset:
    """Load and validate a Scores CSV.

    When ``k_categories`` is omitted, K defaults to the maximum observed score.
    """
    rows = _open_rows(path, SCORES_COLUMNS)
    records: list[GradeRecord] = []
    grader_types: dict[str, GraderType] = {}
    for i, row in enumerate(rows, start=1):
        raw_type = (row["grader_type"] or "").strip().lower()
        try:
            gtype = GraderType(raw_type)
        except ValueError:
            raise InvalidValue(
                f"row {i}: grader_type must be 'human' or 'autograder', got {row['grader_type']!r}"
            ) from None
        grader = row["grader"].strip()
        known = grader_types.get(grader)
        if known is not None and known is not gtype:
            raise InconsistentGraderType(
                f"row {i}: grader {grader!r} appears as both {known.value} and {gtype.value}"
            )
        grader_types[grader] = gtype
        score = _parse_int(row["score"], row=i, column="score")
        if score < 1:
            raise ScoreOutOfRange(f"row {i}: score {score} below 1")
        if k_categories is not None and score > k_categories:
            raise ScoreOutOfRange(f"row {i}: score {score} exceeds K={k_categories}")
        item = row["item"].strip() or None
        records.append(
            GradeRecord(
                grader=grader,
                grader_type=gtype,
                llm=row["llm"].strip(),
                item=item,
                score=score,
            )
        )
    if not records:
        raise InvalidValue(f"{Path(path).name}: no data rows")
    k = k_categories if k_categories is not None else max(r.score for r in records)
    if k < 2:
        raise ScoreOutOfRange(f"need K >= 2 score categories, got K={k}")
    factors = {
        "grader": FactorTable.from_values("grader", (r.grader for r in records)),
        "llm": FactorTable.from_values("llm", (r.llm for r in records)),
    }
    items = FactorTable.from_values("item", (r.item for r in records))
    if items.n_levels:
        factors["item"] = items
    return Dataset(
        kind=DatasetKind.SCORES,
        records=tuple(records),
        factors=factors,
        n_categories=k,
        grader_types=grader_types,
    )


def load_pairwise(path) -> Dataset:
    """Load and validate a Pairwise CSV.

    The pair factor is built from unordered LLM pairs, labeled ``A_vs_B`` with
    members in lexicographic order.
    """
    rows = _open_rows(path, PAIRWISE_COLUMNS)
    records: list[PairwiseRecord] = []
    for i, row in enumerate(rows, start=1):
        first = row["llm_first"].strip()
        second = row["llm_second"].strip()
        if first == second:
            raise SelfComparison(f"row {i}: llm_first == llm_second == {first!r}")
        t1 = _parse_int(row["tokens_first"], row=i, column="tokens_first")
        t2 = _parse_int(row["tokens_second"], row=i, column="tokens_second")
        if t1 < 0 or t2 < 0:
            raise NegativeTokenCount(f"row {i}: negative token count ({t1}, {t2})")
        chose = _parse_int(row["chose_first"], row=i, column="chose_first")
        if chose not in (0, 1):
            raise InvalidValue(f"row {i}: chose_first must be 0 or 1, got {chose}")
        item = row["item"].strip() or None
        records.append(
            PairwiseRecord(
                grader=row["grader"].strip(),
                llm_first=first,
                llm_second=second,
                item=item,
                tokens_first=t1,
                tokens_second=t2,
                chose_first=bool(chose),
            )
        )
    if not records:
        raise InvalidValue(f"{Path(path).name}: no data rows")
    llm_levels: dict[str, None] = {}
    for r in records:
        llm_levels.setdefault(r.llm_first, None)
        llm_levels.setdefault(r.llm_second, None)
    factors = {
        "grader": FactorTable.from_values("grader", (r.grader for r in records)),
        "llm": FactorTable(name="llm", levels=tuple(llm_levels)),
        "pair": FactorTable.from_values(
            "pair", (pair_label(r.llm_first, r.llm_second) for r in records)
        ),
    }
    items = FactorTable.from_values("item", (r.item for r in records))
    if items.n_levels:
        factors["item"] = items
    return Dataset(kind=DatasetKind.PAIRWISE, records=tuple(records), factors=factors)


def dataset_from_grade_records(records, k_categories: int) -> Dataset:
    """Assemble a Scores dataset from in-memory records (loader-equivalent)."""
    records = tuple(records)
    grader_types = {}
    for r in records:
        known = grader_types.get(r.grader)
        if known is not None and known is not r.grader_type:
            raise InconsistentGraderType(
                f"grader {r.grader!r} appears as both {known.value} and {r.grader_type.value}"
            )
        grader_types[r.grader] = r.grader_type
        if not 1 <= r.score <= k_categories:
            raise ScoreOutOfRange(f"score {r.score} outside 1..{k_categories}")
    factors = {
        "grader": FactorTable.from_values("grader", (r.grader for r in records)),
        "llm": FactorTable.from_values("llm", (r.llm for r in records)),
    }
    items = FactorTable.from_values("item", (r.item for r in records))
    if items.n_levels:
        factors["item"] = items
    return Dataset(
        kind=DatasetKind.SCORES,
        records=records,
        factors=factors,
        n_categories=k_categories,
        grader_types=grader_types,
    )


def dataset_from_pairwise_records(records) -> Dataset:
    """Assemble a Pairwise dataset from in-memory records (loader-equivalent)."""
    records = tuple(records)
    for r in records:
        if r.llm_first == r.llm_second:
            raise SelfComparison(f"llm_first == llm_second == {r.llm_first!r}")
        if r.tokens_first < 0 or r.tokens_second < 0:
            raise NegativeTokenCount(
                f"negative token count ({r.tokens_first}, {r.tokens_second})"
            )
    llm_levels: dict[str, None] = {}
    for r in records:
        llm_levels.setdefault(r.llm_first, None)
        llm_levels.setdefault(r.llm_second, None)
    factors = {
        "grader": FactorTable.from_values("grader", (r.grader for r in records)),
        "llm": FactorTable(name="llm", levels=tuple(llm_levels)),
        "pair": FactorTable.from_values(
            "pair", (pair_label(r.llm_first, r.llm_second) for r in records)
        ),
    }
    items = FactorTable.from_values("item", (r.item for r in records))
    if items.n_levels:
        factors["item"] = items
    return Dataset(kind=DatasetKind.PAIRWISE, records=records, factors=factors)


def raw_length_diffs(ds: Dataset) -> np.ndarray:
    """Per-record token-length differences, first minus second, as floats."""
    if ds.kind is not DatasetKind.PAIRWISE:
        raise InvalidValue("length differences are defined for pairwise datasets only")
    return np.array(
        [float(r.tokens_first - r.tokens_second) for r in ds.records], dtype=np.float64
    )


def standardize_length_diff(ds: Dataset) -> np.ndarray:
    """Token-length differences centered to mean 0 and scaled to sample SD 1.

    Uses the n-1 denominator. Orientation is preserved: positive values mean
    the first-listed response was longer.
    """
    diffs = raw_length_diffs(ds)
    if diffs.size < 2 or np.all(diffs == diffs[0]):
        raise DegenerateLengths("all token-length differences are identical")
    centered = diffs - diffs.mean()
    sd = centered.std(ddof=1)
    if sd == 0.0:
        raise DegenerateLengths("token-length differences have zero variance")
    return centered / sd
