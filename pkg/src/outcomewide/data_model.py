"""Typed columnar cohort tables with explicit per-cell missingness.

A :class:`Dataset` is an ordered collection of :class:`Column` objects, each
carrying a missing mask instead of sentinel values.  Columns are immutable
after construction (the backing arrays are marked read-only), so a dataset can
be shared freely across worker threads; every transform returns a new column
together with a :class:`TransformRecord` that captures the parameters needed
to reproduce or invert it.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateColumnError, IngestionError, ValidationError

CONTINUOUS = "continuous"
BINARY = "binary"
CATEGORICAL = "categorical"
KINDS = (CONTINUOUS, BINARY, CATEGORICAL)

DEFAULT_MISSING_TOKENS = ("", "NA")

#: Level labels used by ``tertile_code``; the code of a cell is the index of
#: its label in this tuple.
TERTILE_LEVELS = ("bottom", "middle", "top")


@dataclass
class Column:
    """One typed column: values plus a boolean mask (True means missing)."""

    name: str
    kind: str
    values: np.ndarray
    missing_mask: np.ndarray
    levels: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown column kind {self.kind!r} for {self.name!r}")
        # copy so marking the arrays read-only cannot alias a caller's array
        self.missing_mask = np.array(self.missing_mask, dtype=bool)
        if self.kind == CATEGORICAL:
            self.values = np.array(self.values, dtype=object)
        else:
            self.values = np.array(self.values, dtype=float)
        if self.values.shape != self.missing_mask.shape or self.values.ndim != 1:
            raise ValidationError(f"column {self.name!r}: values and mask must be 1-d and equal length")
        if self.kind == BINARY:
            obs = self.values[~self.missing_mask]
            bad = ~np.isin(obs, (0.0, 1.0))
            if np.any(bad):
                idx = int(np.flatnonzero(~self.missing_mask)[np.flatnonzero(bad)[0]])
                raise ValidationError(
                    f"binary column {self.name!r} contains non-0/1 value "
                    f"{self.values[idx]!r} at row {idx + 1}"
                )
        if self.kind == CATEGORICAL:
            observed = [v for v, m in zip(self.values, self.missing_mask) if not m]
            if self.levels is None:
                seen: list = []
                for v in observed:
                    if v not in seen:
                        seen.append(v)
                self.levels = tuple(seen)
            else:
                self.levels = tuple(self.levels)
                extra = set(observed) - set(self.levels)
                if extra:
                    raise ValidationError(f"column {self.name!r}: values {sorted(extra)!r} not in declared levels")
        self.values.setflags(write=False)
        self.missing_mask.setflags(write=False)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def n_missing(self) -> int:
        return int(self.missing_mask.sum())

    def observed(self) -> np.ndarray:
        """Values at non-missing positions."""
        return self.values[~self.missing_mask]

    def summary(self) -> dict:
        """(mean, sd) for continuous, prevalence for binary, levels otherwise."""
        obs = self.observed()
        if self.kind == CONTINUOUS:
            if obs.size == 0:
                return {"mean": float("nan"), "sd": float("nan")}
            sd = float(np.std(obs, ddof=1)) if obs.size > 1 else 0.0
            return {"mean": float(np.mean(obs)), "sd": sd}
        if self.kind == BINARY:
            prev = float(np.mean(obs)) if obs.size else float("nan")
            return {"prevalence": prev}
        return {"levels": self.levels}

    def replace(self, values: np.ndarray, missing_mask: np.ndarray | None = None) -> "Column":
        """New column with the same name/kind and different contents."""
        if missing_mask is None:
            missing_mask = np.zeros(len(values), dtype=bool)
        levels = self.levels if self.kind == CATEGORICAL else None
        return Column(self.name, self.kind, np.array(values), np.array(missing_mask), levels=levels)


@dataclass
class TransformRecord:
    """How a column was derived, with enough parameters to redo or undo it."""

    source: str
    transform: str  # standardize | tertile | median_split | none
    parameters: dict = field(default_factory=dict)


@dataclass
class Dataset:
    """Ordered, immutable collection of equal-length columns."""

    columns: dict[str, Column]
    n_rows: int

    def __post_init__(self):
        for col in self.columns.values():
            if len(col) != self.n_rows:
                raise ValidationError(f"column {col.name!r} has {len(col)} rows, dataset has {self.n_rows}")

    @classmethod
    def from_columns(cls, columns: Iterable[Column]) -> "Dataset":
        cols = {}
        n = None
        for col in columns:
            if col.name in cols:
                raise ValidationError(f"duplicate column name {col.name!r}")
            cols[col.name] = col
            n = len(col) if n is None else n
        if n is None:
            raise ValidationError("dataset needs at least one column")
        return cls(cols, n)

    @property
    def names(self) -> tuple:
        return tuple(self.columns)

    def column(self, name: str) -> Column:
        try:
            return self.columns[name]
        except KeyError:
            raise ValidationError(f"no column named {name!r}") from None

    def select(self, names: Sequence[str]) -> "Dataset":
        return Dataset.from_columns(self.column(n) for n in names)

    def with_column(self, col: Column) -> "Dataset":
        """New dataset with ``col`` added or replacing its namesake."""
        cols = dict(self.columns)
        cols[col.name] = col
        return Dataset(cols, self.n_rows)

    def filter_rows(self, keep: np.ndarray) -> "Dataset":
        keep = np.asarray(keep, dtype=bool)
        if keep.shape != (self.n_rows,):
            raise ValidationError("row filter mask has wrong length")
        return Dataset.from_columns(
            c.replace(c.values[keep], c.missing_mask[keep]) for c in self.columns.values()
        )

    def missing_any(self, names: Sequence[str]) -> np.ndarray:
        """Row mask: True where any of the named columns is missing."""
        out = np.zeros(self.n_rows, dtype=bool)
        for n in names:
            out |= self.column(n).missing_mask
        return out

    def equals(self, other: "Dataset") -> bool:
        if self.names != other.names or self.n_rows != other.n_rows:
            return False
        for name in self.names:
            a, b = self.column(name), other.column(name)
            if a.kind != b.kind or not np.array_equal(a.missing_mask, b.missing_mask):
                return False
            ma = ~a.missing_mask
            if a.kind == CATEGORICAL:
                if not all(x == y for x, y in zip(a.values[ma], b.values[ma])):
                    return False
            elif not np.array_equal(a.values[ma], b.values[ma]):
                return False
        return True


def _parse_cell(token: str, kind: str, row: int, name: str):
    if kind == CATEGORICAL:
        return token
    try:
        x = float(token)
    except ValueError:
        raise IngestionError(
            f"row {row}, column {name!r}: cannot parse {token!r} as {kind}"
        ) from None
    if kind == BINARY and x not in (0.0, 1.0):
        raise IngestionError(f"row {row}, column {name!r}: binary value must be 0 or 1, got {token!r}")
    return x


def load_table(
    source,
    schema: Mapping[str, str],
    *,
    delimiter: str = ",",
    missing_tokens: Sequence[str] = DEFAULT_MISSING_TOKENS,
) -> Dataset:
    """Read a delimited text table into a typed :class:`Dataset`.

    Parameters
    ----------
    source
        Path, text, or an open text/byte stream.  Must start with a header row.
    schema
        Mapping of column name to kind; every name must appear in the header.
        Columns present in the file but absent from the schema are ignored.
    delimiter
        Field separator; comma by default, "\\t" for tab-separated files.
    missing_tokens
        Cell values (after stripping whitespace) treated as missing.
    """
    for name, kind in schema.items():
        if kind not in KINDS:
            raise ValidationError(f"schema declares unknown kind {kind!r} for {name!r}")
    if hasattr(source, "read"):
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, str) and "\n" not in source and Path(source).exists():
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = str(source)

    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise IngestionError("empty input: no header row") from None
    header = [h.strip() for h in header]
    seen = set()
    for h in header:
        if h in seen:
            raise IngestionError(f"duplicate header {h!r}")
        seen.add(h)
    missing_cols = [n for n in schema if n not in seen]
    if missing_cols:
        raise IngestionError(f"schema columns not found in header: {missing_cols}")

    positions = {name: header.index(name) for name in schema}
    tokens = set(missing_tokens)
    raw_values: dict[str, list] = {name: [] for name in schema}
    masks: dict[str, list] = {name: [] for name in schema}
    n_rows = 0
    for i, row in enumerate(reader, start=1):
        if len(row) != len(header):
            raise IngestionError(f"row {i}: expected {len(header)} fields, got {len(row)}")
        n_rows += 1
        for name, kind in schema.items():
            token = row[positions[name]].strip()
            if token in tokens:
                masks[name].append(True)
                raw_values[name].append("" if kind == CATEGORICAL else np.nan)
            else:
                masks[name].append(False)
                raw_values[name].append(_parse_cell(token, kind, i, name))

    columns = [
        Column(name, kind, np.array(raw_values[name], dtype=object if kind == CATEGORICAL else float),
               np.array(masks[name], dtype=bool))
        for name, kind in schema.items()
    ]
    ds = Dataset.from_columns(columns)
    if ds.n_rows != n_rows:
        raise IngestionError("internal row-count mismatch")
    return ds


def _format_cell(col: Column, i: int, missing_token: str) -> str:
    if col.missing_mask[i]:
        return missing_token
    v = col.values[i]
    if col.kind == CATEGORICAL:
        return str(v)
    if col.kind == BINARY:
        return str(int(v))
    return repr(float(v))


def write_table(dataset: Dataset, dest, *, delimiter: str = ",", missing_token: str = "") -> None:
    """Write a dataset back to delimited text; floats round-trip exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(dataset.names)
    for i in range(dataset.n_rows):
        writer.writerow([_format_cell(dataset.column(n), i, missing_token) for n in dataset.names])
    text = buf.getvalue()
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text, encoding="utf-8")


def standardize_column(col: Column) -> tuple[Column, TransformRecord]:
    """Center and scale a continuous column to mean 0, sample sd 1.

    The record stores the (mean, sd) that were removed so reports can state
    what one unit of the transformed scale means, and so the transform can be
    replayed on imputed copies of the data or inverted exactly.
    """
    if col.kind != CONTINUOUS:
        raise ValidationError(f"standardize expects a continuous column, got {col.kind} {col.name!r}")
    obs = col.observed()
    if obs.size < 2:
        raise DegenerateColumnError(f"column {col.name!r} has fewer than 2 observed values")
    mean = float(np.mean(obs))
    sd = float(np.std(obs, ddof=1))
    if sd == 0.0:
        raise DegenerateColumnError(f"column {col.name!r} is constant; sd is zero")
    record = TransformRecord(col.name, "standardize", {"mean": mean, "sd": sd})
    return apply_standardize(col, record), record


def apply_standardize(col: Column, record: TransformRecord) -> Column:
    """Apply a frozen standardize record (used to replay on imputed data)."""
    mean, sd = record.parameters["mean"], record.parameters["sd"]
    values = np.where(col.missing_mask, np.nan, (col.values - mean) / sd)
    return col.replace(values, col.missing_mask)


def unstandardize_column(col: Column, record: TransformRecord) -> Column:
    """Invert :func:`standardize_column` using its record."""
    mean, sd = record.parameters["mean"], record.parameters["sd"]
    values = np.where(col.missing_mask, np.nan, col.values * sd + mean)
    return col.replace(values, col.missing_mask)


def _type1_quantile(sorted_obs: np.ndarray, p: float) -> float:
    # inverted empirical CDF: smallest order statistic with CDF >= p
    m = sorted_obs.size
    idx = int(np.ceil(m * p)) - 1
    return float(sorted_obs[max(idx, 0)])


def tertile_code(col: Column) -> tuple[Column, TransformRecord]:
    """Code a continuous column into tertiles (levels bottom/middle/top).

    Cut points are the 1/3 and 2/3 type-1 quantiles; ties at a cut point go
    to the lower tertile.  The code of a cell is the index of its level in
    :data:`TERTILE_LEVELS`.
    """
    if col.kind != CONTINUOUS:
        raise ValidationError(f"tertile_code expects a continuous column, got {col.kind} {col.name!r}")
    obs = col.observed()
    if np.unique(obs).size < 3:
        raise DegenerateColumnError(f"column {col.name!r} has fewer than 3 distinct values")
    srt = np.sort(obs)
    q1 = _type1_quantile(srt, 1.0 / 3.0)
    q2 = _type1_quantile(srt, 2.0 / 3.0)
    record = TransformRecord(col.name, "tertile", {"cuts": (q1, q2)})
    return apply_tertile(col, record), record


def apply_tertile(col: Column, record: TransformRecord) -> Column:
    q1, q2 = record.parameters["cuts"]
    codes = np.where(col.values <= q1, 0, np.where(col.values <= q2, 1, 2))
    values = np.array([TERTILE_LEVELS[c] if not m else "" for c, m in zip(codes, col.missing_mask)],
                      dtype=object)
    return Column(col.name, CATEGORICAL, values, np.array(col.missing_mask), levels=TERTILE_LEVELS)


def median_split(col: Column) -> tuple[Column, TransformRecord]:
    """Dichotomize a continuous column at its median (strictly above -> 1)."""
    if col.kind != CONTINUOUS:
        raise ValidationError(f"median_split expects a continuous column, got {col.kind} {col.name!r}")
    obs = col.observed()
    if obs.size == 0:
        raise DegenerateColumnError(f"column {col.name!r} has no observed values")
    med = float(np.median(obs))
    record = TransformRecord(col.name, "median_split", {"median": med})
    return apply_median_split(col, record), record


def apply_median_split(col: Column, record: TransformRecord) -> Column:
    med = record.parameters["median"]
    values = np.where(col.missing_mask, np.nan, (col.values > med).astype(float))
    return Column(col.name, BINARY, values, np.array(col.missing_mask))


def column_prevalence(col: Column) -> float:
    """Mean of the observed values of a binary column."""
    if col.kind != BINARY:
        raise ValidationError(f"prevalence is defined for binary columns, got {col.kind} {col.name!r}")
    obs = col.observed()
    if obs.size == 0:
        raise DegenerateColumnError(f"column {col.name!r} has no observed values")
    return float(np.mean(obs))
