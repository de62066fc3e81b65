"""Ingestion of MAP-schema homicide files, row filtering and deterministic splits.

A :class:`Dataset` is columnar (a pandas frame with canonical column names)
rather than a list of objects; :class:`Record` views are materialised on
demand when iterating.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

MONTHS = (
    "January", "February", "March", "April", "May", "June", "July",
    "August", "September", "October", "November", "December",
)
_MONTH_LOOKUP = {m.lower(): m for m in MONTHS}
_MONTH_LOOKUP.update({m[:3].lower(): m for m in MONTHS})
_MONTH_LOOKUP.update({str(i + 1): m for i, m in enumerate(MONTHS)})
_MONTH_LOOKUP.update({f"{i + 1:02d}": m for i, m in enumerate(MONTHS)})

UNKNOWN = "Unknown"
MAX_AGE = 120

# raw header -> canonical column
REQUIRED_COLUMNS = {
    "ID": "id",
    "Year": "year",
    "Month": "month",
    "State": "state",
    "Agency": "agency_name",
    "Agentype": "agency_type",
    "Homicide": "homicide_type",
    "VicAge": "victim_age",
    "VicSex": "victim_sex",
    "VicRace": "victim_race",
    "VicCount": "victim_count",
    "OffSex": "offender_sex",
    "OffCount": "offender_count",
    "Circumstance": "circumstance",
    "Weapon": "weapon",
    "Solved": "solved",
}
COLUMNS = tuple(REQUIRED_COLUMNS.values())
CATEGORICAL = (
    "agency_type", "homicide_type", "victim_sex", "victim_race",
    "offender_sex", "circumstance", "weapon",
)
_SEX_LOOKUP = {"male": "Male", "female": "Female", "m": "Male", "f": "Female"}


class SchemaError(ValueError):
    """The input file does not carry a required column."""


class RowError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True, slots=True)
class Record:
    id: str
    year: int
    month: str
    state: str
    agency_name: str
    agency_type: str
    homicide_type: str
    victim_age: int | None
    victim_sex: str
    victim_race: str
    victim_count: int
    offender_count: int
    offender_sex: str
    circumstance: str
    weapon: str
    solved: bool


@dataclass(frozen=True)
class Provenance:
    source: str
    rows_read: int
    rows_kept: int
    rows_dropped: int
    row_errors: tuple[RowError, ...] = ()
    steps: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "source": self.source,
            "rows_read": self.rows_read,
            "rows_kept": self.rows_kept,
            "rows_dropped": self.rows_dropped,
            "row_errors": [str(e) for e in self.row_errors[:100]],
            "steps": list(self.steps),
        }


@dataclass(frozen=True)
class Dataset:
    """Ordered, immutable collection of homicide-victim records.

    ``frame`` holds one row per record with the columns in :data:`COLUMNS`
    (``victim_age`` is a nullable integer). Derived columns such as
    ``monthly_overlap`` may be attached with :meth:`with_column`. The frame
    must not be mutated in place.
    """

    frame: pd.DataFrame
    provenance: Provenance = field(default_factory=lambda: Provenance("<memory>", 0, 0, 0))

    def __len__(self) -> int:
        return len(self.frame)

    def __iter__(self) -> Iterator[Record]:
        cols = [self.frame[c].to_numpy() for c in COLUMNS]
        for values in zip(*cols):
            yield _to_record(values)

    def record(self, i: int) -> Record:
        return _to_record([self.frame[c].iat[i] for c in COLUMNS])

    @property
    def labels(self) -> np.ndarray:
        return self.frame["solved"].to_numpy(dtype=bool)

    def take(self, indices, step: str | None = None) -> "Dataset":
        sub = self.frame.iloc[np.asarray(indices, dtype=np.int64)].reset_index(drop=True)
        prov = self.provenance
        if step is not None:
            prov = replace(prov, steps=prov.steps + (step,))
        return Dataset(sub, prov)

    def with_column(self, name: str, values) -> "Dataset":
        frame = self.frame.copy()
        frame[name] = values
        return Dataset(frame, self.provenance)

    @classmethod
    def from_records(cls, records, source: str = "<memory>") -> "Dataset":
        rows = [
            {c: getattr(r, c) for c in COLUMNS} for r in records
        ]
        frame = pd.DataFrame(rows, columns=list(COLUMNS))
        frame = _coerce_types(frame)
        n = len(frame)
        return cls(frame, Provenance(source, n, n, 0))


def _to_record(values) -> Record:
    kw = dict(zip(COLUMNS, values))
    age = kw["victim_age"]
    kw["victim_age"] = None if age is None or pd.isna(age) else int(age)
    kw["year"] = int(kw["year"])
    kw["victim_count"] = int(kw["victim_count"])
    kw["offender_count"] = int(kw["offender_count"])
    kw["solved"] = bool(kw["solved"])
    return Record(**kw)


def _coerce_types(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.copy()
    frame["year"] = frame["year"].astype(np.int64)
    frame["victim_count"] = frame["victim_count"].astype(np.int64)
    frame["offender_count"] = frame["offender_count"].astype(np.int64)
    frame["victim_age"] = frame["victim_age"].astype("Int64")
    frame["solved"] = frame["solved"].astype(bool)
    for c in ("id", "month", "state", "agency_name") + CATEGORICAL:
        frame[c] = frame[c].astype(object)
    return frame


def canonical_month(value) -> str:
    """Month name from a name, abbreviation or 1-12 number."""
    key = str(value).strip().lower()
    if key in _MONTH_LOOKUP:
        return _MONTH_LOOKUP[key]
    try:
        as_float = float(key)
    except ValueError:
        raise ValueError(f"unrecognised month {value!r}") from None
    if as_float.is_integer() and 1 <= as_float <= 12:
        return MONTHS[int(as_float) - 1]
    raise ValueError(f"unrecognised month {value!r}")


def canonical_sex(value) -> str:
    key = str(value).strip()
    return _SEX_LOOKUP.get(key.lower(), UNKNOWN if not key or "unknown" in key.lower() else key)


def normalize_state(value) -> str:
    return str(value).strip().upper()


def parse_age(value) -> int | None:
    """Victim age in years, or None when unknown (blank, text, 999, > 120)."""
    text = str(value).strip()
    try:
        age = float(text)
    except ValueError:
        return None
    if not age.is_integer() or age < 0 or age > MAX_AGE:
        return None
    return int(age)


def _parse_bool(value) -> bool:
    key = str(value).strip().lower()
    if key in ("yes", "y", "true", "1"):
        return True
    if key in ("no", "n", "false", "0"):
        return False
    raise ValueError(f"unrecognised Solved value {value!r}")


def _parse_int(value, name: str) -> int:
    text = str(value).strip()
    try:
        number = float(text)
    except ValueError:
        raise ValueError(f"unparseable {name} {value!r}") from None
    if not number.is_integer():
        raise ValueError(f"non-integer {name} {value!r}")
    return int(number)


def _resolve_columns(header) -> dict[str, str]:
    lowered = {str(h).strip().lower(): h for h in header}
    mapping = {}
    for raw, canon in REQUIRED_COLUMNS.items():
        if raw.lower() not in lowered:
            raise SchemaError(f"missing required column {raw!r}")
        mapping[lowered[raw.lower()]] = canon
    return mapping


def load_map_csv(path, count_base: str = "auto") -> Dataset:
    """Read a MAP-schema CSV into a :class:`Dataset`.

    Parameters
    ----------
    path : str or Path
        UTF-8 comma-separated file with a header row.
    count_base : {"auto", "total", "additional"}
        How ``VicCount``/``OffCount`` are coded. The public MAP extract
        stores *additional* victims and offenders (0 for a single victim);
        ``"additional"`` adds one to both so they become totals. ``"auto"``
        picks ``"additional"`` when any ``VicCount`` equals 0.

    Rows with an unparseable year, count, month or solved flag are dropped
    and counted in the provenance; blank categorical cells become
    ``"Unknown"``.
    """
    path = Path(path)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False,
                      encoding="utf-8", skipinitialspace=True)
    mapping = _resolve_columns(raw.columns)
    raw = raw[list(mapping)].rename(columns=mapping)
    n_read = len(raw)

    if count_base not in ("auto", "total", "additional"):
        raise ValueError(f"count_base must be auto/total/additional, got {count_base!r}")

    rows = []
    errors: list[RowError] = []
    for offset, values in enumerate(raw[list(COLUMNS)].itertuples(index=False, name=None)):
        line = offset + 2
        kw = dict(zip(COLUMNS, values))
        try:
            rec = {
                "id": str(kw["id"]).strip(),
                "year": _parse_int(kw["year"], "Year"),
                "month": canonical_month(kw["month"]),
                "state": normalize_state(kw["state"]),
                "agency_name": str(kw["agency_name"]).strip() or UNKNOWN,
                "victim_age": parse_age(kw["victim_age"]),
                "victim_count": _parse_int(kw["victim_count"], "VicCount"),
                "offender_count": _parse_int(kw["offender_count"], "OffCount"),
                "solved": _parse_bool(kw["solved"]),
            }
        except ValueError as exc:
            errors.append(RowError(line, str(exc)))
            continue
        for c in CATEGORICAL:
            text = str(kw[c]).strip()
            rec[c] = text if text else UNKNOWN
        rec["victim_sex"] = canonical_sex(rec["victim_sex"])
        rec["offender_sex"] = canonical_sex(rec["offender_sex"])
        rows.append(rec)

    frame = pd.DataFrame(rows, columns=list(COLUMNS))
    if len(frame):
        additional = count_base == "additional" or (
            count_base == "auto" and int(frame["victim_count"].min()) == 0
        )
        if additional:
            frame["victim_count"] += 1
            frame["offender_count"] += 1
        bad = (frame["victim_count"] < 1) | (frame["offender_count"] < 0)
        for i in np.flatnonzero(bad.to_numpy()):
            errors.append(RowError(-1, f"invalid counts for id {frame['id'].iat[i]!r}"))
        frame = frame[~bad.to_numpy()].reset_index(drop=True)
    frame = _coerce_types(frame)

    for err in errors[:20]:
        logger.warning("dropped row: %s", err)
    prov = Provenance(str(path), n_read, len(frame), n_read - len(frame), tuple(errors), ("load",))
    return Dataset(frame, prov)


def filter_unknown_age(d: Dataset) -> Dataset:
    """Keep records whose victim age is known; order is preserved."""
    keep = np.flatnonzero(d.frame["victim_age"].notna().to_numpy())
    out = d.take(keep, step="filter_unknown_age")
    prov = replace(out.provenance, rows_kept=len(out),
                   rows_dropped=out.provenance.rows_read - len(out))
    return Dataset(out.frame, prov)


def derive_target_check(r: Record) -> bool:
    """Solved status implied by the offender's sex (unknown means unsolved)."""
    return r.offender_sex != UNKNOWN


def target_disagreements(d: Dataset) -> int:
    derived = d.frame["offender_sex"].to_numpy() != UNKNOWN
    return int(np.count_nonzero(derived != d.labels))


def permutation(n: int, seed: int) -> np.ndarray:
    """Seeded permutation of ``range(n)`` from the counter-based Philox generator."""
    rng = np.random.Generator(np.random.Philox(int(seed)))
    return rng.permutation(n)


@dataclass(frozen=True)
class SplitPair:
    train: Dataset
    test: Dataset
    seed: int
    train_index: np.ndarray
    test_index: np.ndarray


def train_size(n: int, train_fraction: float) -> int:
    return min(max(int(math.floor(train_fraction * n + 0.5)), 1), n - 1)


def shuffled_split(d: Dataset, train_fraction: float = 0.7, seed: int = 0) -> SplitPair:
    """Shuffle the records with ``seed`` and cut off ``round(fraction * N)`` for training."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = len(d)
    if n < 2:
        raise ValueError(f"cannot split a dataset of {n} record(s)")
    order = permutation(n, seed)
    n_train = train_size(n, train_fraction)
    tr, te = order[:n_train], order[n_train:]
    return SplitPair(d.take(tr, "split:train"), d.take(te, "split:test"), seed, tr, te)


def partition_by_state(d: Dataset) -> dict[str, Dataset]:
    """One dataset per normalised state key, keys in sorted order."""
    states = d.frame["state"].map(normalize_state).to_numpy()
    out = {}
    for state in sorted(set(states)):
        out[state] = d.take(np.flatnonzero(states == state), step=f"state:{state}")
    return out
