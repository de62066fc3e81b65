"""Design-matrix construction: one-hot groups, age/decade binning and the
monthly-overlap flag."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import MONTHS, Dataset, UNKNOWN

MIN_YEAR, MAX_YEAR = 1976, 2019
# upper (inclusive) edges; the first bin is [0, 5], then (5, 10], ...
DEFAULT_AGE_EDGES = tuple(range(5, 101, 5))

BINARY, COUNT = "binary", "count"

# group name -> source column; order is the column order of the matrix
ONE_HOT_GROUPS = {
    "Decade": "year",
    "Month": "month",
    "Homicide Type": "homicide_type",
    "Age": "victim_age",
    "Victim Sex": "victim_sex",
    "Victim Race": "victim_race",
    "Circumstance": "circumstance",
    "Weapon": "weapon",
    "Agency": "agency_type",
}
COUNT_FEATURES = {
    "N of Victims": "victim_count",
    "N of Offenders": "offender_count",
    "Monthly State/Agency Overlap": "monthly_overlap",
}
GROUP_ORDER = (
    "Decade", "Month", "Homicide Type", "Age", "Victim Sex", "Victim Race",
    "N of Victims", "Circumstance", "Weapon", "N of Offenders",
    "Monthly State/Agency Overlap", "Agency",
)

# MAP spellings whose display label differs from plain title case
LEVEL_LABELS = {
    "Circumstances undetermined": "Undetermined",
    "Firearm, type not stated": "Firearm",
    "Handgun - pistol, revolver, etc": "Handgun",
    "Knife or cutting instrument": "Knife or Cutting Instrument",
    "Juvenile gang killings": "Juvenile Gang-related",
}
_SMALL_WORDS = {"or", "and", "of", "by", "over", "in", "the", "a", "to", "with", "on", "for"}


def display_label(level: str) -> str:
    if level in LEVEL_LABELS:
        return LEVEL_LABELS[level]
    words = str(level).split(" ")
    out = []
    for i, w in enumerate(words):
        if i > 0 and w.lower() in _SMALL_WORDS:
            out.append(w.lower())
        else:
            out.append(w[:1].upper() + w[1:])
    return " ".join(out)


def bin_decade(year: int) -> str:
    if not MIN_YEAR <= int(year) <= MAX_YEAR:
        raise ValueError(f"year {year} outside {MIN_YEAR}-{MAX_YEAR}")
    return f"{int(year) // 10 * 10}s"


def age_labels(edges: Sequence[int] = DEFAULT_AGE_EDGES) -> list[str]:
    labels = [f"0-{edges[0]}"]
    labels += [f"{lo + 1}-{hi}" for lo, hi in zip(edges[:-1], edges[1:])]
    labels.append(f"{edges[-1] + 1}+")
    return labels


def bin_age(age: int, edges: Sequence[int] = DEFAULT_AGE_EDGES) -> str:
    """Label of the age span containing ``age``.

    >>> bin_age(3), bin_age(6), bin_age(100), bin_age(101)
    ('0-5', '6-10', '96-100', '101+')
    """
    if age is None or age < 0 or age > 120:
        raise ValueError(f"age {age!r} outside 0-120")
    idx = int(np.searchsorted(np.asarray(edges), age, side="left"))
    return age_labels(edges)[idx]


def compute_monthly_overlap(d: Dataset) -> np.ndarray:
    """1 where the same agency/state/year/month handled another event id."""
    if len(d) == 0:
        return np.zeros(0, dtype=np.int64)
    f = d.frame
    keys = [f["agency_name"], f["state"], f["year"], f["month"]]
    n_ids = f.groupby(keys, sort=False)["id"].transform("nunique")
    return (n_ids.to_numpy() > 1).astype(np.int64)


def with_monthly_overlap(d: Dataset) -> Dataset:
    """Attach the overlap flag computed over the whole of ``d``.

    Compute this on the full data before splitting so that a record's
    counterpart in the other split still counts.
    """
    return d.with_column("monthly_overlap", compute_monthly_overlap(d))


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[tuple[str, str], ...]
    groups: dict[str, tuple[str, ...]]
    age_edges: tuple[int, ...] = DEFAULT_AGE_EDGES
    decade_labels: tuple[str, ...] = ()
    excluded: tuple[str, ...] = ()
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        names = [c[0] for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature column names")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @property
    def names(self) -> list[str]:
        return [c[0] for c in self.columns]

    def __len__(self) -> int:
        return len(self.columns)

    def index(self, name: str) -> int:
        return self._index[name]

    def to_dict(self) -> dict:
        return {
            "columns": [{"name": n, "kind": k} for n, k in self.columns],
            "groups": {g: list(levels) for g, levels in self.groups.items()},
            "age_edges": list(self.age_edges),
            "decade_labels": list(self.decade_labels),
            "excluded": list(self.excluded),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        return cls(
            columns=tuple((c["name"], c["kind"]) for c in doc["columns"]),
            groups={g: tuple(v) for g, v in doc["groups"].items()},
            age_edges=tuple(doc["age_edges"]),
            decade_labels=tuple(doc["decade_labels"]),
            excluded=tuple(doc.get("excluded", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


@dataclass(frozen=True)
class FeatureMatrix:
    schema: FeatureSchema
    values: np.ndarray
    labels: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def take(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.schema, self.values[idx], self.labels[idx])


def _source_levels(d: Dataset, group: str, edges) -> np.ndarray:
    f = d.frame
    if group == "Decade":
        return np.array([bin_decade(y) for y in f["year"].to_numpy()], dtype=object)
    if group == "Age":
        ages = f["victim_age"]
        if ages.isna().any():
            raise ValueError("unknown victim ages must be filtered before encoding")
        return np.array([bin_age(int(a), edges) for a in ages.to_numpy()], dtype=object)
    return f[ONE_HOT_GROUPS[group]].fillna(UNKNOWN).to_numpy(dtype=object)


def _ordered_levels(group: str, observed, edges) -> tuple[str, ...]:
    observed = set(observed)
    if group == "Month":
        return tuple(m for m in MONTHS if m in observed)
    if group == "Age":
        return tuple(a for a in age_labels(edges) if a in observed)
    return tuple(sorted(observed))


def fit_schema(d: Dataset, age_edges: Sequence[int] = DEFAULT_AGE_EDGES,
               exclude: Sequence[str] = ()) -> FeatureSchema:
    """Build the column dictionary from (training) data.

    ``exclude`` names groups to drop, e.g. ``("Decade",)``.
    """
    edges = tuple(int(e) for e in age_edges)
    if list(edges) != sorted(set(edges)) or edges[0] < 0:
        raise ValueError("age edges must be strictly increasing and non-negative")
    unknown = set(exclude) - set(GROUP_ORDER)
    if unknown:
        raise ValueError(f"unknown feature groups {sorted(unknown)}")
    columns, groups = [], {}
    for group in GROUP_ORDER:
        if group in exclude:
            continue
        if group in COUNT_FEATURES:
            columns.append((group, COUNT))
            continue
        levels = _ordered_levels(group, _source_levels(d, group, edges), edges)
        groups[group] = levels
        seen = set()
        for level in levels:
            name = f"{group}: {display_label(level)}"
            if name in seen:
                name = f"{group}: {level}"
            seen.add(name)
            columns.append((name, BINARY))
    decades = groups.get("Decade", ())
    return FeatureSchema(tuple(columns), groups, edges, tuple(decades), tuple(exclude))


def encode(d: Dataset, s: FeatureSchema) -> FeatureMatrix:
    """Encode ``d`` against a frozen schema; unseen levels give an all-zero group."""
    if len(s) == 0:
        raise ValueError("cannot encode with an empty schema")
    n = len(d)
    X = np.zeros((n, len(s)), dtype=np.float64)
    col = 0
    for group in GROUP_ORDER:
        if group in s.excluded:
            continue
        if group in COUNT_FEATURES:
            source = COUNT_FEATURES[group]
            if source == "monthly_overlap" and source not in d.frame:
                X[:, col] = compute_monthly_overlap(d)
            else:
                X[:, col] = d.frame[source].to_numpy(dtype=np.float64)
            col += 1
            continue
        levels = s.groups[group]
        lookup = {lv: j for j, lv in enumerate(levels)}
        if n:
            codes = np.fromiter((lookup.get(v, -1) for v in _source_levels(d, group, s.age_edges)),
                                dtype=np.int64, count=n)
            hit = codes >= 0
            X[np.flatnonzero(hit), col + codes[hit]] = 1.0
        col += len(levels)
    assert col == len(s)
    return FeatureMatrix(s, X, d.labels.copy())
