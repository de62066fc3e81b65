"""Deterministic record linkage between MAP records and a city-level
homicide file (Washington Post schema) on a five-field composite key."""
from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .dataset import Dataset, canonical_month, canonical_sex, parse_age

# disposition (case-folded) -> solved; anything unlisted counts as unsolved
DEFAULT_DISPOSITIONS: dict[str, bool] = {
    "closed by arrest": True,
    "closed without arrest": False,
    "open/no arrest": False,
}
WP_COLUMNS = ("city", "reported_date", "victim_age", "victim_sex", "disposition")


class MatchKeyError(ValueError):
    """A composite key could not be built from the given fields."""


def build_code(year, month, city, victim_age, victim_sex) -> str:
    """``"{year}-{Month}-{city}-{age}-{Sex}"`` with a trimmed, case-folded city.

    >>> build_code(2015, "jan", " Baltimore ", 25, "male")
    '2015-January-baltimore-25-Male'
    """
    values = {"year": year, "month": month, "city": city, "victim_age": victim_age,
              "victim_sex": victim_sex}
    for name, v in values.items():
        if v is None or (isinstance(v, float) and np.isnan(v)) or str(v).strip() == "":
            raise MatchKeyError(f"missing {name}")
    age = parse_age(victim_age)
    if age is None:
        raise MatchKeyError(f"unusable victim age {victim_age!r}")
    city = " ".join(str(city).split()).casefold()
    return f"{int(year)}-{canonical_month(month)}-{city}-{age}-{canonical_sex(victim_sex)}"


@dataclass(frozen=True)
class LinkTable:
    """One side of a linkage: a key per row (None when unkeyable) and an outcome."""

    keys: tuple[str | None, ...]
    solved: np.ndarray
    ids: tuple[str, ...]
    name: str = "table"

    def __len__(self) -> int:
        return len(self.keys)


def _keys(years, months, cities, ages, sexes) -> tuple[str | None, ...]:
    out = []
    for args in zip(years, months, cities, ages, sexes):
        try:
            out.append(build_code(*args))
        except (MatchKeyError, ValueError):
            out.append(None)
    return tuple(out)


def map_link_table(d: Dataset, city_column: str = "agency_name") -> LinkTable:
    """Keys for MAP records; the reporting agency name stands in for the city."""
    f = d.frame
    ages = [None if pd.isna(a) else int(a) for a in f["victim_age"]]
    keys = _keys(f["year"], f["month"], f[city_column], ages, f["victim_sex"])
    return LinkTable(keys, d.labels.copy(), tuple(str(i) for i in f["id"]), "MAP")


@dataclass(frozen=True)
class WPFrame:
    frame: pd.DataFrame
    rows_read: int


def load_wp_csv(path, dispositions: Mapping[str, bool] | None = None) -> WPFrame:
    """Read a WP-schema CSV and derive ``year``, ``month`` and ``solved``.

    ``reported_date`` is ``YYYYMMDD``; malformed dates leave year/month
    empty, which makes the row unkeyable rather than dropping it.
    """
    table = {k.casefold(): v for k, v in (dispositions or DEFAULT_DISPOSITIONS).items()}
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False,
                      encoding="utf-8", encoding_errors="replace")
    lowered = {c.strip().lower(): c for c in raw.columns}
    missing = [c for c in WP_COLUMNS if c not in lowered]
    if missing:
        raise ValueError(f"WP file lacks column(s) {missing}")
    f = pd.DataFrame({c: raw[lowered[c]].str.strip() for c in WP_COLUMNS})
    if "uid" in lowered:
        f.insert(0, "uid", raw[lowered["uid"]])
    else:
        f.insert(0, "uid", [str(i) for i in range(len(raw))])
    dates = pd.to_datetime(f["reported_date"], format="%Y%m%d", errors="coerce")
    f["year"] = dates.dt.year.astype("Int64")
    f["month"] = [None if pd.isna(m) else canonical_month(int(m)) for m in dates.dt.month]
    f["solved"] = [table.get(v.casefold(), False) for v in f["disposition"]]
    return WPFrame(f, len(raw))


def wp_link_table(wp: WPFrame) -> LinkTable:
    f = wp.frame
    years = [None if pd.isna(y) else int(y) for y in f["year"]]
    keys = _keys(years, f["month"], f["city"], f["victim_age"], f["victim_sex"])
    return LinkTable(keys, np.asarray(f["solved"], dtype=bool), tuple(f["uid"]), "WP")


@dataclass(frozen=True)
class LinkResult:
    """Matched row pairs between side ``a`` (MAP) and side ``b`` (WP)."""

    pairs: np.ndarray              # (matched, 2) row indices into a and b
    n_a: int
    n_b: int
    agree: int
    map_solved_wp_unsolved: int
    wp_solved_map_unsolved: int
    ambiguous_keys: int
    ambiguous_rows: int
    unkeyable_a: int
    unkeyable_b: int
    b_solved: np.ndarray = field(repr=False, default=None)

    @property
    def matched(self) -> int:
        return int(self.pairs.shape[0])

    @property
    def disagree(self) -> int:
        return self.matched - self.agree

    @property
    def unmatched_a(self) -> int:
        return self.n_a - self.matched

    @property
    def unmatched_b(self) -> int:
        return self.n_b - self.matched

    def summary(self) -> dict:
        m = self.matched
        share = (lambda x: x / m) if m else (lambda x: float("nan"))
        return {
            "matched": m, "agree": self.agree, "agree_share": share(self.agree),
            "map_solved_wp_unsolved": self.map_solved_wp_unsolved,
            "wp_solved_map_unsolved": self.wp_solved_map_unsolved,
            "wp_solved_map_unsolved_share": share(self.wp_solved_map_unsolved),
            "ambiguous_keys": self.ambiguous_keys, "ambiguous_rows": self.ambiguous_rows,
            "unkeyable_map": self.unkeyable_a, "unkeyable_wp": self.unkeyable_b,
            "unmatched_map": self.unmatched_a, "unmatched_wp": self.unmatched_b,
            "rows_map": self.n_a, "rows_wp": self.n_b,
        }


def match_datasets(a: LinkTable, b: LinkTable) -> LinkResult:
    """Pair rows with equal keys.

    When a key occurs more than once on either side, the k-th occurrence in
    ``a`` is paired with the k-th in ``b`` (file order); such keys are
    counted in ``ambiguous_keys`` and their rows in ``ambiguous_rows``.
    """
    index_b: dict[str, list[int]] = defaultdict(list)
    for j, key in enumerate(b.keys):
        if key is not None:
            index_b[key].append(j)
    index_a: dict[str, list[int]] = defaultdict(list)
    for i, key in enumerate(a.keys):
        if key is not None:
            index_a[key].append(i)
    pairs = []
    ambiguous_keys = ambiguous_rows = 0
    for key, rows_a in index_a.items():
        rows_b = index_b.get(key)
        if not rows_b:
            continue
        if len(rows_a) > 1 or len(rows_b) > 1:
            ambiguous_keys += 1
            ambiguous_rows += len(rows_a) + len(rows_b)
        pairs.extend(zip(rows_a, rows_b))
    pairs.sort()
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    sa = a.solved[arr[:, 0]]
    sb = b.solved[arr[:, 1]]
    return LinkResult(
        arr, len(a), len(b), int(np.count_nonzero(sa == sb)),
        int(np.count_nonzero(sa & ~sb)), int(np.count_nonzero(~sa & sb)),
        ambiguous_keys, ambiguous_rows,
        sum(k is None for k in a.keys), sum(k is None for k in b.keys),
        np.asarray(b.solved, dtype=bool),
    )


def override_outcomes(link: LinkResult, d: Dataset) -> Dataset:
    """Copy of ``d`` (side ``a`` of the link) with matched rows taking side b's outcome."""
    if len(d) != link.n_a:
        raise ValueError("dataset does not correspond to side a of the link")
    solved = d.labels.copy()
    if link.matched:
        solved[link.pairs[:, 0]] = link.b_solved[link.pairs[:, 1]]
    return d.with_column("solved", solved)


def matched_subset(link: LinkResult, d: Dataset, override: bool = True) -> Dataset:
    """Only the matched side-a rows, optionally with side b's outcomes."""
    src = override_outcomes(link, d) if override else d
    return src.take(np.sort(link.pairs[:, 0]), step="linked")


def pairs_csv(link: LinkResult, a: LinkTable, b: LinkTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", f"{a.name.lower()}_id", f"{b.name.lower()}_id",
                f"{a.name.lower()}_solved", f"{b.name.lower()}_solved", "agree"])
    for i, j in link.pairs:
        sa, sb = bool(a.solved[i]), bool(b.solved[j])
        w.writerow([a.keys[i], a.ids[i], b.ids[j], int(sa), int(sb), int(sa == sb)])
    return buf.getvalue()


def summary_json(link: LinkResult) -> str:
    return json.dumps(link.summary(), indent=2, sort_keys=True)


def write_outputs(link: LinkResult, a: LinkTable, b: LinkTable, out: Path) -> list[Path]:
    out = Path(out)
    paths = [out / "matched_pairs.csv", out / "link_summary.json"]
    paths[0].write_text(pairs_csv(link, a, b), encoding="utf-8")
    paths[1].write_text(summary_json(link), encoding="utf-8")
    return paths
