"""Synthetic MAP- and WP-schema fixtures with a planted clearance signal.

Categorical levels are drawn from fixed marginal distributions. The solved
flag is Bernoulli with log-odds

    0.9 + 0.6*extra_offenders - 2.2*[circumstance undetermined]
        - 0.5*[male and Black victim] + 0.4*[knife] + 0.5*[female victim]
        - 0.01*(year - 1976) + N(0, 0.3^2)

so that the circumstance and offender-count features dominate any fitted
model. ``OffSex`` is "Unknown" exactly when the case is unsolved, and
``VicCount``/``OffCount`` are stored as *additional* counts like the public
MAP extract.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .dataset import MONTHS

STATES = ("Alabama", "California", "Georgia", "Illinois", "Nebraska", "New York", "Texas")
AGENCIES = {
    "Alabama": ("Birmingham", "Mobile"),
    "California": ("Los Angeles", "Oakland", "Fresno"),
    "Georgia": ("Atlanta",),
    "Illinois": ("Chicago", "Peoria"),
    "Nebraska": ("Omaha",),
    "New York": ("New York", "Buffalo"),
    "Texas": ("Houston", "Dallas", "El Paso"),
}
AGENCY_TYPES = (("Municipal police", 0.8), ("Sheriff", 0.15), ("Primary state LE", 0.05))
HOMICIDE = (("Murder and non-negligent manslaughter", 0.97), ("Manslaughter by negligence", 0.03))
SEX = (("Male", 0.77), ("Female", 0.22), ("Unknown", 0.01))
RACE = (("Black", 0.48), ("White", 0.46), ("Asian", 0.03), ("Unknown", 0.03))
CIRCUMSTANCE = (
    ("Circumstances undetermined", 0.3), ("Other arguments", 0.25),
    ("Felon killed by private citizen", 0.02), ("Robbery", 0.1), ("Juvenile gang killings", 0.05),
    ("Narcotic drug laws", 0.05), ("Other", 0.13), ("Lovers triangle", 0.1),
)
WEAPON = (
    ("Handgun - pistol, revolver, etc", 0.5), ("Knife or cutting instrument", 0.15),
    ("Firearm, type not stated", 0.15), ("Shotgun", 0.05), ("Personal weapons, includes beating", 0.1),
    ("Blunt object - hammer, club, etc", 0.05),
)
MAP_HEADER = ("ID", "CNTYFIPS", "Ori", "State", "Agency", "Agentype", "Source", "Solved", "Year",
              "Month", "Incident", "ActionType", "Homicide", "Situation", "VicAge", "VicSex",
              "VicRace", "VicEthnic", "OffAge", "OffSex", "OffRace", "OffEthnic", "Weapon",
              "Relationship", "Circumstance", "Subcircum", "VicCount", "OffCount", "FileDate",
              "fstate", "MSA")


def _choice(rng, spec, n):
    levels, p = zip(*spec)
    p = np.asarray(p, dtype=np.float64)
    return np.asarray(levels, dtype=object)[rng.choice(len(levels), size=n, p=p / p.sum())]


@dataclass(frozen=True)
class Fixture:
    frame: pd.DataFrame      # raw MAP-schema columns, ready for to_csv
    probability: np.ndarray  # planted P(solved) per row


def make_map_frame(rows: int, seed: int = 0, unknown_age_share: float = 0.02,
                   years: tuple[int, int] = (1976, 2019)) -> Fixture:
    """Raw MAP-schema frame of ``rows`` synthetic victim records."""
    if rows < 1:
        raise ValueError("rows must be at least 1")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    state_p = np.array([0.06, 0.2, 0.08, 0.15, 0.03, 0.18, 0.3])
    state = np.asarray(STATES, dtype=object)[rng.choice(len(STATES), size=rows, p=state_p)]
    agency = np.array([AGENCIES[s][rng.integers(len(AGENCIES[s]))] for s in state], dtype=object)
    year = rng.integers(years[0], years[1] + 1, size=rows)
    month = np.asarray(MONTHS, dtype=object)[rng.integers(0, 12, size=rows)]
    age = np.clip(np.round(rng.gamma(5.0, 6.5, size=rows)), 0, 99).astype(int)
    age_text = age.astype(str).astype(object)
    age_text[rng.random(rows) < unknown_age_share] = "Age unknown"
    vic_sex = _choice(rng, SEX, rows)
    vic_race = _choice(rng, RACE, rows)
    circ = _choice(rng, CIRCUMSTANCE, rows)
    weapon = _choice(rng, WEAPON, rows)
    homicide = _choice(rng, HOMICIDE, rows)
    vic_extra = rng.choice(3, size=rows, p=[0.93, 0.05, 0.02])
    off_extra = rng.choice(4, size=rows, p=[0.8, 0.12, 0.05, 0.03])

    margin = (0.9 + 0.6 * off_extra
              - 2.2 * (circ == "Circumstances undetermined")
              - 0.5 * ((vic_sex == "Male") & (vic_race == "Black"))
              + 0.4 * (weapon == "Knife or cutting instrument")
              + 0.5 * (vic_sex == "Female")
              - 0.01 * (year - 1976)
              + rng.normal(0.0, 0.3, size=rows))
    prob = 1.0 / (1.0 + np.exp(-margin))
    solved = rng.random(rows) < prob
    off_sex = np.where(solved, _choice(rng, (("Male", 0.9), ("Female", 0.1)), rows), "Unknown")

    frame = pd.DataFrame({
        "ID": [f"{y}{m[:3]}{i:07d}" for i, (y, m) in enumerate(zip(year, month))],
        "CNTYFIPS": "", "Ori": "",
        "State": state, "Agency": agency,
        "Agentype": _choice(rng, AGENCY_TYPES, rows), "Source": "FBI",
        "Solved": np.where(solved, "Yes", "No"),
        "Year": year, "Month": month, "Incident": 0, "ActionType": "Normal update",
        "Homicide": homicide, "Situation": "", "VicAge": age_text, "VicSex": vic_sex,
        "VicRace": vic_race, "VicEthnic": "Unknown or not reported", "OffAge": "",
        "OffSex": off_sex, "OffRace": "", "OffEthnic": "", "Weapon": weapon,
        "Relationship": "", "Circumstance": circ, "Subcircum": "",
        "VicCount": vic_extra, "OffCount": off_extra, "FileDate": "", "fstate": state, "MSA": "",
    }, columns=list(MAP_HEADER))
    return Fixture(frame, prob)


def make_wp_frame(map_frame: pd.DataFrame, share: float = 0.3, flip: float = 0.2,
                  extra: int = 50, seed: int = 0) -> pd.DataFrame:
    """WP-schema rows for a random ``share`` of known-age MAP rows plus ``extra`` strays.

    Linked rows copy the five key fields; a ``flip`` fraction of them carry
    the opposite outcome. Stray rows use a city absent from the MAP side.
    """
    rng = np.random.Generator(np.random.Philox(int(seed) + 1))
    known = np.flatnonzero(map_frame["VicAge"].astype(str).str.isdigit().to_numpy())
    take = np.sort(rng.choice(known, size=int(round(share * known.size)), replace=False))
    src = map_frame.iloc[take]
    solved = (src["Solved"].to_numpy() == "Yes") ^ (rng.random(take.size) < flip)
    month_no = {m: i + 1 for i, m in enumerate(MONTHS)}
    day = rng.integers(1, 29, size=take.size)
    dates = [f"{y}{month_no[m]:02d}{d:02d}" for y, m, d in zip(src["Year"], src["Month"], day)]
    disp = np.where(solved, "Closed by arrest",
                    np.where(rng.random(take.size) < 0.3, "Closed without arrest", "Open/No arrest"))
    linked = pd.DataFrame({
        "uid": [f"WP-{i:06d}" for i in range(take.size)],
        "reported_date": dates, "victim_age": src["VicAge"].to_numpy(),
        "victim_sex": src["VicSex"].to_numpy(), "city": src["Agency"].to_numpy(),
        "state": src["State"].to_numpy(), "disposition": disp,
    })
    strays = pd.DataFrame({
        "uid": [f"WP-X{i:05d}" for i in range(extra)],
        "reported_date": [f"{rng.integers(2007, 2018)}0{rng.integers(1, 10)}15" for _ in range(extra)],
        "victim_age": rng.integers(15, 70, size=extra).astype(str),
        "victim_sex": _choice(rng, (("Male", 0.8), ("Female", 0.2)), extra),
        "city": "Springfield", "state": "Missouri",
        "disposition": _choice(rng, (("Closed by arrest", 0.5), ("Open/No arrest", 0.5)), extra),
    })
    return pd.concat([linked, strays], ignore_index=True)


def write_csv(frame: pd.DataFrame, path) -> None:
    frame.to_csv(path, index=False, lineterminator="\n")
