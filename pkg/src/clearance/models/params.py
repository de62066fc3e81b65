"""Hyperparameter records and the grids searched for each learner."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, fields, replace

ALGORITHMS = (
    "ridge", "lasso", "elastic_net", "decision_tree", "random_forest", "gbm", "xgboost",
)
LINEAR = ("ridge", "lasso", "elastic_net")
_PENALTY = {"ridge": "l2", "lasso": "l1", "elastic_net": "elasticnet"}

DEFAULT_DEPTH = {"gbm": 6, "xgboost": 6}


@dataclass(frozen=True)
class Hyperparameters:
    algorithm: str
    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int | None = None
    criterion: str = "gini"
    gamma: float = 0.0
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    penalty: str | None = None
    C: float = 1.0
    l1_ratio: float = 0.5
    bootstrap: bool = True
    max_features: str | int | None = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.penalty is None and self.algorithm in LINEAR:
            object.__setattr__(self, "penalty", _PENALTY[self.algorithm])
        if self.max_depth is None and self.algorithm in DEFAULT_DEPTH:
            object.__setattr__(self, "max_depth", DEFAULT_DEPTH[self.algorithm])
        if self.criterion not in ("gini", "entropy"):
            raise ValueError(f"criterion must be gini or entropy, got {self.criterion!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "Hyperparameters":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in names})

    def with_(self, **kw) -> "Hyperparameters":
        return replace(self, **kw)

    def label(self) -> str:
        """Short key listing only the searched parameters of the algorithm."""
        keys = GRID_KEYS[self.algorithm]
        return ";".join(f"{k}={getattr(self, k)}" for k in keys)


GRID_KEYS = {
    "ridge": ("C",),
    "lasso": ("C",),
    "elastic_net": ("C", "l1_ratio"),
    "decision_tree": ("criterion", "max_depth"),
    "random_forest": ("criterion", "max_depth", "n_estimators"),
    "gbm": ("n_estimators", "learning_rate"),
    "xgboost": ("n_estimators", "learning_rate", "gamma"),
}

_C_VALUES = (0.01, 0.5, 1.0, 5.0, 10.0, 50.0)

DEFAULT_GRIDS: dict[str, dict[str, tuple]] = {
    "ridge": {"C": _C_VALUES},
    "lasso": {"C": _C_VALUES},
    "elastic_net": {"C": _C_VALUES, "l1_ratio": (0.5,)},
    "decision_tree": {"criterion": ("gini", "entropy"), "max_depth": (10, 20, 30)},
    "random_forest": {
        "criterion": ("gini", "entropy"),
        "max_depth": (5, 10, 20, 30, 50, 100),
        "n_estimators": (100, 200, 500, 700),
    },
    "gbm": {"n_estimators": (50, 100, 200), "learning_rate": (0.001, 0.01, 0.1, 0.3, 0.5)},
    "xgboost": {
        "n_estimators": (50, 100, 200),
        "learning_rate": (0.01, 0.1, 0.3, 0.5),
        "gamma": (0.0, 0.5, 1.0),
    },
}

# state-level search drops gamma
STATE_GRID = {"n_estimators": (50, 100, 200), "learning_rate": (0.01, 0.1, 0.3, 0.5)}


def expand_grid(algorithm: str, grid: dict[str, tuple] | None = None,
                **fixed) -> list[Hyperparameters]:
    """Cartesian product of ``grid`` in declaration order (last key fastest)."""
    grid = DEFAULT_GRIDS[algorithm] if grid is None else grid
    keys = list(grid)
    out = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        out.append(Hyperparameters(algorithm=algorithm, **fixed, **dict(zip(keys, combo))))
    return out
