"""Learners with margin (log-odds) and probability prediction."""
from __future__ import annotations

import json

import numpy as np

from .ensemble import (
    AVERAGED, BOOSTED, TreeEnsemble, fit_decision_tree, fit_gbm, fit_random_forest,
    fit_xgboost, log_loss, logit, sigmoid,
)
from .linear import LinearModel, fit_penalized_logistic, objective, objective_gradient
from .params import (
    ALGORITHMS, GRID_KEYS, LINEAR, DEFAULT_GRIDS, STATE_GRID, Hyperparameters, expand_grid,
)
from .tree import BinnedMatrix, Tree

Model = TreeEnsemble | LinearModel

_FITTERS = {
    "decision_tree": fit_decision_tree,
    "random_forest": fit_random_forest,
    "gbm": fit_gbm,
    "xgboost": fit_xgboost,
    "ridge": fit_penalized_logistic,
    "lasso": fit_penalized_logistic,
    "elastic_net": fit_penalized_logistic,
}


def fit(X, y, h: Hyperparameters, schema_digest: str | None = None) -> Model:
    """Fit the learner named by ``h.algorithm``.

    ``X`` may be a dense array, a :class:`BinnedMatrix` (tree learners
    only, to reuse binning across fits) or a ``FeatureMatrix``, in which
    case ``y`` may be omitted and the schema digest is attached.
    """
    if hasattr(X, "schema") and hasattr(X, "values"):
        schema_digest = schema_digest or X.schema.digest()
        X, y = X.values, (X.labels if y is None else y)
    if isinstance(X, BinnedMatrix) and h.algorithm in LINEAR:
        X = X.X
    else:
        X = X if isinstance(X, BinnedMatrix) else np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot fit on an empty matrix")
    model = _FITTERS[h.algorithm](X, y, h)
    return _with_digest(model, schema_digest)


def _with_digest(model, digest):
    from dataclasses import replace
    return model if digest is None else replace(model, schema_digest=digest)


def predict_margin(model: Model, X) -> np.ndarray:
    return model.predict_margin(_values(model, X))


def predict_proba(model: Model, X) -> np.ndarray:
    return model.predict_proba(_values(model, X))


def _values(model, X):
    if hasattr(X, "schema") and hasattr(X, "values"):
        if model.schema_digest is not None and X.schema.digest() != model.schema_digest:
            raise ValueError("feature matrix was encoded with a different schema than the model")
        return X.values
    return X


def model_to_dict(model: Model) -> dict:
    doc = {
        "algorithm": model.algorithm,
        "params": None if model.params is None else model.params.to_dict(),
        "schema_digest": model.schema_digest,
        "n_features": model.n_features,
    }
    if isinstance(model, TreeEnsemble):
        doc.update(base_score=model.base_score, learning_rate=model.learning_rate,
                   mode=model.mode, trees=[t.to_dict() for t in model.trees])
    else:
        doc.update(base_score=model.intercept, learning_rate=None, mode="linear", trees=[],
                   weights=[float(v) for v in model.weights], penalty=model.penalty,
                   C=model.C, l1_ratio=model.l1_ratio, n_iter=model.n_iter,
                   converged=model.converged)
    return doc


def model_from_dict(doc: dict) -> Model:
    params = None if doc.get("params") is None else Hyperparameters.from_dict(doc["params"])
    if doc["mode"] == "linear":
        return LinearModel(np.asarray(doc["weights"], dtype=np.float64), float(doc["base_score"]),
                           doc["penalty"], doc["C"], doc["l1_ratio"], doc.get("n_iter", 0),
                           doc.get("converged", True), params, doc.get("schema_digest"),
                           doc["algorithm"])
    trees = tuple(Tree.from_dict(t) for t in doc["trees"])
    return TreeEnsemble(doc["algorithm"], trees, float(doc["base_score"]),
                        float(doc["learning_rate"]), doc["mode"], int(doc["n_features"]),
                        params, doc.get("schema_digest"))


def dumps_model(model: Model) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True)


def loads_model(text: str) -> Model:
    return model_from_dict(json.loads(text))


__all__ = [
    "ALGORITHMS", "AVERAGED", "BOOSTED", "BinnedMatrix", "GRID_KEYS", "Hyperparameters",
    "LINEAR", "LinearModel", "Model", "DEFAULT_GRIDS", "STATE_GRID", "Tree", "TreeEnsemble",
    "dumps_model", "expand_grid", "fit", "fit_decision_tree", "fit_gbm",
    "fit_penalized_logistic", "fit_random_forest", "fit_xgboost", "loads_model", "log_loss",
    "logit", "model_from_dict", "model_to_dict", "objective", "objective_gradient",
    "predict_margin", "predict_proba", "sigmoid",
]
