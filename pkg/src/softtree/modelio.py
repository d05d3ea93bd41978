"""JSON model envelopes shared by soft trees and baselines, plus uniform scoring."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .baselines import CartTree, LogRegModel, cart_predict_proba, logreg_predict_proba
from .datakit import Standardizer, apply_standardizer
from .errors import SchemaError
from .model import SoftTree, predict_scores

Model = SoftTree | CartTree | LogRegModel


def score(model: Model, X) -> np.ndarray:
    """Positive-class score per row: mixture (soft trees), leaf frequency (DT), sigmoid (LR)."""
    if isinstance(model, SoftTree):
        return predict_scores(model, X)
    if isinstance(model, CartTree):
        return cart_predict_proba(model, X)[:, 1]
    if isinstance(model, LogRegModel):
        return logreg_predict_proba(model, X)
    raise TypeError(f"not a model: {type(model).__name__}")


def model_to_dict(model: Model, standardizer: Standardizer | None = None, feature_names=None) -> dict:
    doc = model.to_dict()
    if standardizer is not None or feature_names is not None:
        doc["preprocessing"] = {
            "feature_names": list(feature_names) if feature_names is not None else None,
            "standardizer": standardizer.to_dict() if standardizer is not None else None,
        }
    return doc


def model_from_dict(doc: dict):
    """Return ``(model, standardizer or None, feature_names or None)``."""
    variant = doc.get("variant")
    if variant in ("SDT", "SMSDT"):
        model = SoftTree.from_dict(doc)
    elif variant == "DT":
        model = CartTree.from_dict(doc)
    elif variant == "LR":
        model = LogRegModel.from_dict(doc)
    else:
        raise SchemaError(f"unknown model variant {variant!r}")
    pre = doc.get("preprocessing") or {}
    std = pre.get("standardizer")
    return model, Standardizer.from_dict(std) if std else None, pre.get("feature_names")


def save_model(path, model: Model, standardizer=None, feature_names=None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model, standardizer, feature_names), indent=1), encoding="utf-8")
    return path


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(doc)


def prepare(X, standardizer: Standardizer | None) -> np.ndarray:
    return X if standardizer is None else apply_standardizer(standardizer, X)
