"""Versioned JSON model files. Floats are written with repr, so loading is bit-exact."""
from __future__ import annotations

import json

import numpy as np

from .boosting import GbmModel, Loss
from .forest import ForestModel
from .preprocessing import Scaler
from .tree import Tree

FORMAT = "auscult-model"
FORMAT_VERSION = 1


def model_to_dict(model, scaler: Scaler | None = None, **meta) -> dict:
    d = {"format": FORMAT, "format_version": FORMAT_VERSION, "meta": meta,
         "scaler": scaler.to_dict() if scaler is not None else None}
    if isinstance(model, ForestModel):
        d["kind"] = "forest"
        d["model"] = {
            "n_classes": model.n_classes,
            "n_features": model.n_features,
            "feature_subsample": model.feature_subsample,
            "seed": model.seed,
            "oob_score": model.oob_score,
            "trees": [t.to_dict() for t in model.trees],
        }
    elif isinstance(model, GbmModel):
        d["kind"] = "gbm"
        d["model"] = {
            "loss": model.loss.value,
            "learning_rate": model.learning_rate,
            "base_score": model.base_score.tolist(),
            "n_features": model.n_features,
            "seed": model.seed,
            "train_loss": list(model.train_loss),
            "stages": [[t.to_dict() for t in stage] for stage in model.stages],
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return d


def model_from_dict(d: dict):
    """Returns (model, scaler or None, meta)."""
    if d.get("format") != FORMAT:
        raise ValueError("not a model file")
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('format_version')}")
    m = d["model"]
    if d["kind"] == "forest":
        model = ForestModel(tuple(Tree.from_dict(t) for t in m["trees"]), m["n_classes"],
                            m["n_features"], m["feature_subsample"], m["seed"], m["oob_score"])
    elif d["kind"] == "gbm":
        model = GbmModel(tuple(tuple(Tree.from_dict(t) for t in st) for st in m["stages"]),
                         m["learning_rate"], np.asarray(m["base_score"], dtype=float),
                         Loss(m["loss"]), m["n_features"], m["seed"], tuple(m["train_loss"]))
    else:
        raise ValueError(f"unknown model kind {d['kind']!r}")
    scaler = Scaler.from_dict(d["scaler"]) if d.get("scaler") else None
    return model, scaler, d.get("meta", {})


def dumps(model, scaler=None, **meta) -> str:
    return json.dumps(model_to_dict(model, scaler, **meta), sort_keys=True)


def loads(text: str):
    return model_from_dict(json.loads(text))
