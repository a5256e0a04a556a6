"""Tree ensembles, feature postprocessing and model files."""
from .boosting import GbmConfig, GbmModel, Loss, train_gradient_boosting
from .forest import ForestConfig, ForestModel, train_random_forest
from .matrix import FeatureMatrix
from .preprocessing import Scaler, clip_and_standardize, impute_missing
from .tree import Tree


def predict_proba(model, rows):
    """Rows x classes probabilities; every row sums to 1."""
    return model.predict_proba(rows)


def predict_regression(model: GbmModel, rows):
    return model.predict_regression(rows)


__all__ = [
    "FeatureMatrix", "ForestConfig", "ForestModel", "GbmConfig", "GbmModel", "Loss", "Scaler",
    "Tree", "clip_and_standardize", "impute_missing", "predict_proba", "predict_regression",
    "train_gradient_boosting", "train_random_forest",
]
