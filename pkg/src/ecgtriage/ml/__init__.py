"""Self-contained learning stack: scaling, forest, metric, selection,
hyperparameter search, and model serialization."""

from .artifact import (
    FORMAT_VERSION,
    dumps_model,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)
from .forest import CRITERIA, ForestClassifier
from .metrics import auroc
from .scaler import MedianImputer, MinMaxScaler
from .search import BayesResult, SearchSpace, bayes_search
from .selection import rfe, stratified_kfold

__all__ = [
    "FORMAT_VERSION",
    "CRITERIA",
    "BayesResult",
    "ForestClassifier",
    "MedianImputer",
    "MinMaxScaler",
    "SearchSpace",
    "auroc",
    "bayes_search",
    "dumps_model",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "rfe",
    "save_model",
    "stratified_kfold",
]
