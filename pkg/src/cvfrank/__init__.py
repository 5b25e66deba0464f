"""Rank analysis of consistency violation faults on Dijkstra's token ring,
plus a from-scratch neural surrogate for predicting ranks at larger ring sizes."""

from cvfrank.errors import (
    CapacityError,
    ConfigurationError,
    CvfRankError,
    CyclicOutsideInvariantError,
    InvalidInputError,
    ModelFileError,
    NumericFailureError,
    ParseError,
    PreconditionError,
    WorkerFaultError,
)
from cvfrank.ring import Configuration, Move, SystemParams
from cvfrank.ranks import RankRecord, RankTable, analyze
from cvfrank.estimator import MLPRankRegressor
from cvfrank.dataset import RingFeatureEncoder

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "ConfigurationError",
    "Configuration",
    "CvfRankError",
    "CyclicOutsideInvariantError",
    "InvalidInputError",
    "MLPRankRegressor",
    "ModelFileError",
    "Move",
    "NumericFailureError",
    "ParseError",
    "PreconditionError",
    "RankRecord",
    "RankTable",
    "RingFeatureEncoder",
    "SystemParams",
    "WorkerFaultError",
    "analyze",
]
