from ._gate import (
    Bundle,
    ConfigError,
    DataError,
    Model,
    NumericError,
    __version__,
    preprocess,
    ranking_metrics,
    train,
)

__all__ = [
    "Bundle",
    "ConfigError",
    "DataError",
    "Model",
    "NumericError",
    "preprocess",
    "ranking_metrics",
    "train",
]
