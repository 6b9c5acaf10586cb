"""Flamelet surrogate pipeline.

Synthetic flamelet libraries, deep-ensemble regressors for key source
terms and the energy source term, and uncertainty-aware evaluation. All
heavy lifting happens in the compiled core; every operation is
deterministic in its seed.
"""

from ._core import (
    ConsistencyError,
    DataError,
    Dataset,
    DimensionError,
    EncodedSet,
    Ensemble,
    IoError,
    Model,
    SerializationError,
    TrainingError,
    ablation_study,
    compare_models,
    confidence_interval,
    encode,
    generate_synthetic,
    load_csv,
    load_ensemble,
    load_model,
    member_seed,
    posterior_mean,
    posterior_stddev,
    save_csv,
    split_holdout,
    train_ensemble,
    train_single,
)

__version__ = "0.1.0"

__all__ = [
    "ConsistencyError",
    "DataError",
    "Dataset",
    "DimensionError",
    "EncodedSet",
    "Ensemble",
    "IoError",
    "Model",
    "SerializationError",
    "TrainingError",
    "ablation_study",
    "compare_models",
    "confidence_interval",
    "encode",
    "generate_synthetic",
    "load_csv",
    "load_ensemble",
    "load_model",
    "member_seed",
    "posterior_mean",
    "posterior_stddev",
    "save_csv",
    "split_holdout",
    "train_ensemble",
    "train_single",
    "__version__",
]
