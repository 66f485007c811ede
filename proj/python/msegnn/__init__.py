"""Few-shot self-explaining graph neural network."""

from ._msegnn import (
    ConfigError,
    Dataset,
    DatasetSplit,
    Graph,
    IoError,
    LossWeights,
    MetaConfig,
    Model,
    ModelConfig,
    MsegnnError,
    NumericError,
    ParseError,
    SyntheticConfig,
    ValidationError,
    accuracy,
    generate_synthetic,
    load_dataset,
    meta_train,
    roc_auc,
    run_cli,
    save_dataset,
    split_classes,
    test_protocol,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "DatasetSplit",
    "Graph",
    "IoError",
    "LossWeights",
    "MetaConfig",
    "Model",
    "ModelConfig",
    "MsegnnError",
    "NumericError",
    "ParseError",
    "SyntheticConfig",
    "ValidationError",
    "accuracy",
    "generate_synthetic",
    "load_dataset",
    "meta_train",
    "roc_auc",
    "run_cli",
    "save_dataset",
    "split_classes",
    "test_protocol",
]
