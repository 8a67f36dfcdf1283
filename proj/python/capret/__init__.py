"""Multi-caption query-scoring retrieval: embedding store, caption selection,
pooling, training and evaluation over precomputed embeddings."""

from ._capret import (  # noqa: F401
    CapretError,
    ConfigError,
    DataError,
    DivergenceError,
    EmptyBatchError,
    EmptyDatasetError,
    EvalError,
    FormatError,
    IoError,
    MissingCaptionerError,
    ShapeError,
    SpecError,
    StatsUnavailable,
    Dataset,
    ProjectionModel,
    caption_bottleneck_eval,
    caption_stats,
    clipscore,
    evaluate,
    load_checkpoint,
    load_dataset,
    mcqs_similarity,
    qs_pool,
    read_table,
    recall_at_k,
    run_sweep,
    select,
    synthesize,
    train,
    write_table,
)

__version__ = "0.1.0"
