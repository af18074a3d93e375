"""Boosted decision trees with reuse penalties and a bit-packed model format."""

from .codec import (
    CodecError,
    EncodedModel,
    SizeReport,
    decode,
    encode,
    finalize_layout,
    read_model,
    size_report,
    write_model,
)
from .data import (
    BINARY,
    REGRESSION,
    CandidateSet,
    Dataset,
    DatasetError,
    TaskKind,
    candidate_thresholds,
    load_csv,
    multiclass,
    split_train_test,
    write_csv,
)
from .evaluation import (
    EvalReport,
    GridRow,
    baseline_memory,
    evaluate,
    grid_search,
    pareto_filter,
    reuse_factor,
    score,
)
from .model import (
    Ensemble,
    FeatureEntry,
    GlobalTables,
    Internal,
    Leaf,
    Tree,
    predict,
    predict_matrix,
    predict_proba,
    predict_raw,
    predict_raw_matrix,
    validate_ensemble,
)
from .trainer import (
    GainResult,
    GradStats,
    LeafWorkItem,
    TrainConfig,
    best_split,
    compute_gradients,
    encoded_size_bits,
    evaluate_split,
    grow_tree,
    leaf_value,
    train,
)

__version__ = "0.1.0"
