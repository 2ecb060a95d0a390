"""Out-of-distribution detection benchmark over precomputed embeddings.

Two detectors behind one canonical score orientation (higher = more OOD):
maximum softmax probability over stored logits, and mean cosine distance to
the k nearest training embeddings. Threshold calibration at a target ID
true-positive rate, AUROC / FPR@TPR evaluation, and a deterministic benchmark
CLI.
"""

from . import _kernels  # noqa: F401  must configure CPU features before numba loads
from .bench import (
    DEFAULT_K_SWEEP,
    BenchmarkReport,
    RunConfig,
    calibrate_thresholds,
    make_synthetic,
    run_benchmark,
    score_samples,
    sweep_k,
)
from .detectors import (
    DEFAULT_K,
    DEFAULT_TARGET_TPR,
    Detector,
    OodScore,
    Threshold,
    Verdict,
    calibrate_threshold,
    classify,
    knn_score,
    knn_score_values,
    msp_score,
    msp_score_values,
    order_statistic_threshold,
    softmax,
)
from .errors import (
    ConfigError,
    DataError,
    FormatError,
    ManifestError,
    OodBenchError,
    TruncationError,
)
from .knn import (
    KnnIndex,
    NeighborList,
    build_index,
    cosine_distance,
    mean_knn_distance,
    mean_knn_distance_batch,
    prefix_mean_distances,
    query_knn,
    query_knn_batch,
)
from .metrics import (
    ConfusionCounts,
    EvalResult,
    RocCurve,
    RocPoint,
    auroc,
    confusion_at_threshold,
    evaluate,
    fpr_at_tpr,
    roc_curve,
)
from .report import (
    AVERAGE_LABEL,
    REPORT_SCHEMA,
    emit_report,
    plot_data_csv,
    render,
    render_csv,
    render_json,
    render_markdown,
)
from .store import (
    BenchmarkManifest,
    EmbeddingSet,
    LogitSet,
    load_benchmark,
    load_manifest,
    read_embedding_file,
    read_logit_file,
    write_embedding_file,
    write_logit_file,
)

__version__ = "0.1.0"
