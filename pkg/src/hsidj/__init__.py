"""Disjoint-split tooling for hyperspectral scene classification.

The package covers the full desk-scale loop: load or synthesize a labeled
scene, extract padded patches, build a seeded per-class disjoint
train/val/test split, audit it for index and window-level leakage, evaluate
small reference classifiers under the three-set protocol, and render
thematic maps of the results.
"""

from .core import (
    ConfigError,
    CorruptSplitError,
    FormatError,
    GroundTruth,
    HSICube,
    PatchSpec,
    SplitConfig,
    ValidationError,
    WrongDatasetError,
    from_linear,
    spectral_vector,
    to_linear,
)
from .ingest import (
    EnviHeader,
    SynthConfig,
    parse_envi_header,
    read_envi,
    read_gt,
    synth_dataset,
    write_envi,
    write_gt,
)
from .patching import (
    PatchRecord,
    PatchSet,
    extract_patch,
    flatten_patch,
    gather_patches,
    iter_patches,
    measure_stream_memory,
)
from .splitting import (
    ClassSplit,
    ClassTooSmallError,
    EmptyGroundTruthError,
    SplitIndices,
    class_histogram,
    disjoint_split,
    gt_fingerprint,
    load_splits,
    save_splits,
    split_counts,
)
from .audit import (
    DisjointCheck,
    LeakageReport,
    leakage_report,
    shared_pixels,
    verify_disjoint,
)
from .evaluate import (
    OVERLAP_WATERMARK,
    ConfusionMatrix,
    DivergenceError,
    EvalReport,
    ProtocolReports,
    Standardizer,
    confusion,
    curve_csv,
    evaluate_protocol,
    evaluate_set,
    evaluate_with_training_reuse,
    features_for,
    fit_centroid,
    fit_knn,
    format_report_table,
    labels_at,
    metrics,
    overall_accuracy,
    report_to_dict,
    softmax_forward,
    softmax_loss_grad,
    train_softmax,
)
from .mapgen import (
    DEFAULT_PALETTE,
    MAP_MODES,
    ThematicMap,
    palette_csv,
    read_ppm,
    render,
    truth_predictions,
    write_ppm,
)

__version__ = "0.1.0"

__all__ = [
    "ClassSplit",
    "ClassTooSmallError",
    "ConfigError",
    "ConfusionMatrix",
    "CorruptSplitError",
    "DEFAULT_PALETTE",
    "DisjointCheck",
    "DivergenceError",
    "EmptyGroundTruthError",
    "EnviHeader",
    "EvalReport",
    "FormatError",
    "GroundTruth",
    "HSICube",
    "LeakageReport",
    "MAP_MODES",
    "OVERLAP_WATERMARK",
    "PatchRecord",
    "PatchSet",
    "PatchSpec",
    "ProtocolReports",
    "SplitConfig",
    "SplitIndices",
    "Standardizer",
    "SynthConfig",
    "ThematicMap",
    "ValidationError",
    "WrongDatasetError",
    "class_histogram",
    "confusion",
    "curve_csv",
    "disjoint_split",
    "evaluate_protocol",
    "evaluate_set",
    "evaluate_with_training_reuse",
    "extract_patch",
    "features_for",
    "fit_centroid",
    "fit_knn",
    "flatten_patch",
    "format_report_table",
    "from_linear",
    "gather_patches",
    "gt_fingerprint",
    "iter_patches",
    "labels_at",
    "leakage_report",
    "load_splits",
    "measure_stream_memory",
    "metrics",
    "overall_accuracy",
    "palette_csv",
    "parse_envi_header",
    "read_envi",
    "read_gt",
    "read_ppm",
    "render",
    "report_to_dict",
    "save_splits",
    "shared_pixels",
    "softmax_forward",
    "softmax_loss_grad",
    "spectral_vector",
    "split_counts",
    "synth_dataset",
    "to_linear",
    "train_softmax",
    "truth_predictions",
    "verify_disjoint",
    "write_envi",
    "write_gt",
    "write_ppm",
]
