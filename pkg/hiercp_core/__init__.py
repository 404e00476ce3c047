__version__ = "0.1.0"

from .nodesets import NodeSet
from .config import (
    METHODS,
    RunConfigModel,
    expand_config,
    rank_name_matches,
    resolve_run_config,
    validate_run_config,
)
from .paths import expand_user_path, run_artifact_paths
from .taxonomy import (
    Taxonomy,
    TaxonomyError,
    build_taxonomy,
    lca_set,
    leaf_cover,
    load_taxonomy,
    node_depth,
    parse_taxonomy,
    perfect_binary_tree,
    random_dag,
)
from .covers import (
    CoverError,
    CoverExplosionError,
    CoverSpace,
    NolCover,
    brute_force_nol_covers,
    build_cover_space,
    depth_limited_covers,
    enumerate_nol_covers,
    is_nol_cover,
    reduce_overlaps,
)
from .propagation import (
    GroundTruth,
    LeafScores,
    PropagatedScores,
    ScoreError,
    label_indicator,
    propagate_scores,
    propagated_label_set,
)
from .conformal import (
    CalibrationError,
    CalibrationRecord,
    CoverPredictor,
    PredictorFamily,
    calibrate_cover,
    calibrate_family,
    conformity_score,
    predict_cover,
    threshold_at,
)
from .inference import (
    CostParams,
    HccPrediction,
    bonferroni,
    dynamic_prune,
    hcc_predict,
    predict_batch,
    set_cost,
)
from .baselines import (
    RiskControlPredictor,
    calibrate_crc_family,
    crc_recall_calibrate,
    crc_recall_predict,
    hcc_no_correction_predict,
    hcc_no_pruning_predict,
    lca_baseline_predict,
    predict_with_method,
    standard_cp_predict,
)
from .evaluation import (
    Metrics,
    SynthConfig,
    coverage_indicator,
    default_beta,
    evaluate_run,
    split_data,
    sweep_beta,
    sweep_trend,
    synth_generate,
)
from .artifacts import ArtifactError, ScoreTable, ingest_scores, load_model, save_model
from .events import EventType, MemoryEventSink, NullEventSink, PipelineEvent
from .runner import PipelineAbortError, PipelineRunner, run_pipeline

__all__ = [
    "__version__",
    "NodeSet",
    "METHODS",
    "RunConfigModel",
    "expand_config",
    "rank_name_matches",
    "resolve_run_config",
    "validate_run_config",
    "expand_user_path",
    "run_artifact_paths",
    "Taxonomy",
    "TaxonomyError",
    "build_taxonomy",
    "lca_set",
    "leaf_cover",
    "load_taxonomy",
    "node_depth",
    "parse_taxonomy",
    "perfect_binary_tree",
    "random_dag",
    "CoverError",
    "CoverExplosionError",
    "CoverSpace",
    "NolCover",
    "brute_force_nol_covers",
    "build_cover_space",
    "depth_limited_covers",
    "enumerate_nol_covers",
    "is_nol_cover",
    "reduce_overlaps",
    "GroundTruth",
    "LeafScores",
    "PropagatedScores",
    "ScoreError",
    "label_indicator",
    "propagate_scores",
    "propagated_label_set",
    "CalibrationError",
    "CalibrationRecord",
    "CoverPredictor",
    "PredictorFamily",
    "calibrate_cover",
    "calibrate_family",
    "conformity_score",
    "predict_cover",
    "threshold_at",
    "CostParams",
    "HccPrediction",
    "bonferroni",
    "dynamic_prune",
    "hcc_predict",
    "predict_batch",
    "set_cost",
    "RiskControlPredictor",
    "calibrate_crc_family",
    "crc_recall_calibrate",
    "crc_recall_predict",
    "hcc_no_correction_predict",
    "hcc_no_pruning_predict",
    "lca_baseline_predict",
    "predict_with_method",
    "standard_cp_predict",
    "Metrics",
    "SynthConfig",
    "coverage_indicator",
    "default_beta",
    "evaluate_run",
    "split_data",
    "sweep_beta",
    "sweep_trend",
    "synth_generate",
    "ArtifactError",
    "ScoreTable",
    "ingest_scores",
    "load_model",
    "save_model",
    "EventType",
    "MemoryEventSink",
    "NullEventSink",
    "PipelineEvent",
    "PipelineAbortError",
    "PipelineRunner",
    "run_pipeline",
]
