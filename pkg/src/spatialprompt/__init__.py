"""spatialprompt: ranked cell sentences and contrastive prompt corpora from
spatial single-cell proteomics tables."""

__version__ = "0.1.0"

from .classify import (
    ClassifierConfig,
    Prediction,
    nearest_centroid_baseline,
    predict_cell_type,
    predict_status,
)
from .data import (
    CellRecord,
    ColumnSchema,
    Dataset,
    ProteinPanel,
    dataset_checksum,
    ingest,
    load_dataset_dir,
    write_dataset,
)
from .evaluate import (
    EvalReport,
    EvalSettings,
    FrequencySummary,
    accuracy,
    confusion,
    evaluate_classifier,
    frequency_summary,
    sweep,
)
from .prompts import (
    PromptConfig,
    PromptRecord,
    build_negative_prompt,
    build_positive_prompt,
    corpus_stats,
    export_corpus,
    render_task,
)
from .ranking import (
    MetricConfig,
    RankingIndex,
    build_index,
    expression_similarity,
    rank_window,
    spatial_distance,
    top_k_dissimilar,
    top_k_farthest,
    top_k_nearest,
    top_k_similar,
)
from .sentences import CellSentence, sentence_to_ranks, sentences_for, to_sentence
from .splits import SplitAssignment, read_split, split, write_split
from .synth import SynthConfig, generate

__all__ = [
    "__version__",
    "CellRecord",
    "CellSentence",
    "ClassifierConfig",
    "ColumnSchema",
    "Dataset",
    "EvalReport",
    "EvalSettings",
    "FrequencySummary",
    "MetricConfig",
    "Prediction",
    "PromptConfig",
    "PromptRecord",
    "ProteinPanel",
    "RankingIndex",
    "SplitAssignment",
    "SynthConfig",
    "accuracy",
    "build_index",
    "build_negative_prompt",
    "build_positive_prompt",
    "confusion",
    "corpus_stats",
    "dataset_checksum",
    "evaluate_classifier",
    "export_corpus",
    "expression_similarity",
    "frequency_summary",
    "generate",
    "ingest",
    "load_dataset_dir",
    "nearest_centroid_baseline",
    "predict_cell_type",
    "predict_status",
    "rank_window",
    "read_split",
    "render_task",
    "sentence_to_ranks",
    "sentences_for",
    "spatial_distance",
    "split",
    "sweep",
    "to_sentence",
    "top_k_dissimilar",
    "top_k_farthest",
    "top_k_nearest",
    "top_k_similar",
    "write_dataset",
    "write_split",
]
