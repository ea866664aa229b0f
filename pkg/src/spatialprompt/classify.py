"""Neighbor-vote reference classifier over the ranking index.

This is the desk-checkable stand-in for an LLM consumer of the prompts: it
votes among a cell's K most expression-similar and/or spatially nearest
labeled training cells, so pipeline regressions surface as accuracy drops.
Abstention is explicit; there is never a silent default label.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigError
from .ranking import RankingIndex
from .splits import SplitAssignment
from .util import WarningTally

WEIGHTINGS = ("uniform", "similarity_weighted")
COMBINE_MODES = ("expression_only", "spatial_only", "both")
LABEL_TARGETS = ("cell_type", "status")


@dataclass(frozen=True)
class ClassifierConfig:
    k: int = 3
    weighting: str = "uniform"
    combine: str = "both"
    label_target: str = "cell_type"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError("neighbor voting needs K >= 1")
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")
        if self.combine not in COMBINE_MODES:
            raise ConfigError(f"combine must be one of {COMBINE_MODES}, got {self.combine!r}")
        if self.label_target not in LABEL_TARGETS:
            raise ConfigError(
                f"label_target must be one of {LABEL_TARGETS}, got {self.label_target!r}"
            )

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "weighting": self.weighting,
            "combine": self.combine,
            "label_target": self.label_target,
        }


@dataclass(frozen=True)
class Prediction:
    label: str | None
    scores: dict[str, float]
    abstained: bool = False


def training_labels(
    dataset: Dataset,
    assignment: SplitAssignment,
    target: str = "cell_type",
    tally: WarningTally | None = None,
) -> dict[int, str]:
    """Labeled training cells as {cell index: label}; unlabeled cells are
    filtered out with a counted warning."""
    if target not in LABEL_TARGETS:
        raise ConfigError(f"target must be one of {LABEL_TARGETS}, got {target!r}")
    source = dataset.cell_types if target == "cell_type" else dataset.statuses
    out: dict[int, str] = {}
    for i in assignment.train:
        label = source[int(i)]
        if label:
            out[int(i)] = label
        elif tally is not None:
            tally.count("unlabeled_training_cell", "training cell without a label skipped")
    return out


def _collect_votes(
    index: RankingIndex,
    train_labels: Mapping[int, str],
    i: int,
    config: ClassifierConfig,
) -> list[tuple[str, float]]:
    votes: list[tuple[str, float]] = []
    kinds = {
        "expression_only": ("expression",),
        "spatial_only": ("spatial",),
        "both": ("expression", "spatial"),
    }[config.combine]
    for kind in kinds:
        if kind == "expression":
            ids, scores = index.expression_neighbors(i)
        else:
            ids, scores = index.spatial_neighbors(i)
        taken = 0
        for j, score in zip(ids, scores):
            if taken >= config.k:
                break
            label = train_labels.get(int(j))
            if label is None:
                continue
            if config.weighting == "uniform":
                weight = 1.0
            elif kind == "expression":
                # bounded metrics vote by similarity; distance-like ones decay
                weight = (
                    1.0 / (1.0 - float(score))
                    if index.config.expression_metric == "negative_euclidean" and score < 0
                    else max(float(score), 0.0)
                )
            else:
                weight = 1.0 / (1.0 + float(score))
            votes.append((label, weight))
            taken += 1
    return votes


def _plurality(scores: dict[str, float], vocabulary: Sequence[str]) -> str:
    best_label = None
    best = -1.0
    for label in vocabulary:
        value = scores.get(label, 0.0)
        if value > best:
            best = value
            best_label = label
    assert best_label is not None
    return best_label


def _normalize(votes: list[tuple[str, float]]) -> dict[str, float]:
    totals: dict[str, float] = {}
    for label, w in votes:
        totals[label] = totals.get(label, 0.0) + w
    total = sum(totals.values())
    if total <= 0.0:
        # all weights degenerate: fall back to uniform over the same votes
        totals = {}
        for label, _ in votes:
            totals[label] = totals.get(label, 0.0) + 1.0
        total = float(len(votes))
    return {label: v / total for label, v in totals.items()}


def predict_cell_type(
    index: RankingIndex,
    train_labels: Mapping[int, str],
    i: int,
    config: ClassifierConfig,
) -> Prediction:
    """Plurality label among the K nearest labeled training cells; vote
    fractions sum to 1; ties break by vocabulary order."""
    votes = _collect_votes(index, train_labels, i, config)
    if not votes:
        return Prediction(label=None, scores={}, abstained=True)
    scores = _normalize(votes)
    vocab = (
        index.dataset.type_vocabulary
        if config.label_target == "cell_type"
        else index.dataset.status_vocabulary
    )
    return Prediction(label=_plurality(scores, vocab), scores=scores)


def predict_status(
    index: RankingIndex,
    train_labels: Mapping[int, str],
    sample_id: str,
    config: ClassifierConfig,
) -> Prediction:
    """Sample-level status: mean per-cell vote fractions across the sample's
    cells, then plurality. Abstains only if every cell abstains."""
    dataset = index.dataset
    if sample_id not in dataset.sample_index:
        raise KeyError(f"unknown sample_id: {sample_id!r}")
    cell_scores: list[dict[str, float]] = []
    for i in dataset.sample_index[sample_id]:
        pred = predict_cell_type(index, train_labels, int(i), config)
        if not pred.abstained:
            cell_scores.append(pred.scores)
    if not cell_scores:
        return Prediction(label=None, scores={}, abstained=True)
    mean_scores: dict[str, float] = {}
    for scores in cell_scores:
        for label, value in scores.items():
            mean_scores[label] = mean_scores.get(label, 0.0) + value
    mean_scores = {label: v / len(cell_scores) for label, v in mean_scores.items()}
    return Prediction(label=_plurality(mean_scores, dataset.status_vocabulary), scores=mean_scores)


# ---------------------------------------------------------------------------
# nearest-centroid baseline (the no-neighbor-context K=0 reference)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CentroidModel:
    labels: tuple[str, ...]
    centroids: np.ndarray  # one mean expression vector per label


def build_centroids(dataset: Dataset, train_labels: Mapping[int, str]) -> CentroidModel:
    if not train_labels:
        raise ConfigError("no labeled training cells to build centroids from")
    by_label: dict[str, list[int]] = {}
    for i, label in train_labels.items():
        by_label.setdefault(label, []).append(i)
    labels = tuple(sorted(by_label))
    centroids = np.stack(
        [dataset.expression[sorted(by_label[lab])].mean(axis=0) for lab in labels]
    )
    return CentroidModel(labels=labels, centroids=centroids)


def centroid_label(model: CentroidModel, expression: np.ndarray) -> str:
    """Label of the closest centroid under cosine similarity; ties break by
    label order."""
    v = np.asarray(expression, dtype=np.float64)
    nv = np.sqrt(np.dot(v, v))
    norms = np.sqrt(np.einsum("ij,ij->i", model.centroids, model.centroids))
    safe = np.where(norms == 0.0, 1.0, norms)
    sims = (model.centroids @ v) / (safe * (nv if nv > 0 else 1.0))
    best = int(np.argmax(sims))  # argmax takes the first (label-order) maximum
    return model.labels[best]


def nearest_centroid_baseline(
    dataset: Dataset, train_labels: Mapping[int, str], i: int
) -> str:
    model = build_centroids(dataset, train_labels)
    return centroid_label(model, dataset.expression[i])
