"""Metrics, seed-averaged evaluation reports, cohort frequency summaries,
and the hyperparameter sweep harness.

Abstentions never enter the accuracy denominator; they are counted and
reported separately. Sweeps hold the splits fixed across axis values so the
reports are directly comparable.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .classify import (
    ClassifierConfig,
    build_centroids,
    centroid_label,
    predict_cell_type,
    predict_status,
    training_labels,
)
from .data import Dataset
from .errors import ConfigError
from .prompts import PromptConfig
from .ranking import MetricConfig, RankingIndex, build_index
from .splits import DEFAULT_FRACTIONS, split
from .util import WarningTally, sha256_bytes

SWEEP_AXES = ("k", "negative_window", "expression_metric", "spatial_metric")
DEFAULT_SEEDS = (0, 1, 2)
DEFAULT_K_SWEEP = (0, 1, 2, 3, 5, 8)


def accuracy(pairs: Sequence[tuple[str, str]]) -> float:
    """Exact-match fraction over (true, predicted) pairs."""
    if not pairs:
        raise ValueError("accuracy of an empty pair list is undefined")
    return sum(1 for t, p in pairs if t == p) / len(pairs)


def confusion(pairs: Sequence[tuple[str, str]], vocabulary: Sequence[str]) -> np.ndarray:
    """Counts matrix with rows = true label, columns = predicted label."""
    pos = {label: k for k, label in enumerate(vocabulary)}
    matrix = np.zeros((len(vocabulary), len(vocabulary)), dtype=np.int64)
    for t, p in pairs:
        if t not in pos:
            raise ConfigError(f"true label not in vocabulary: {t!r}")
        if p not in pos:
            raise ConfigError(f"predicted label not in vocabulary: {p!r}")
        matrix[pos[t], pos[p]] += 1
    return matrix


def per_class_metrics(matrix: np.ndarray, vocabulary: Sequence[str]) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    col_sums = matrix.sum(axis=0)
    row_sums = matrix.sum(axis=1)
    for k, label in enumerate(vocabulary):
        tp = float(matrix[k, k])
        out[label] = {
            "precision": tp / col_sums[k] if col_sums[k] else 0.0,
            "recall": tp / row_sums[k] if row_sums[k] else 0.0,
            "support": int(row_sums[k]),
        }
    return out


@dataclass
class EvalReport:
    task: str
    accuracy: float
    per_class: dict[str, dict[str, float]]
    confusion: list[list[int]]
    vocabulary: tuple[str, ...]
    n_evaluated: int
    n_abstained: int
    seeds: tuple[int, ...]
    seed_accuracies: list[float]
    seed_mean: float
    seed_std: float
    split_checksum: str
    axis: str | None = None
    axis_value: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "task": self.task,
            "accuracy": self.accuracy,
            "per_class": self.per_class,
            "confusion": self.confusion,
            "vocabulary": list(self.vocabulary),
            "n_evaluated": self.n_evaluated,
            "n_abstained": self.n_abstained,
            "seeds": list(self.seeds),
            "seed_accuracies": self.seed_accuracies,
            "seed_mean": self.seed_mean,
            "seed_std": self.seed_std,
            "split_checksum": self.split_checksum,
            "axis": self.axis,
            "axis_value": self.axis_value,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class EvalSettings:
    """Everything an evaluation or sweep run needs besides the dataset."""

    task: str = "cell_type"
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    stratify_by: str = "none"
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    metric: MetricConfig = field(default_factory=MetricConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    baseline_k0: bool = False  # nearest-centroid instead of neighbor votes


def _predict_pairs(
    dataset: Dataset,
    index: RankingIndex,
    settings: EvalSettings,
    seed: int,
    tally: WarningTally,
    collect: list | None = None,
) -> tuple[list[tuple[str, str]], int, str]:
    assignment = split(dataset, settings.fractions, settings.stratify_by, seed)
    checksum = assignment.checksum(dataset.cell_ids)
    target = "status" if settings.task == "status" else "cell_type"
    labels = training_labels(dataset, assignment, target, tally)
    pairs: list[tuple[str, str]] = []
    abstained = 0

    def record(key, true: str, pred: str) -> None:
        pairs.append((true, pred))
        if collect is not None:
            collect.append((seed, key, true, pred))

    if settings.task == "status":
        config = replace(settings.classifier, label_target="status")
        test_samples = sorted({dataset.sample_ids[int(i)] for i in assignment.test})
        for sid in test_samples:
            true = dataset.statuses[int(dataset.sample_index[sid][0])]
            if not true:
                tally.count("unlabeled_test_sample", "test sample without status skipped")
                continue
            pred = predict_status(index, labels, sid, config)
            if pred.abstained:
                abstained += 1
            else:
                record(sid, true, pred.label)  # type: ignore[arg-type]
        return pairs, abstained, checksum

    if settings.baseline_k0:
        model = build_centroids(dataset, labels)
    config = replace(settings.classifier, label_target="cell_type")
    for i in assignment.test:
        true = dataset.cell_types[int(i)]
        if not true:
            tally.count("unlabeled_test_cell", "test cell without a label skipped")
            continue
        if settings.baseline_k0:
            record(int(i), true, centroid_label(model, dataset.expression[int(i)]))
            continue
        pred = predict_cell_type(index, labels, int(i), config)
        if pred.abstained:
            abstained += 1
        else:
            record(int(i), true, pred.label)  # type: ignore[arg-type]
    return pairs, abstained, checksum


def evaluate_classifier(
    dataset: Dataset,
    settings: EvalSettings,
    index: RankingIndex | None = None,
    tally: WarningTally | None = None,
    collect: list | None = None,
) -> EvalReport:
    """Seed-averaged reference-classifier evaluation on held-out cells (or
    held-out samples for the status task)."""
    if settings.task not in ("cell_type", "status"):
        raise ConfigError(f"evaluation task must be cell_type or status, got {settings.task!r}")
    if settings.task == "status" and settings.stratify_by != "sample":
        raise ConfigError("status evaluation requires stratify_by='sample'")
    if settings.task == "status" and settings.metric.neighbor_scope != "global":
        raise ConfigError(
            "status evaluation needs neighbor_scope='global': held-out samples "
            "have no within-sample training neighbors"
        )
    if not settings.seeds:
        raise ConfigError("at least one seed is required")
    tally = tally if tally is not None else WarningTally()
    if index is None:
        index = build_index(dataset, settings.metric, tally=tally)

    vocab = dataset.status_vocabulary if settings.task == "status" else dataset.type_vocabulary
    all_pairs: list[tuple[str, str]] = []
    seed_accuracies: list[float] = []
    abstained = 0
    checksums: list[str] = []
    for seed in settings.seeds:
        pairs, n_abs, checksum = _predict_pairs(dataset, index, settings, seed, tally, collect)
        seed_accuracies.append(accuracy(pairs))
        all_pairs.extend(pairs)
        abstained += n_abs
        checksums.append(checksum)

    matrix = confusion(all_pairs, vocab)
    return EvalReport(
        task=settings.task,
        accuracy=accuracy(all_pairs),
        per_class=per_class_metrics(matrix, vocab),
        confusion=matrix.tolist(),
        vocabulary=vocab,
        n_evaluated=len(all_pairs),
        n_abstained=abstained,
        seeds=tuple(settings.seeds),
        seed_accuracies=seed_accuracies,
        seed_mean=float(np.mean(seed_accuracies)),
        seed_std=float(np.std(seed_accuracies)),
        split_checksum=sha256_bytes("\n".join(checksums).encode()),
    )


# ---------------------------------------------------------------------------
# cohort frequency summary
# ---------------------------------------------------------------------------


@dataclass
class FrequencySummary:
    """Per-cohort label shares in percent; each series sums to 100."""

    groups: dict[str, dict[str, dict[str, float]]]

    def rows(self) -> list[tuple[str, str, str, float]]:
        out = []
        for group in sorted(self.groups):
            for series in sorted(self.groups[group]):
                for label, share in sorted(self.groups[group][series].items()):
                    out.append((label, group, series, share))
        return out

    def as_dict(self) -> dict:
        return {"groups": self.groups}


def frequency_summary(
    cell_types: Sequence[str],
    statuses: Sequence[str],
    predicted: Sequence[str | None] | None = None,
    tally: WarningTally | None = None,
) -> FrequencySummary:
    """Percentage share of each cell-type label within each status cohort,
    for ground truth and (optionally) predictions."""
    if len(cell_types) != len(statuses):
        raise ConfigError("cell_types and statuses must align")
    if predicted is not None and len(predicted) != len(cell_types):
        raise ConfigError("predicted labels must align with cells")
    groups: dict[str, dict[str, dict[str, float]]] = {}
    cohorts = sorted({s for s in statuses if s})
    for cohort in cohorts:
        members = [k for k, s in enumerate(statuses) if s == cohort]
        series: dict[str, dict[str, float]] = {}
        truth = [cell_types[k] for k in members if cell_types[k]]
        if not truth:
            if tally is not None:
                tally.count("empty_cohort", f"cohort {cohort!r} has no labeled cells")
            continue
        series["truth"] = _shares(truth)
        if predicted is not None:
            pred = [predicted[k] for k in members if predicted[k]]
            if pred:
                series["predicted"] = _shares(pred)
        groups[cohort] = series
    return FrequencySummary(groups=groups)


def _shares(labels: Sequence[str]) -> dict[str, float]:
    counts: dict[str, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    total = len(labels)
    return {lab: 100.0 * c / total for lab, c in sorted(counts.items())}


# ---------------------------------------------------------------------------
# sweep harness
# ---------------------------------------------------------------------------


def _apply_axis(settings: EvalSettings, axis: str, value) -> EvalSettings:
    if axis == "k":
        k = int(value)
        if k < 0:
            raise ConfigError(f"K must be non-negative, got {k}")
        if k == 0:
            return replace(settings, baseline_k0=True, prompt=replace(settings.prompt, k=0))
        return replace(
            settings,
            baseline_k0=False,
            classifier=replace(settings.classifier, k=k),
            prompt=replace(settings.prompt, k=k),
        )
    if axis == "negative_window":
        lo, hi = (int(v) for v in value)
        return replace(settings, prompt=replace(settings.prompt, negative_window=(lo, hi)))
    if axis == "expression_metric":
        return replace(settings, metric=replace(settings.metric, expression_metric=str(value)))
    if axis == "spatial_metric":
        return replace(settings, metric=replace(settings.metric, spatial_metric=str(value)))
    raise ConfigError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")


def contrast_diagnostics(
    index: RankingIndex, window: tuple[int, int], max_anchors: int = 500
) -> dict:
    """Corpus-side view of a negative window: how dissimilar and how often
    label-matching the selected negative neighbors actually are."""
    ds = index.dataset
    n = len(ds)
    if n <= max_anchors:
        anchors = range(n)
    else:
        anchors = [int(x) for x in np.linspace(0, n - 1, max_anchors).astype(int)]
    lo, hi = window
    sims: list[float] = []
    agree = 0
    labeled = 0
    for i in anchors:
        ids, values = index.expression_neighbors(i)
        if len(ids) == 0:
            continue
        chosen = ids[::-1][lo - 1 : hi]
        chosen_sims = values[::-1][lo - 1 : hi]
        sims.extend(float(s) for s in chosen_sims)
        if ds.cell_types[i]:
            for j in chosen:
                if ds.cell_types[int(j)]:
                    labeled += 1
                    if ds.cell_types[int(j)] == ds.cell_types[i]:
                        agree += 1
    return {
        "window": [lo, hi],
        "negative_mean_similarity": float(np.mean(sims)) if sims else 0.0,
        "negative_label_agreement": agree / labeled if labeled else 0.0,
        "n_anchors": len(list(anchors)),
    }


def sweep(
    dataset: Dataset,
    axis: str,
    values: Sequence,
    settings: EvalSettings,
    tally: WarningTally | None = None,
) -> list[EvalReport]:
    """One report per axis value with every other setting held fixed. All
    values are validated before any run; splits are identical across values."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    derived = [_apply_axis(settings, axis, v) for v in values]

    tally = tally if tally is not None else WarningTally()
    reports: list[EvalReport] = []
    index_cache: dict[MetricConfig, RankingIndex] = {}
    for value, per_value in zip(values, derived):
        index = index_cache.get(per_value.metric)
        if index is None:
            index = build_index(dataset, per_value.metric, tally=tally)
            index_cache[per_value.metric] = index
        report = evaluate_classifier(dataset, per_value, index=index, tally=tally)
        report.axis = axis
        report.axis_value = _axis_value_str(axis, value)
        if axis in ("negative_window", "k"):
            report.diagnostics = contrast_diagnostics(
                index, per_value.prompt.negative_window
            )
        reports.append(report)
    return reports


def _axis_value_str(axis: str, value) -> str:
    if axis == "negative_window":
        lo, hi = value
        return f"{int(lo)}-{int(hi)}"
    return str(value)
