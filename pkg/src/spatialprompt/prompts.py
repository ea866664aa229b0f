"""Contrastive multi-sentence prompt construction and corpus export.

Each anchor cell yields a positive prompt (its spatially closest and most
expression-similar neighbors) and a negative prompt (its farthest and most
dissimilar neighbors drawn from a rank window). Section order is fixed:
preamble, anchor sentence, spatial sentences, expression sentences, task.
Wording lives in a versioned template file so corpora are reproducible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from .data import Dataset
from .errors import ConfigError, ParseError, SchemaError
from .ranking import RankingIndex, rank_window, top_k_nearest, top_k_similar
from .sentences import CellSentence
from .splits import SplitAssignment
from .util import WarningTally, stable_json, stable_json_line

FORMAT_VERSION = "1"
TASKS = ("cell_type", "status", "multi_task")
MULTI_TASK_SEPARATOR = "; "
TEMPLATE_SECTIONS = (
    "preamble",
    "anchor_header",
    "spatial_header",
    "expression_header",
    "task_cell_type",
    "task_status",
    "task_multi",
)

# recorded into corpus manifests for downstream fine-tuning runs; the corpus
# itself never depends on these
TRAINING_METADATA = {
    "batch_size": 8,
    "learning_rate": 2e-4,
    "lr_scheduler": "cosine",
    "epochs": 5,
    "warmup_ratio": 0.05,
}


@dataclass(frozen=True)
class PromptConfig:
    k: int = 3
    negative_window: tuple[int, int] = (1, 3)
    task: str = "cell_type"
    template_version: str = "v1"
    include_negative: bool = True
    seed: int = 0
    truncate: int | None = None  # optional top-m sentence truncation

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ConfigError(f"K must be non-negative, got {self.k}")
        lo, hi = self.negative_window
        if lo < 1 or lo > hi:
            raise ConfigError(f"negative_window must satisfy 1 <= lo <= hi, got ({lo}, {hi})")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.truncate is not None and self.truncate < 1:
            raise ConfigError("truncate must be at least 1")

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "negative_window": list(self.negative_window),
            "task": self.task,
            "template_version": self.template_version,
            "include_negative": self.include_negative,
            "seed": self.seed,
            "truncate": self.truncate,
        }


@dataclass(frozen=True)
class PromptRecord:
    anchor_cell_id: str
    polarity: str
    task: str
    prompt_text: str
    neighbor_ids: dict[str, list[str]]
    target_text: str
    labels: dict[str, str]
    split: str
    template_version: str

    def to_json(self) -> str:
        payload = {
            "format_version": FORMAT_VERSION,
            "anchor_cell_id": self.anchor_cell_id,
            "polarity": self.polarity,
            "task": self.task,
            "prompt_text": self.prompt_text,
            "neighbor_ids": self.neighbor_ids,
            "target_text": self.target_text,
            "labels": self.labels,
            "split": self.split,
            "template_version": self.template_version,
        }
        return stable_json_line(payload)

    @staticmethod
    def from_mapping(payload: dict) -> "PromptRecord":
        return PromptRecord(
            anchor_cell_id=payload["anchor_cell_id"],
            polarity=payload["polarity"],
            task=payload["task"],
            prompt_text=payload["prompt_text"],
            neighbor_ids=payload["neighbor_ids"],
            target_text=payload["target_text"],
            labels=payload["labels"],
            split=payload["split"],
            template_version=payload["template_version"],
        )


def load_template(version: str = "v1") -> dict:
    """Load a named prompt template; custom templates can be given as a path."""
    candidate = Path(version)
    if candidate.suffix == ".json" and candidate.exists():
        raw = candidate.read_text(encoding="utf-8")
    else:
        try:
            raw = (
                resources.files("spatialprompt")
                .joinpath(f"templates/{version}.json")
                .read_text(encoding="utf-8")
            )
        except FileNotFoundError:
            raise ConfigError(f"unknown template version: {version!r}") from None
    template = json.loads(raw)
    missing = [s for s in TEMPLATE_SECTIONS if s not in template]
    if missing:
        raise SchemaError(f"template is missing sections: {missing}")
    return template


def render_task(task: str, cell_type: str, status: str, template: dict) -> tuple[str, str] | None:
    """(instruction, target) for a labeled cell, or None when a label the
    task needs is missing."""
    if task == "cell_type":
        if not cell_type:
            return None
        return template["task_cell_type"], cell_type
    if task == "status":
        if not status:
            return None
        return template["task_status"], status
    if task == "multi_task":
        if not cell_type or not status:
            return None
        return template["task_multi"], f"{cell_type}{MULTI_TASK_SEPARATOR}{status}"
    raise ConfigError(f"task must be one of {TASKS}, got {task!r}")


def _fill(section: str, sentences: Sequence[str]) -> str:
    return section.replace("{sentences}", "\n".join(sentences))


def _assemble(
    template: dict,
    polarity: str,
    anchor_text: str,
    spatial_texts: Sequence[str],
    expression_texts: Sequence[str],
    instruction: str,
) -> str:
    parts = [template["preamble"], _fill(template["anchor_header"], [anchor_text])]
    if spatial_texts:
        parts.append(_fill(template["spatial_header"][polarity], spatial_texts))
    if expression_texts:
        parts.append(_fill(template["expression_header"][polarity], expression_texts))
    parts.append(instruction)
    return "\n".join(parts)


def _build_prompt(
    index: RankingIndex,
    sentences: Sequence[CellSentence],
    i: int,
    config: PromptConfig,
    polarity: str,
    split_label: str,
    template: dict,
    tally: WarningTally | None,
) -> PromptRecord | None:
    ds = index.dataset
    rendered = render_task(config.task, ds.cell_types[i], ds.statuses[i], template)
    if rendered is None:
        if tally is not None:
            tally.count("missing_label", "cell skipped: no label for requested task")
        return None
    instruction, target = rendered

    if polarity == "positive":
        spatial_ids = top_k_nearest(index, i, config.k)
        expr_ids = top_k_similar(index, i, config.k)
        want = config.k
    else:
        lo, hi = config.negative_window
        spatial_ids = rank_window(index, i, "farthest", lo, hi)
        expr_ids = rank_window(index, i, "dissimilar", lo, hi)
        want = hi - lo + 1
    if tally is not None and (len(spatial_ids) < want or len(expr_ids) < want):
        tally.count("neighbors_clipped", "fewer in-scope neighbors than requested")

    m = config.truncate
    record = PromptRecord(
        anchor_cell_id=ds.cell_ids[i],
        polarity=polarity,
        task=config.task,
        prompt_text=_assemble(
            template,
            polarity,
            sentences[i].text(m),
            [sentences[j].text(m) for j in spatial_ids],
            [sentences[j].text(m) for j in expr_ids],
            instruction,
        ),
        neighbor_ids={
            "spatial": [ds.cell_ids[j] for j in spatial_ids],
            "expression": [ds.cell_ids[j] for j in expr_ids],
        },
        target_text=target,
        labels={"cell_type": ds.cell_types[i], "status": ds.statuses[i]},
        split=split_label,
        template_version=template["version"],
    )
    return record


def build_positive_prompt(
    index: RankingIndex,
    sentences: Sequence[CellSentence],
    i: int,
    config: PromptConfig,
    split_label: str = "train",
    template: dict | None = None,
    tally: WarningTally | None = None,
) -> PromptRecord | None:
    template = template or load_template(config.template_version)
    return _build_prompt(index, sentences, i, config, "positive", split_label, template, tally)


def build_negative_prompt(
    index: RankingIndex,
    sentences: Sequence[CellSentence],
    i: int,
    config: PromptConfig,
    split_label: str = "train",
    template: dict | None = None,
    tally: WarningTally | None = None,
) -> PromptRecord | None:
    template = template or load_template(config.template_version)
    return _build_prompt(index, sentences, i, config, "negative", split_label, template, tally)


# ---------------------------------------------------------------------------
# corpus export
# ---------------------------------------------------------------------------


def export_corpus(
    dataset: Dataset,
    index: RankingIndex,
    sentences: Sequence[CellSentence],
    assignment: SplitAssignment,
    config: PromptConfig,
    out_path: str | Path,
    dataset_checksum: str | None = None,
    tally: WarningTally | None = None,
    extra_manifest: dict | None = None,
) -> dict:
    """Write one JSON record per (cell, polarity), positives first per cell,
    in ascending cell-index order; returns the manifest written alongside.

    Identical inputs and config give byte-identical corpus and manifest.
    """
    from .data import dataset_checksum as compute_checksum

    if len(sentences) != len(dataset):
        raise ConfigError("sentences do not cover every cell")
    tally = tally if tally is not None else WarningTally()
    template = load_template(config.template_version)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    split_labels = assignment.labels()
    polarities = ("positive", "negative") if config.include_negative else ("positive",)
    counts = {"records": 0}
    by_split: dict[str, int] = {}
    by_polarity: dict[str, int] = {}
    by_task: dict[str, int] = {}
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(len(dataset)):
            for polarity in polarities:
                record = _build_prompt(
                    index, sentences, i, config, polarity, split_labels[i], template, tally
                )
                if record is None:
                    continue
                fh.write(record.to_json() + "\n")
                counts["records"] += 1
                by_split[record.split] = by_split.get(record.split, 0) + 1
                by_polarity[polarity] = by_polarity.get(polarity, 0) + 1
                by_task[record.task] = by_task.get(record.task, 0) + 1

    manifest = {
        "format_version": FORMAT_VERSION,
        "template_version": template["version"],
        "config": config.as_dict(),
        "metric_config": {
            "expression_metric": index.config.expression_metric,
            "spatial_metric": index.config.spatial_metric,
            "neighbor_scope": index.config.neighbor_scope,
            "asinh_cofactor": index.config.asinh_cofactor,
        },
        "split_seed": assignment.seed,
        "split_checksum": assignment.checksum(dataset.cell_ids),
        "dataset_checksum": dataset_checksum or compute_checksum(dataset),
        "counts": {
            "records": counts["records"],
            "by_split": dict(sorted(by_split.items())),
            "by_polarity": dict(sorted(by_polarity.items())),
            "by_task": dict(sorted(by_task.items())),
        },
        "warnings": tally.as_dict(),
        "training_metadata": TRAINING_METADATA,
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    manifest_path = out_path.with_suffix(".manifest.json")
    manifest_path.write_text(stable_json(manifest) + "\n", encoding="utf-8")
    return manifest


# ---------------------------------------------------------------------------
# corpus inspection
# ---------------------------------------------------------------------------


@dataclass
class CorpusStats:
    n_records: int = 0
    by_polarity: dict[str, int] = field(default_factory=dict)
    by_task: dict[str, int] = field(default_factory=dict)
    by_split: dict[str, int] = field(default_factory=dict)
    token_length: dict[str, float] = field(default_factory=dict)
    label_counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "by_polarity": dict(sorted(self.by_polarity.items())),
            "by_task": dict(sorted(self.by_task.items())),
            "by_split": dict(sorted(self.by_split.items())),
            "token_length": self.token_length,
            "label_counts": {
                k: dict(sorted(v.items())) for k, v in sorted(self.label_counts.items())
            },
        }


def iter_corpus(path: str | Path):
    """Yield (line_number, PromptRecord); raises ParseError on bad lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
                record = PromptRecord.from_mapping(payload)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"line {line_no}: malformed corpus record ({exc})") from None
            yield line_no, record


def corpus_stats(path: str | Path) -> CorpusStats:
    """Counts by polarity/task/split, prompt token-length distribution, and
    label distribution. An empty corpus gives an all-zero summary."""
    stats = CorpusStats(label_counts={"cell_type": {}, "status": {}})
    lengths: list[int] = []
    for _, record in iter_corpus(path):
        stats.n_records += 1
        stats.by_polarity[record.polarity] = stats.by_polarity.get(record.polarity, 0) + 1
        stats.by_task[record.task] = stats.by_task.get(record.task, 0) + 1
        stats.by_split[record.split] = stats.by_split.get(record.split, 0) + 1
        lengths.append(len(record.prompt_text.split()))
        for key in ("cell_type", "status"):
            label = record.labels.get(key, "")
            if label:
                bucket = stats.label_counts[key]
                bucket[label] = bucket.get(label, 0) + 1
    if lengths:
        ordered = sorted(lengths)
        mid = len(ordered) // 2
        median = (
            float(ordered[mid])
            if len(ordered) % 2
            else (ordered[mid - 1] + ordered[mid]) / 2.0
        )
        stats.token_length = {
            "min": float(ordered[0]),
            "max": float(ordered[-1]),
            "mean": sum(ordered) / len(ordered),
            "median": median,
        }
    else:
        stats.token_length = {"min": 0.0, "max": 0.0, "mean": 0.0, "median": 0.0}
    return stats
