"""Command-line front door.

Every artifact-producing subcommand writes a manifest with the resolved
configuration and input checksums, so a run can be reproduced from its
outputs alone. Flags override config-file values; the resolved snapshot in
the manifest is the source of truth. Report-shaped subcommands (eval, sweep,
stats) render figures next to their delimited outputs.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .classify import ClassifierConfig, build_centroids, centroid_label, predict_cell_type, predict_status, training_labels
from .data import dataset_checksum, ingest, load_dataset_dir, write_dataset
from .errors import ConfigError, PipelineError
from .evaluate import (
    DEFAULT_K_SWEEP,
    SWEEP_AXES,
    EvalSettings,
    evaluate_classifier,
    frequency_summary,
    sweep,
)
from .prompts import PromptConfig, corpus_stats, export_corpus, iter_corpus
from .ranking import (
    BACKENDS,
    EXPRESSION_METRICS,
    NEIGHBOR_SCOPES,
    SPATIAL_METRICS,
    MetricConfig,
    build_index,
    export_matrices,
    export_neighbors,
)
from .sentences import sentences_for
from .splits import STRATIFY_MODES, read_split, split, write_split
from .synth import SynthConfig, generate
from .util import WarningTally, sha256_file, stable_json

DEFAULT_THREADS = int(os.environ.get("SPATIALPROMPT_THREADS", "1"))


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # single-line machine-parseable usage errors
        print(
            json.dumps({"error": {"code": "usage", "message": message}}),
            file=sys.stderr,
        )
        raise SystemExit(2)


def _parse_fractions(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in str(text).split(",")]
    if len(parts) != 3:
        raise ConfigError(f"fractions must be three comma-separated numbers, got {text!r}")
    return parts[0], parts[1], parts[2]


def _parse_window(text: str) -> tuple[int, int]:
    raw = str(text).replace(":", "-")
    if "-" in raw:
        lo, hi = raw.split("-", 1)
    elif "," in raw:
        lo, hi = raw.split(",", 1)
    else:
        lo = hi = raw
    return int(lo), int(hi)


def _parse_seeds(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).split(","))


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults <- config file <- explicitly passed flags."""
    merged = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        file_cfg = json.loads(Path(cfg_path).read_text(encoding="utf-8"))
        unknown = sorted(set(file_cfg) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        merged.update(file_cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _load_dataset(merged: dict) -> tuple:
    """Dataset plus the input paths that should be checksummed."""
    if merged.get("dataset"):
        root = Path(merged["dataset"])
        inputs = {"cells": root / "cells.tsv", "panel": root / "panel.txt"}
        return load_dataset_dir(root), inputs
    if merged.get("cells") and merged.get("panel"):
        inputs = {"cells": Path(merged["cells"]), "panel": Path(merged["panel"])}
        return ingest(inputs["cells"], inputs["panel"]), inputs
    raise ConfigError("provide --dataset DIR or both --cells and --panel")


def _metric_config(merged: dict) -> MetricConfig:
    return MetricConfig(
        expression_metric=merged["expression_metric"],
        spatial_metric=merged["spatial_metric"],
        neighbor_scope=merged["scope"],
        asinh_cofactor=merged.get("asinh_cofactor"),
    )


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, tuple):
        return list(value)
    return value


def _write_manifest(
    path: Path,
    command: str,
    resolved: dict,
    inputs: dict[str, Path],
    outputs: dict[str, Path],
    warnings: WarningTally | None = None,
    extra: dict | None = None,
) -> Path:
    manifest = {
        "command": command,
        "resolved_config": {k: _jsonable(v) for k, v in sorted(resolved.items())},
        "inputs": {
            name: {"path": str(p), "sha256": sha256_file(p)} for name, p in sorted(inputs.items())
        },
        "outputs": {
            name: {"path": str(p), "sha256": sha256_file(p)} for name, p in sorted(outputs.items())
        },
        "warnings": warnings.as_dict() if warnings else {},
    }
    if extra:
        manifest.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(stable_json(manifest) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

SYNTH_DEFAULTS = {
    "out": None,
    "seed": 0,
    "samples": 10,
    "cells": 500,
    "types": 7,
    "markers": 38,
    "separation": 2.0,
    "spatial_clustering": 5.0,
    "status_effect": 0.8,
    "noise_scale": None,
    "expression_scale": 1.0,
    "image_extent": 1000.0,
}


def cmd_synth(args) -> int:
    merged = _resolve(args, SYNTH_DEFAULTS)
    if not merged["out"]:
        raise ConfigError("synth requires --out DIR")
    config = SynthConfig(
        n_samples=int(merged["samples"]),
        cells_per_sample=int(merged["cells"]),
        n_types=int(merged["types"]),
        n_markers=int(merged["markers"]),
        separation=float(merged["separation"]),
        spatial_clustering=float(merged["spatial_clustering"]),
        status_effect=float(merged["status_effect"]),
        noise_scale=None if merged["noise_scale"] is None else float(merged["noise_scale"]),
        expression_scale=float(merged["expression_scale"]),
        image_extent=float(merged["image_extent"]),
        seed=int(merged["seed"]),
    )
    dataset = generate(config)
    out_dir = Path(merged["out"])
    paths = write_dataset(dataset, out_dir)
    _write_manifest(
        out_dir / "manifest.json",
        "synth",
        merged,
        inputs={},
        outputs=paths,
        extra={"dataset_checksum": dataset_checksum(dataset), "n_cells": len(dataset)},
    )
    print(stable_json({"out": str(out_dir), "n_cells": len(dataset), "n_samples": config.n_samples}))
    return 0


INGEST_DEFAULTS = {"cells": None, "panel": None, "dataset": None, "delimiter": None, "out": None}


def cmd_ingest(args) -> int:
    merged = _resolve(args, INGEST_DEFAULTS)
    dataset, inputs = _load_dataset(merged)
    summary = {
        "n_cells": len(dataset),
        "n_samples": len(dataset.sample_index),
        "panel_size": dataset.panel.size,
        "type_vocabulary": list(dataset.type_vocabulary),
        "status_vocabulary": list(dataset.status_vocabulary),
        "dataset_checksum": dataset_checksum(dataset),
    }
    if merged["out"]:
        out_dir = Path(merged["out"])
        paths = write_dataset(dataset, out_dir)
        _write_manifest(
            out_dir / "manifest.json",
            "ingest",
            merged,
            inputs=inputs,
            outputs=paths,
            extra={"dataset_checksum": summary["dataset_checksum"]},
        )
    print(stable_json(summary))
    return 0


SPLIT_DEFAULTS = {
    "dataset": None,
    "cells": None,
    "panel": None,
    "seed": 0,
    "fractions": "0.81,0.09,0.10",
    "stratify": "none",
    "out": None,
}


def cmd_split(args) -> int:
    merged = _resolve(args, SPLIT_DEFAULTS)
    if not merged["out"]:
        raise ConfigError("split requires --out FILE")
    dataset, inputs = _load_dataset(merged)
    assignment = split(
        dataset,
        _parse_fractions(merged["fractions"]),
        merged["stratify"],
        int(merged["seed"]),
    )
    out = Path(merged["out"])
    write_split(assignment, dataset.cell_ids, out)
    _write_manifest(
        out.with_suffix(".manifest.json"),
        "split",
        merged,
        inputs=inputs,
        outputs={"split": out},
        extra={
            "split_checksum": assignment.checksum(dataset.cell_ids),
            "sizes": {
                "train": len(assignment.train),
                "validation": len(assignment.validation),
                "test": len(assignment.test),
            },
        },
    )
    print(
        stable_json(
            {
                "out": str(out),
                "train": len(assignment.train),
                "validation": len(assignment.validation),
                "test": len(assignment.test),
            }
        )
    )
    return 0


SENTENCES_DEFAULTS = {"dataset": None, "cells": None, "panel": None, "truncate": None, "out": None}


def cmd_sentences(args) -> int:
    merged = _resolve(args, SENTENCES_DEFAULTS)
    if not merged["out"]:
        raise ConfigError("sentences requires --out FILE")
    dataset, inputs = _load_dataset(merged)
    truncate = None if merged["truncate"] is None else int(merged["truncate"])
    out = Path(merged["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("cell_id\tsentence\n")
        for sentence in sentences_for(dataset):
            fh.write(f"{sentence.cell_id}\t{sentence.text(truncate)}\n")
    _write_manifest(
        out.with_suffix(".manifest.json"),
        "sentences",
        merged,
        inputs=inputs,
        outputs={"sentences": out},
    )
    print(stable_json({"out": str(out), "n_cells": len(dataset)}))
    return 0


RANK_DEFAULTS = {
    "dataset": None,
    "cells": None,
    "panel": None,
    "expression_metric": "cosine",
    "spatial_metric": "euclidean",
    "scope": "within_sample",
    "backend": "exhaustive",
    "asinh_cofactor": None,
    "top": 10,
    "matrix_dir": None,
    "threads": DEFAULT_THREADS,
    "out": None,
}


def cmd_rank(args) -> int:
    merged = _resolve(args, RANK_DEFAULTS)
    if not merged["out"]:
        raise ConfigError("rank requires --out FILE")
    dataset, inputs = _load_dataset(merged)
    tally = WarningTally()
    index = build_index(
        dataset,
        _metric_config(merged),
        backend=merged["backend"],
        threads=int(merged["threads"]),
        tally=tally,
    )
    out = Path(merged["out"])
    outputs = {"neighbors": export_neighbors(index, int(merged["top"]), out)}
    if merged["matrix_dir"]:
        for p in export_matrices(index, merged["matrix_dir"]):
            outputs[p.name] = p
    _write_manifest(
        out.with_suffix(".manifest.json"),
        "rank",
        merged,
        inputs=inputs,
        outputs=outputs,
        warnings=tally,
    )
    print(stable_json({"out": str(out), "n_cells": len(dataset)}))
    return 0


PROMPTS_DEFAULTS = {
    "dataset": None,
    "cells": None,
    "panel": None,
    "task": "cell_type",
    "k": 3,
    "negative_window": "1-3",
    "template": "v1",
    "include_negative": True,
    "truncate": None,
    "seed": 0,
    "fractions": "0.81,0.09,0.10",
    "stratify": "none",
    "split_file": None,
    "expression_metric": "cosine",
    "spatial_metric": "euclidean",
    "scope": "within_sample",
    "asinh_cofactor": None,
    "threads": DEFAULT_THREADS,
    "out": None,
}


def cmd_prompts(args) -> int:
    merged = _resolve(args, PROMPTS_DEFAULTS)
    if not merged["out"]:
        raise ConfigError("prompts requires --out FILE")
    dataset, inputs = _load_dataset(merged)
    if merged["split_file"]:
        inputs["split"] = Path(merged["split_file"])
        assignment = read_split(merged["split_file"], dataset.cell_ids)
    else:
        assignment = split(
            dataset,
            _parse_fractions(merged["fractions"]),
            merged["stratify"],
            int(merged["seed"]),
        )
    tally = WarningTally()
    index = build_index(
        dataset, _metric_config(merged), threads=int(merged["threads"]), tally=tally
    )
    config = PromptConfig(
        k=int(merged["k"]),
        negative_window=_parse_window(merged["negative_window"]),
        task=merged["task"],
        template_version=merged["template"],
        include_negative=bool(merged["include_negative"]),
        seed=int(merged["seed"]),
        truncate=None if merged["truncate"] is None else int(merged["truncate"]),
    )
    out = Path(merged["out"])
    manifest = export_corpus(
        dataset,
        index,
        sentences_for(dataset),
        assignment,
        config,
        out,
        tally=tally,
        extra_manifest={
            "command": "prompts",
            "resolved_config": {k: _jsonable(v) for k, v in sorted(merged.items())},
            "inputs": {
                name: {"path": str(p), "sha256": sha256_file(p)}
                for name, p in sorted(inputs.items())
            },
        },
    )
    print(
        stable_json(
            {
                "out": str(out),
                "records": manifest["counts"]["records"],
                "manifest": str(out.with_suffix(".manifest.json")),
            }
        )
    )
    return 0


CLASSIFY_DEFAULTS = {
    "dataset": None,
    "cells": None,
    "panel": None,
    "task": "cell_type",
    "k": 3,
    "weighting": "uniform",
    "combine": None,
    "seed": 0,
    "fractions": "0.81,0.09,0.10",
    "stratify": None,
    "expression_metric": "cosine",
    "spatial_metric": "euclidean",
    "scope": None,
    "asinh_cofactor": None,
    "threads": DEFAULT_THREADS,
    "out": None,
}


def _task_defaults(merged: dict) -> dict:
    """Status prediction is a cross-sample task; fill mode-dependent blanks."""
    out = dict(merged)
    is_status = merged["task"] == "status"
    if out.get("stratify") is None:
        out["stratify"] = "sample" if is_status else "none"
    if out.get("scope") is None:
        out["scope"] = "global" if is_status else "within_sample"
    if out.get("combine") is None:
        out["combine"] = "expression_only" if is_status else "both"
    return out


def cmd_classify(args) -> int:
    merged = _task_defaults(_resolve(args, CLASSIFY_DEFAULTS))
    if not merged["out"]:
        raise ConfigError("classify requires --out FILE")
    dataset, inputs = _load_dataset(merged)
    assignment = split(
        dataset, _parse_fractions(merged["fractions"]), merged["stratify"], int(merged["seed"])
    )
    tally = WarningTally()
    index = build_index(
        dataset, _metric_config(merged), threads=int(merged["threads"]), tally=tally
    )
    k = int(merged["k"])
    target = "status" if merged["task"] == "status" else "cell_type"
    labels = training_labels(dataset, assignment, target, tally)
    out = Path(merged["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = 0
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("id\tpredicted\ttrue\tscore\n")
        if merged["task"] == "status":
            config = ClassifierConfig(
                k=max(k, 1), weighting=merged["weighting"], combine=merged["combine"], label_target="status"
            )
            for sid in sorted({dataset.sample_ids[int(i)] for i in assignment.test}):
                true = dataset.statuses[int(dataset.sample_index[sid][0])]
                pred = predict_status(index, labels, sid, config)
                value = "" if pred.abstained else pred.label
                score = 0.0 if pred.abstained else pred.scores[pred.label]
                fh.write(f"{sid}\t{value}\t{true}\t{score!r}\n")
                rows += 1
        else:
            model = build_centroids(dataset, labels) if k == 0 else None
            config = None
            if k > 0:
                config = ClassifierConfig(
                    k=k, weighting=merged["weighting"], combine=merged["combine"]
                )
            for i in assignment.test:
                true = dataset.cell_types[int(i)]
                if model is not None:
                    value = centroid_label(model, dataset.expression[int(i)])
                    score = 1.0
                else:
                    pred = predict_cell_type(index, labels, int(i), config)
                    value = "" if pred.abstained else pred.label
                    score = 0.0 if pred.abstained else pred.scores[pred.label]
                fh.write(f"{dataset.cell_ids[int(i)]}\t{value}\t{true}\t{score!r}\n")
                rows += 1
    _write_manifest(
        out.with_suffix(".manifest.json"),
        "classify",
        merged,
        inputs=inputs,
        outputs={"predictions": out},
        warnings=tally,
    )
    print(stable_json({"out": str(out), "rows": rows}))
    return 0


EVAL_DEFAULTS = {
    "dataset": None,
    "cells": None,
    "panel": None,
    "task": "cell_type",
    "k": 3,
    "weighting": "uniform",
    "combine": None,
    "seeds": "0,1,2",
    "fractions": "0.81,0.09,0.10",
    "stratify": None,
    "expression_metric": "cosine",
    "spatial_metric": "euclidean",
    "scope": None,
    "asinh_cofactor": None,
    "threads": DEFAULT_THREADS,
    "out": None,
}


def _eval_settings(merged: dict) -> EvalSettings:
    k = int(merged["k"])
    classifier = ClassifierConfig(
        k=max(k, 1),
        weighting=merged["weighting"],
        combine=merged["combine"],
        label_target="status" if merged["task"] == "status" else "cell_type",
    )
    return EvalSettings(
        task=merged["task"],
        fractions=_parse_fractions(merged["fractions"]),
        stratify_by=merged["stratify"],
        seeds=_parse_seeds(merged["seeds"]),
        metric=_metric_config(merged),
        classifier=classifier,
        baseline_k0=(k == 0),
    )


def cmd_eval(args) -> int:
    merged = _task_defaults(_resolve(args, EVAL_DEFAULTS))
    if not merged["out"]:
        raise ConfigError("eval requires --out DIR")
    dataset, inputs = _load_dataset(merged)
    settings = _eval_settings(merged)
    tally = WarningTally()
    collected: list[tuple[int, object, str, str]] = []
    report = evaluate_classifier(dataset, settings, tally=tally, collect=collected)
    out_dir = Path(merged["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    outputs: dict[str, Path] = {}
    report_path = out_dir / "report.json"
    report_path.write_text(stable_json(report.as_dict()) + "\n", encoding="utf-8")
    outputs["report"] = report_path

    confusion_path = out_dir / "confusion.tsv"
    with open(confusion_path, "w", encoding="utf-8") as fh:
        fh.write("true\\predicted\t" + "\t".join(report.vocabulary) + "\n")
        for label, row in zip(report.vocabulary, report.confusion):
            fh.write(label + "\t" + "\t".join(str(v) for v in row) + "\n")
    outputs["confusion"] = confusion_path
    from .figures import confusion_figure, frequency_figure

    outputs["confusion_png"] = confusion_figure(report, out_dir / "confusion.png")

    if merged["task"] == "cell_type" and collected:
        by_cell = {int(i): pred for _, i, _, pred in collected}
        predicted = [by_cell.get(i) for i in range(len(dataset))]
        summary = frequency_summary(dataset.cell_types, dataset.statuses, predicted, tally)
        freq_path = out_dir / "frequency.tsv"
        with open(freq_path, "w", encoding="utf-8") as fh:
            fh.write("label\tgroup\tseries\tshare\n")
            for label, group, series, share in summary.rows():
                fh.write(f"{label}\t{group}\t{series}\t{share!r}\n")
        outputs["frequency"] = freq_path
        outputs["frequency_png"] = frequency_figure(summary, out_dir / "frequency.png")

    _write_manifest(
        out_dir / "manifest.json",
        "eval",
        merged,
        inputs=inputs,
        outputs=outputs,
        warnings=tally,
        extra={"accuracy": report.accuracy, "split_checksum": report.split_checksum},
    )
    print(
        stable_json(
            {
                "out": str(out_dir),
                "accuracy": report.accuracy,
                "seed_mean": report.seed_mean,
                "n_evaluated": report.n_evaluated,
                "n_abstained": report.n_abstained,
            }
        )
    )
    return 0


SWEEP_DEFAULTS = {
    "dataset": None,
    "cells": None,
    "panel": None,
    "axis": None,
    "values": None,
    "task": "cell_type",
    "k": 3,
    "weighting": "uniform",
    "combine": None,
    "seeds": "0,1,2",
    "fractions": "0.81,0.09,0.10",
    "stratify": None,
    "negative_window": "1-3",
    "expression_metric": "cosine",
    "spatial_metric": "euclidean",
    "scope": None,
    "asinh_cofactor": None,
    "threads": DEFAULT_THREADS,
    "out": None,
}


def _parse_axis_values(axis: str, text: str) -> list:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    parts = [p for p in str(text).split(",") if p]
    if not parts:
        raise ConfigError("sweep needs at least one value")
    if axis == "k":
        return [int(p) for p in parts]
    if axis == "negative_window":
        return [_parse_window(p) for p in parts]
    return parts


def cmd_sweep(args) -> int:
    merged = _task_defaults(_resolve(args, SWEEP_DEFAULTS))
    if not merged["out"]:
        raise ConfigError("sweep requires --out DIR")
    if not merged["axis"]:
        raise ConfigError("sweep requires --axis")
    if merged["values"] is None:
        if merged["axis"] != "k":
            raise ConfigError("sweep requires --values for this axis")
        merged["values"] = ",".join(str(k) for k in DEFAULT_K_SWEEP)
    values = _parse_axis_values(merged["axis"], merged["values"])
    dataset, inputs = _load_dataset(merged)
    settings = _eval_settings(merged)
    settings = EvalSettings(
        task=settings.task,
        fractions=settings.fractions,
        stratify_by=settings.stratify_by,
        seeds=settings.seeds,
        metric=settings.metric,
        classifier=settings.classifier,
        prompt=PromptConfig(
            k=int(merged["k"]) if int(merged["k"]) > 0 else 0,
            negative_window=_parse_window(merged["negative_window"]),
            task=merged["task"] if merged["task"] in ("cell_type", "status") else "cell_type",
            seed=int(settings.seeds[0]) if settings.seeds else 0,
        ),
        baseline_k0=settings.baseline_k0,
    )
    tally = WarningTally()
    reports = sweep(dataset, merged["axis"], values, settings, tally=tally)

    out_dir = Path(merged["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: dict[str, Path] = {}

    table_path = out_dir / "sweep_table.tsv"
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(
            "axis\tvalue\taccuracy\tseed_mean\tseed_std\tn_evaluated\t"
            "n_abstained\tsplit_checksum\n"
        )
        for r in reports:
            fh.write(
                f"{r.axis}\t{r.axis_value}\t{r.accuracy!r}\t{r.seed_mean!r}\t"
                f"{r.seed_std!r}\t{r.n_evaluated}\t{r.n_abstained}\t{r.split_checksum}\n"
            )
    outputs["table"] = table_path

    reports_path = out_dir / "reports.json"
    reports_path.write_text(
        stable_json([r.as_dict() for r in reports]) + "\n", encoding="utf-8"
    )
    outputs["reports"] = reports_path
    from .figures import sweep_figure

    outputs["figure"] = sweep_figure(reports, merged["axis"], out_dir / "sweep.png")

    _write_manifest(
        out_dir / "manifest.json",
        "sweep",
        merged,
        inputs=inputs,
        outputs=outputs,
        warnings=tally,
        extra={"split_checksum": reports[0].split_checksum if reports else ""},
    )
    print(stable_json({"out": str(out_dir), "rows": len(reports)}))
    return 0


STATS_DEFAULTS = {"corpus": None, "out": None}


def cmd_stats(args) -> int:
    merged = _resolve(args, STATS_DEFAULTS)
    if not merged["corpus"]:
        raise ConfigError("stats requires --corpus FILE")
    stats = corpus_stats(merged["corpus"])
    if merged["out"]:
        out_dir = Path(merged["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        stats_path = out_dir / "stats.json"
        stats_path.write_text(stable_json(stats.as_dict()) + "\n", encoding="utf-8")
        lengths = [
            len(record.prompt_text.split()) for _, record in iter_corpus(merged["corpus"])
        ]
        from .figures import token_length_figure

        fig_path = token_length_figure(lengths, out_dir / "token_lengths.png")
        labels_path = out_dir / "label_counts.tsv"
        with open(labels_path, "w", encoding="utf-8") as fh:
            fh.write("kind\tlabel\tcount\n")
            for kind, counts in sorted(stats.label_counts.items()):
                for label, count in sorted(counts.items()):
                    fh.write(f"{kind}\t{label}\t{count}\n")
        _write_manifest(
            out_dir / "manifest.json",
            "stats",
            merged,
            inputs={"corpus": Path(merged["corpus"])},
            outputs={"stats": stats_path, "figure": fig_path, "labels": labels_path},
        )
    print(stable_json(stats.as_dict()))
    return 0


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", help="dataset directory (cells.tsv + panel.txt)")
    p.add_argument("--cells", help="cells table path")
    p.add_argument("--panel", help="panel sidecar path")


def _add_metric_flags(p: argparse.ArgumentParser, with_backend: bool = False) -> None:
    p.add_argument("--expression-metric", dest="expression_metric", choices=EXPRESSION_METRICS)
    p.add_argument("--spatial-metric", dest="spatial_metric", choices=SPATIAL_METRICS)
    p.add_argument("--scope", choices=NEIGHBOR_SCOPES)
    # bare flag enables the transform at the conventional cofactor
    p.add_argument("--asinh-cofactor", dest="asinh_cofactor", type=float, nargs="?", const=5.0)
    if with_backend:
        p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--threads", type=int)


def _add_split_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--fractions", help="train,validation,test fractions summing to 1")
    p.add_argument("--stratify", choices=STRATIFY_MODES)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spatialprompt", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=False)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--cells", type=int)
    p.add_argument("--types", type=int)
    p.add_argument("--markers", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--spatial-clustering", dest="spatial_clustering", type=float)
    p.add_argument("--status-effect", dest="status_effect", type=float)
    p.add_argument("--noise-scale", dest="noise_scale", type=float)
    p.add_argument("--expression-scale", dest="expression_scale", type=float)
    p.add_argument("--image-extent", dest="image_extent", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate a cells table, optionally normalize it")
    p.add_argument("--config")
    _add_dataset_flags(p)
    p.add_argument("--delimiter")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="write a train/validation/test assignment")
    p.add_argument("--config")
    _add_dataset_flags(p)
    _add_split_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("sentences", help="write rank-ordered cell sentences")
    p.add_argument("--config")
    _add_dataset_flags(p)
    p.add_argument("--truncate", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sentences)

    p = sub.add_parser("rank", help="export top neighbor lists per cell")
    p.add_argument("--config")
    _add_dataset_flags(p)
    _add_metric_flags(p, with_backend=True)
    p.add_argument("--top", type=int)
    p.add_argument("--matrix-dir", dest="matrix_dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("prompts", help="export a contrastive prompt corpus")
    p.add_argument("--config")
    _add_dataset_flags(p)
    _add_metric_flags(p)
    _add_split_flags(p)
    p.add_argument("--split-file", dest="split_file")
    p.add_argument("--task", choices=("cell_type", "status", "multi_task"))
    p.add_argument("--k", type=int)
    p.add_argument("--negative-window", dest="negative_window")
    p.add_argument("--template")
    p.add_argument(
        "--include-negative",
        dest="include_negative",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    p.add_argument("--truncate", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_prompts)

    p = sub.add_parser("classify", help="reference-classifier predictions for one split")
    p.add_argument("--config")
    _add_dataset_flags(p)
    _add_metric_flags(p)
    _add_split_flags(p)
    p.add_argument("--task", choices=("cell_type", "status"))
    p.add_argument("--k", type=int)
    p.add_argument("--weighting", choices=("uniform", "similarity_weighted"))
    p.add_argument("--combine", choices=("expression_only", "spatial_only", "both"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="seed-averaged evaluation report with figures")
    p.add_argument("--config")
    _add_dataset_flags(p)
    _add_metric_flags(p)
    p.add_argument("--task", choices=("cell_type", "status"))
    p.add_argument("--k", type=int)
    p.add_argument("--weighting", choices=("uniform", "similarity_weighted"))
    p.add_argument("--combine", choices=("expression_only", "spatial_only", "both"))
    p.add_argument("--seeds")
    p.add_argument("--fractions")
    p.add_argument("--stratify", choices=STRATIFY_MODES)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="one evaluation report per axis value")
    p.add_argument("--config")
    _add_dataset_flags(p)
    _add_metric_flags(p)
    p.add_argument("--axis", choices=SWEEP_AXES)
    p.add_argument("--values")
    p.add_argument("--task", choices=("cell_type", "status"))
    p.add_argument("--k", type=int)
    p.add_argument("--weighting", choices=("uniform", "similarity_weighted"))
    p.add_argument("--combine", choices=("expression_only", "spatial_only", "both"))
    p.add_argument("--seeds")
    p.add_argument("--fractions")
    p.add_argument("--stratify", choices=STRATIFY_MODES)
    p.add_argument("--negative-window", dest="negative_window")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stats", help="summarize a prompt corpus")
    p.add_argument("--config")
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    return parser


_ERROR_CODES = {
    ValueError: "value",
    KeyError: "key",
    IndexError: "index",
    FileNotFoundError: "io",
    OSError: "io",
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        print(
            json.dumps({"error": {"code": exc.code, "message": str(exc)}}),
            file=sys.stderr,
        )
        return 1
    except tuple(_ERROR_CODES) as exc:
        code = next(c for t, c in _ERROR_CODES.items() if isinstance(exc, t))
        print(
            json.dumps({"error": {"code": code, "message": str(exc)}}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
