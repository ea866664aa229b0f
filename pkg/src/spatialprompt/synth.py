"""Synthetic multi-sample datasets with known ground truth.

Cells of a type share an expression archetype plus truncated Gaussian noise
and cluster spatially around a per-sample, per-type center. Sample status
tilts the type composition, so both the cell-type and the status tasks have
a recoverable signal whose strength the config controls.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, ProteinPanel, write_dataset
from .errors import ConfigError

STATUS_LABELS = ("case", "control")

# expected distance between archetype vectors is about
# 0.85 * expression_scale * sqrt(M); the separation ratio relates that
# distance to the per-marker noise sigma, so difficulty does not collapse
# as the panel grows
_ARCHETYPE_SPREAD = 0.85


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 10
    cells_per_sample: int = 500
    n_types: int = 7
    n_markers: int = 38
    separation: float = 2.0
    spatial_clustering: float = 5.0
    status_effect: float = 0.8
    noise_scale: float | None = None  # None derives it from separation
    expression_scale: float = 1.0
    image_extent: float = 1000.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_samples", "cells_per_sample", "n_types", "n_markers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if not self.separation > 0:
            raise ConfigError("separation ratio must be positive")
        if not self.spatial_clustering > 0:
            raise ConfigError("spatial_clustering must be positive")
        if not 0 <= self.status_effect < 1:
            raise ConfigError("status_effect must be in [0, 1)")
        if self.noise_scale is not None and self.noise_scale < 0:
            raise ConfigError("noise_scale must be non-negative")

    def as_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "cells_per_sample": self.cells_per_sample,
            "n_types": self.n_types,
            "n_markers": self.n_markers,
            "separation": self.separation,
            "spatial_clustering": self.spatial_clustering,
            "status_effect": self.status_effect,
            "noise_scale": self.noise_scale,
            "expression_scale": self.expression_scale,
            "image_extent": self.image_extent,
            "seed": self.seed,
        }


def type_names(n_types: int) -> list[str]:
    return [f"type_{t + 1:02d}" for t in range(n_types)]


def _composition(config: SynthConfig, status: str) -> np.ndarray:
    """Type mixing proportions; 'case' samples shift toward the first half
    of the type list, 'control' toward the second half."""
    t = config.n_types
    tilt = np.zeros(t)
    half = t // 2
    tilt[:half] = 1.0
    tilt[t - half :] = -1.0
    sign = 1.0 if status == STATUS_LABELS[0] else -1.0
    weights = 1.0 + sign * config.status_effect * tilt
    return weights / weights.sum()


def _place_centers(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    """Spread-out centers via best-candidate sampling (keeps type clusters
    from landing on top of each other)."""
    centers = np.empty((n, 2))
    for t in range(n):
        candidates = rng.uniform(lo, hi, size=(8, 2))
        if t == 0:
            centers[0] = candidates[0]
            continue
        dists = np.sqrt(
            ((candidates[:, None, :] - centers[None, :t, :]) ** 2).sum(axis=2)
        ).min(axis=1)
        centers[t] = candidates[int(np.argmax(dists))]
    return centers


def generate(config: SynthConfig) -> Dataset:
    """Deterministic per seed; labels are complete, so generated data can
    drive every prediction task."""
    rng = np.random.default_rng(config.seed)
    types = type_names(config.n_types)
    scale = config.expression_scale
    archetypes = scale * (0.3 + np.abs(rng.normal(size=(config.n_types, config.n_markers))))
    if config.noise_scale is None:
        sigma = (
            _ARCHETYPE_SPREAD * scale * np.sqrt(config.n_markers) / config.separation
        )
    else:
        sigma = config.noise_scale

    statuses = [STATUS_LABELS[k % 2] for k in range(config.n_samples)]
    statuses = [statuses[int(k)] for k in rng.permutation(config.n_samples)]

    extent = config.image_extent
    margin = 0.1 * extent
    center_sigma = (extent / 4.0) / config.spatial_clustering

    cell_ids: list[str] = []
    sample_ids: list[str] = []
    cell_types: list[str] = []
    cell_statuses: list[str] = []
    expr_blocks: list[np.ndarray] = []
    pos_blocks: list[np.ndarray] = []
    for s in range(config.n_samples):
        sid = f"s{s + 1:02d}"
        status = statuses[s]
        counts = rng.multinomial(config.cells_per_sample, _composition(config, status))
        centers = _place_centers(rng, config.n_types, margin, extent - margin)
        k = 0
        for t, count in enumerate(counts):
            if count == 0:
                continue
            noise = rng.normal(size=(count, config.n_markers)) * sigma
            expr_blocks.append(np.clip(archetypes[t] + noise, 0.0, None))
            pos_blocks.append(centers[t] + rng.normal(size=(count, 2)) * center_sigma)
            for _ in range(count):
                cell_ids.append(f"{sid}_c{k:05d}")
                sample_ids.append(sid)
                cell_types.append(types[t])
                cell_statuses.append(status)
                k += 1

    return Dataset(
        panel=ProteinPanel(tuple(f"marker_{m + 1:02d}" for m in range(config.n_markers))),
        cell_ids=cell_ids,
        sample_ids=sample_ids,
        expression=np.vstack(expr_blocks),
        positions=np.vstack(pos_blocks),
        cell_types=cell_types,
        statuses=cell_statuses,
        type_vocabulary=types,
        status_vocabulary=list(STATUS_LABELS),
    )


def generate_to_dir(config: SynthConfig, out_dir: str | Path) -> dict[str, Path]:
    """Generate and write in the same tabular format ingest reads."""
    return write_dataset(generate(config), out_dir)
