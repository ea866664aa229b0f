"""Deterministic train/validation/test splitting.

Allocation is hierarchical: the test count is fixed first, then validation is
taken from the non-test remainder, so the validation share of train+validation
stays within one cell of the requested fraction. Stratified modes allocate per
stratum with carry so rounding never drifts globally.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigError, IntegrityError
from .util import sha256_bytes

SPLIT_NAMES = ("train", "validation", "test")
DEFAULT_FRACTIONS = (0.81, 0.09, 0.10)
STRATIFY_MODES = ("none", "cell_type", "sample")


@dataclass(frozen=True)
class SplitAssignment:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        for name in SPLIT_NAMES:
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            object.__setattr__(self, name, np.sort(arr))

    @property
    def n_cells(self) -> int:
        return len(self.train) + len(self.validation) + len(self.test)

    def labels(self) -> list[str]:
        """Per-cell split name, indexed by cell index."""
        out = [""] * self.n_cells
        for name in SPLIT_NAMES:
            for i in getattr(self, name):
                out[int(i)] = name
        return out

    def checksum(self, cell_ids: Sequence[str]) -> str:
        labels = self.labels()
        payload = f"seed={self.seed}\n" + "\n".join(
            f"{cid}\t{lab}" for cid, lab in zip(cell_ids, labels)
        )
        return sha256_bytes(payload.encode("utf-8"))


def _validate_fractions(fractions: Sequence[float]) -> tuple[float, float, float]:
    if len(fractions) != 3:
        raise ConfigError("fractions must be (train, validation, test)")
    f = tuple(float(x) for x in fractions)
    if any(x < 0 for x in f):
        raise ConfigError(f"fractions must be non-negative, got {f}")
    if abs(sum(f) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got sum {sum(f)!r}")
    return f  # type: ignore[return-value]


class _CascadeRounder:
    """Round a running sequence of real targets to ints without global drift:
    the carry keeps the summed error below half a count."""

    def __init__(self) -> None:
        self.carry = 0.0

    def take(self, target: float, available: int) -> int:
        raw = target + self.carry
        n = int(np.floor(raw + 0.5))
        n = min(max(n, 0), available)
        self.carry = raw - n
        return n


def split(
    dataset: Dataset,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    stratify_by: str = "none",
    seed: int = 0,
) -> SplitAssignment:
    """Partition cell indices into train/validation/test.

    Deterministic for fixed (dataset, fractions, stratify_by, seed). With
    ``stratify_by="sample"`` whole samples are assigned to one split each, so
    exact fractions are met only as closely as sample sizes allow.
    """
    f = _validate_fractions(fractions)
    if stratify_by not in STRATIFY_MODES:
        raise ConfigError(f"stratify_by must be one of {STRATIFY_MODES}, got {stratify_by!r}")
    if seed < 0:
        raise ConfigError("seed must be unsigned")
    n = len(dataset)
    n_splits = sum(1 for x in f if x > 0)
    rng = np.random.default_rng(seed)

    if stratify_by == "sample":
        return _split_by_sample(dataset, f, seed, rng, n_splits)

    if stratify_by == "none":
        strata = {"all": np.arange(n, dtype=np.int64)}
    else:
        strata = {}
        types = np.asarray([t if t else "(unlabeled)" for t in dataset.cell_types])
        for label in sorted(set(types)):
            strata[label] = np.flatnonzero(types == label).astype(np.int64)

    buckets: dict[str, list[np.ndarray]] = {name: [] for name in SPLIT_NAMES}
    # stage 1 fixes test, stage 2 takes validation from the remainder, so the
    # validation share of train+validation is within one cell globally
    test_rounder = _CascadeRounder()
    val_rounder = _CascadeRounder()
    val_of_rest = f[1] / (f[0] + f[1]) if f[0] + f[1] > 0 else 0.0
    for label in sorted(strata):
        idx = strata[label]
        if len(idx) < n_splits:
            raise ConfigError(
                f"stratum {label!r} has {len(idx)} cells, fewer than {n_splits} splits"
            )
        shuffled = rng.permutation(idx)
        size = len(idx)
        n_test = test_rounder.take(f[2] * size, size) if f[0] + f[1] > 0 else size
        rest = size - n_test
        n_val = val_rounder.take(val_of_rest * rest, rest)
        n_train = rest - n_val
        for name, lo, hi in (
            ("train", 0, n_train),
            ("validation", n_train, n_train + n_val),
            ("test", n_train + n_val, size),
        ):
            buckets[name].append(shuffled[lo:hi])

    parts = {
        name: np.concatenate(buckets[name]) if buckets[name] else np.empty(0, dtype=np.int64)
        for name in SPLIT_NAMES
    }
    return SplitAssignment(parts["train"], parts["validation"], parts["test"], seed)


def _split_by_sample(
    dataset: Dataset,
    f: tuple[float, float, float],
    seed: int,
    rng: np.random.Generator,
    n_splits: int,
) -> SplitAssignment:
    sample_ids = sorted(dataset.sample_index)
    if len(sample_ids) < n_splits:
        raise ConfigError(
            f"{len(sample_ids)} samples cannot cover {n_splits} splits when "
            "stratifying by sample"
        )
    order = rng.permutation(len(sample_ids))
    buckets: dict[str, list[np.ndarray]] = {name: [] for name in SPLIT_NAMES}
    counts = np.zeros(3)
    assigned = 0.0
    targets = np.array(f)
    for pos in order:
        sid = sample_ids[int(pos)]
        members = dataset.sample_index[sid]
        assigned += len(members)
        # give the sample to the split furthest below its target share
        deficit = targets * assigned - counts
        k = int(np.argmax(deficit))
        counts[k] += len(members)
        buckets[SPLIT_NAMES[k]].append(members.astype(np.int64))
    parts = {
        name: np.concatenate(buckets[name]) if buckets[name] else np.empty(0, dtype=np.int64)
        for name in SPLIT_NAMES
    }
    return SplitAssignment(parts["train"], parts["validation"], parts["test"], seed)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def serialize_split(assignment: SplitAssignment, cell_ids: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    writer.writerow(["cell_id", "split", "seed"])
    for cid, lab in zip(cell_ids, assignment.labels()):
        writer.writerow([cid, lab, assignment.seed])
    return buf.getvalue()


def write_split(assignment: SplitAssignment, cell_ids: Sequence[str], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_split(assignment, cell_ids), encoding="utf-8")
    return path


def read_split(path: str | Path, cell_ids: Sequence[str]) -> SplitAssignment:
    """Load a three-column split file back against a dataset's cell ids."""
    pos = {cid: i for i, cid in enumerate(cell_ids)}
    parts: dict[str, list[int]] = {name: [] for name in SPLIT_NAMES}
    seed = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header != ["cell_id", "split", "seed"]:
            raise IntegrityError(f"{path}: not a split file (bad header {header})")
        seen = 0
        for row in reader:
            if not row:
                continue
            cid, lab, seed_str = row
            if lab not in SPLIT_NAMES:
                raise IntegrityError(f"{path}: unknown split label {lab!r}")
            if cid not in pos:
                raise IntegrityError(f"{path}: cell_id {cid!r} not in dataset")
            parts[lab].append(pos[cid])
            seed = int(seed_str)
            seen += 1
    if seen != len(cell_ids):
        raise IntegrityError(
            f"{path}: covers {seen} cells but dataset has {len(cell_ids)}"
        )
    return SplitAssignment(
        np.asarray(parts["train"], dtype=np.int64),
        np.asarray(parts["validation"], dtype=np.int64),
        np.asarray(parts["test"], dtype=np.int64),
        seed,
    )
