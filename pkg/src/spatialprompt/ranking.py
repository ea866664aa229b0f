"""Expression-similarity and spatial-proximity rankings plus top-K queries.

For every cell the index answers four orderings over the other in-scope
cells: most similar / most dissimilar by expression, nearest / farthest by
position. Ties always break by ascending cell index so corpora are
byte-reproducible. The ``spatial_accelerated`` backend uses a KD-tree for
nearest queries and must return exactly what the exhaustive backend returns,
including tie order.
"""
from __future__ import annotations

from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .data import Dataset
from .errors import ConfigError
from .util import WarningTally

EXPRESSION_METRICS = ("cosine", "pearson", "negative_euclidean")
SPATIAL_METRICS = ("euclidean", "l1", "cosine_distance")
NEIGHBOR_SCOPES = ("within_sample", "global")
BACKENDS = ("exhaustive", "spatial_accelerated")
QUERY_KINDS = ("similar", "dissimilar", "nearest", "farthest")

# groups above this size keep row results on demand instead of materializing
# the full n x n orderings
MATERIALIZE_CAP = 2500


@dataclass(frozen=True)
class MetricConfig:
    expression_metric: str = "cosine"
    spatial_metric: str = "euclidean"
    neighbor_scope: str = "within_sample"
    # optional inverse-hyperbolic-sine transform of intensities before
    # similarity; None keeps raw values (the default behavior)
    asinh_cofactor: float | None = None

    def __post_init__(self) -> None:
        if self.expression_metric not in EXPRESSION_METRICS:
            raise ConfigError(
                f"expression_metric must be one of {EXPRESSION_METRICS}, "
                f"got {self.expression_metric!r}"
            )
        if self.spatial_metric not in SPATIAL_METRICS:
            raise ConfigError(
                f"spatial_metric must be one of {SPATIAL_METRICS}, "
                f"got {self.spatial_metric!r}"
            )
        if self.neighbor_scope not in NEIGHBOR_SCOPES:
            raise ConfigError(
                f"neighbor_scope must be one of {NEIGHBOR_SCOPES}, "
                f"got {self.neighbor_scope!r}"
            )
        if self.asinh_cofactor is not None and not self.asinh_cofactor > 0:
            raise ConfigError("asinh_cofactor must be positive")


# ---------------------------------------------------------------------------
# pairwise metrics
# ---------------------------------------------------------------------------


def expression_similarity(
    a, b, metric: str = "cosine", tally: WarningTally | None = None
) -> float:
    """Similarity of two expression vectors; higher means more alike.

    Zero-norm (cosine) and zero-variance (pearson) vectors yield 0 with a
    counted warning instead of raising.
    """
    if metric not in EXPRESSION_METRICS:
        raise ConfigError(f"unknown expression metric: {metric!r}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigError(f"vectors must share one length, got {a.shape} and {b.shape}")
    if metric == "negative_euclidean":
        return -float(np.sqrt(np.sum((a - b) ** 2)))
    if metric == "pearson":
        a = a - a.mean()
        b = b - b.mean()
    na = float(np.sqrt(np.dot(a, a)))
    nb = float(np.sqrt(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        key = "zero_variance_vector" if metric == "pearson" else "zero_norm_vector"
        if tally is not None:
            tally.count(key, "similarity defined as 0 for degenerate vector")
        return 0.0
    return float(np.clip(np.dot(a / na, b / nb), -1.0, 1.0))


def spatial_distance(
    p, q, metric: str = "euclidean", tally: WarningTally | None = None
) -> float:
    """Distance between two positions; cosine_distance is 1 - cos of the
    position vectors, with zero vectors pinned to distance 1."""
    if metric not in SPATIAL_METRICS:
        raise ConfigError(f"unknown spatial metric: {metric!r}")
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if metric == "euclidean":
        return float(np.sqrt(np.sum((p - q) ** 2)))
    if metric == "l1":
        return float(np.sum(np.abs(p - q)))
    npn = float(np.sqrt(np.dot(p, p)))
    nqn = float(np.sqrt(np.dot(q, q)))
    if npn == 0.0 or nqn == 0.0:
        if tally is not None:
            tally.count("zero_position_vector", "cosine distance defined as 1 at origin")
        return 1.0
    return float(1.0 - np.clip(np.dot(p / npn, q / nqn), -1.0, 1.0))


def _normalize_rows(
    V: np.ndarray, tally: WarningTally | None, warn_key: str
) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", V, V))
    zero = norms == 0.0
    if zero.any() and tally is not None:
        for _ in range(int(zero.sum())):
            tally.count(warn_key, "similarity defined as 0 for degenerate vector")
    safe = np.where(zero, 1.0, norms)
    return V / safe[:, None]


def similarity_matrix(
    V: np.ndarray, metric: str = "cosine", tally: WarningTally | None = None
) -> np.ndarray:
    """Dense pairwise expression similarities (higher = more alike)."""
    if metric not in EXPRESSION_METRICS:
        raise ConfigError(f"unknown expression metric: {metric!r}")
    V = np.asarray(V, dtype=np.float64)
    if metric == "negative_euclidean":
        return -cdist(V, V, "euclidean")
    if metric == "pearson":
        V = V - V.mean(axis=1, keepdims=True)
        key = "zero_variance_vector"
    else:
        key = "zero_norm_vector"
    Vn = _normalize_rows(V, tally, key)
    return np.clip(Vn @ Vn.T, -1.0, 1.0)


def distance_matrix(
    P: np.ndarray, metric: str = "euclidean", tally: WarningTally | None = None
) -> np.ndarray:
    """Dense pairwise spatial distances (lower = closer)."""
    if metric not in SPATIAL_METRICS:
        raise ConfigError(f"unknown spatial metric: {metric!r}")
    P = np.asarray(P, dtype=np.float64)
    if metric == "euclidean":
        return cdist(P, P, "euclidean")
    if metric == "l1":
        return cdist(P, P, "cityblock")
    norms = np.sqrt(np.einsum("ij,ij->i", P, P))
    zero = norms == 0.0
    if zero.any() and tally is not None:
        for _ in range(int(zero.sum())):
            tally.count("zero_position_vector", "cosine distance defined as 1 at origin")
    Pn = P / np.where(zero, 1.0, norms)[:, None]
    D = 1.0 - np.clip(Pn @ Pn.T, -1.0, 1.0)
    if zero.any():
        D[zero, :] = 1.0
        D[:, zero] = 1.0
    return D


# ---------------------------------------------------------------------------
# per-group ranking state
# ---------------------------------------------------------------------------


def _sorted_rows_desc(values: np.ndarray) -> np.ndarray:
    # stable ascending sort of the negated values = descending with ties in
    # ascending index order
    return np.argsort(-values, axis=-1, kind="stable")


def _sorted_rows_asc(values: np.ndarray) -> np.ndarray:
    return np.argsort(values, axis=-1, kind="stable")


class _Group:
    """Rankings for one neighbor-scope group (a sample, or everything)."""

    def __init__(
        self,
        members: np.ndarray,
        expr: np.ndarray,
        coords: np.ndarray,
        config: MetricConfig,
        backend: str,
        tally: WarningTally,
        materialize: bool,
    ) -> None:
        self.members = members
        self.config = config
        self.backend = backend
        self.tally = tally
        self.n = len(members)
        self.coords = np.ascontiguousarray(coords)

        metric = config.expression_metric
        if metric == "negative_euclidean":
            self._expr_basis = np.ascontiguousarray(expr)
        elif metric == "pearson":
            centered = expr - expr.mean(axis=1, keepdims=True)
            self._expr_basis = _normalize_rows(centered, tally, "zero_variance_vector")
        else:
            self._expr_basis = _normalize_rows(expr, tally, "zero_norm_vector")

        self._expr_order: np.ndarray | None = None
        self._expr_scores: np.ndarray | None = None
        self._spat_order: np.ndarray | None = None
        self._spat_scores: np.ndarray | None = None
        self._row_cache: OrderedDict[tuple[str, int], tuple[np.ndarray, np.ndarray]] = (
            OrderedDict()
        )
        self._tree: cKDTree | None = None

        if config.spatial_metric == "cosine_distance":
            zero = np.einsum("ij,ij->i", self.coords, self.coords) == 0.0
            for _ in range(int(zero.sum())):
                tally.count("zero_position_vector", "cosine distance defined as 1 at origin")
        if self.n == 1:
            tally.count(
                "single_cell_sample",
                "a one-cell scope group has empty neighbor orderings",
            )
        if materialize and self.n > 1:
            S = self._expr_row_values(None)
            self._expr_order = _sorted_rows_desc(S).astype(np.int32)
            self._expr_scores = S
            if backend == "exhaustive":
                D = self._spat_row_values(None)
                self._spat_order = _sorted_rows_asc(D).astype(np.int32)
                self._spat_scores = D
        if backend == "spatial_accelerated" and self._tree_p() is not None and self.n > 1:
            self._tree = cKDTree(self.coords)

    def _tree_p(self) -> float | None:
        return {"euclidean": 2.0, "l1": 1.0}.get(self.config.spatial_metric)

    # value computation; the full matrix is built by stacking the row kernel
    # so materialized and on-demand paths agree bit for bit on ties
    def _expr_row_values(self, li: int | None) -> np.ndarray:
        B = self._expr_basis
        if self.config.expression_metric == "negative_euclidean":
            if li is None:
                return -cdist(B, B, "euclidean")
            return -cdist(B, B[li : li + 1], "euclidean").ravel()
        if li is None:
            return np.vstack([np.clip(B @ B[i], -1.0, 1.0) for i in range(self.n)])
        return np.clip(B @ B[li], -1.0, 1.0)

    def _spat_row_values(self, li: int | None) -> np.ndarray:
        metric = self.config.spatial_metric
        P = self.coords
        if metric in ("euclidean", "l1"):
            how = "euclidean" if metric == "euclidean" else "cityblock"
            if li is None:
                return cdist(P, P, how)
            return cdist(P, P[li : li + 1], how).ravel()
        if li is None:
            return np.vstack([self._spat_row_values(i) for i in range(self.n)])
        norms = np.sqrt(np.einsum("ij,ij->i", P, P))
        zero = norms == 0.0
        Pn = P / np.where(zero, 1.0, norms)[:, None]
        row = 1.0 - np.clip(Pn @ Pn[li], -1.0, 1.0)
        if zero.any():
            row[zero] = 1.0
            if zero[li]:
                row[:] = 1.0
        return row

    def _row(self, kind: str, li: int) -> tuple[np.ndarray, np.ndarray]:
        """Full ordering (local indices, self removed) plus scores for one
        cell, cached when computed lazily."""
        if kind == "expr" and self._expr_order is not None:
            order = self._expr_order[li]
            scores = self._expr_scores[li]  # type: ignore[index]
        elif kind == "spat" and self._spat_order is not None:
            order = self._spat_order[li]
            scores = self._spat_scores[li]  # type: ignore[index]
        else:
            key = (kind, li)
            cached = self._row_cache.get(key)
            if cached is not None:
                self._row_cache.move_to_end(key)
                return cached
            values = (
                self._expr_row_values(li) if kind == "expr" else self._spat_row_values(li)
            )
            order = (
                _sorted_rows_desc(values) if kind == "expr" else _sorted_rows_asc(values)
            )
            scores = values
            out = (order[order != li], scores)
            self._row_cache[key] = out
            if len(self._row_cache) > 512:
                self._row_cache.popitem(last=False)
            return out
        return order[order != li], scores

    def expr_neighbors(self, li: int) -> tuple[np.ndarray, np.ndarray]:
        order, scores = self._row("expr", li)
        return order, scores[order]

    def spat_neighbors(self, li: int) -> tuple[np.ndarray, np.ndarray]:
        order, scores = self._row("spat", li)
        return order, scores[order]

    def nearest_prefix(self, li: int, k: int) -> np.ndarray:
        """First k of the nearest ordering; uses the KD-tree when available
        without materializing the whole row."""
        if k <= 0 or self.n == 1:
            return np.empty(0, dtype=np.int64)
        if k >= self.n - 1 or self._spat_order is not None or self._tree is None:
            order, _ = self._row("spat", li)
            return order[:k]
        if ("spat", li) in self._row_cache:
            return self._row("spat", li)[0][:k]
        p = self.coords[li]
        k_query = min(k + 1, self.n)
        _, idx = self._tree.query(p, k=k_query, p=self._tree_p())
        idx = np.atleast_1d(idx)
        exact = self._pair_distances(idx, li)
        radius = float(exact.max())
        # pull in every point tied at the boundary distance, then re-rank
        # with the same distance kernel the exhaustive path uses
        cand = np.asarray(
            self._tree.query_ball_point(p, radius * (1.0 + 1e-9), p=self._tree_p()),
            dtype=np.int64,
        )
        cand_d = self._pair_distances(cand, li)
        order = np.lexsort((cand, cand_d))
        ranked = cand[order]
        return ranked[ranked != li][:k]

    def _pair_distances(self, idx: np.ndarray, li: int) -> np.ndarray:
        how = "euclidean" if self.config.spatial_metric == "euclidean" else "cityblock"
        return cdist(self.coords[idx], self.coords[li : li + 1], how).ravel()


# ---------------------------------------------------------------------------
# the index
# ---------------------------------------------------------------------------


class RankingIndex:
    """Immutable per-cell neighbor orderings over a dataset.

    Queries return global cell indices, never include the query cell, and are
    safe to run concurrently once the index is built.
    """

    def __init__(
        self,
        dataset: Dataset,
        config: MetricConfig,
        backend: str,
        groups: dict[str, _Group],
        group_key: list[str],
        local_pos: np.ndarray,
        warnings: WarningTally,
    ) -> None:
        self.dataset = dataset
        self.config = config
        self.backend = backend
        self._groups = groups
        self._group_key = group_key
        self._local_pos = local_pos
        self.warnings = warnings

    # -- plumbing -----------------------------------------------------------

    def _check(self, i: int) -> tuple[_Group, int]:
        if not 0 <= i < len(self.dataset):
            raise IndexError(f"cell index {i} out of range 0..{len(self.dataset) - 1}")
        return self._groups[self._group_key[i]], int(self._local_pos[i])

    def in_scope_count(self, i: int) -> int:
        group, _ = self._check(i)
        return group.n

    def expression_neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(global ids most-similar first, similarity per id)."""
        group, li = self._check(i)
        if group.n == 1:
            return np.empty(0, dtype=np.int64), np.empty(0)
        order, scores = group.expr_neighbors(li)
        return group.members[order], scores

    def spatial_neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(global ids nearest first, distance per id)."""
        group, li = self._check(i)
        if group.n == 1:
            return np.empty(0, dtype=np.int64), np.empty(0)
        order, scores = group.spat_neighbors(li)
        return group.members[order], scores

    def expression_ordering(self, i: int) -> np.ndarray:
        return self.expression_neighbors(i)[0]

    def spatial_ordering(self, i: int) -> np.ndarray:
        return self.spatial_neighbors(i)[0]


def build_index(
    dataset: Dataset,
    config: MetricConfig | None = None,
    backend: str = "exhaustive",
    threads: int | None = None,
    materialize_cap: int = MATERIALIZE_CAP,
    tally: WarningTally | None = None,
) -> RankingIndex:
    """Build the ranking index for a dataset.

    ``threads`` parallelizes per-group work; results are identical to the
    sequential build. Groups larger than ``materialize_cap`` compute rows on
    demand instead of storing full orderings.
    """
    config = config or MetricConfig()
    if backend not in BACKENDS:
        raise ConfigError(f"backend must be one of {BACKENDS}, got {backend!r}")
    tally = tally if tally is not None else WarningTally()

    if config.neighbor_scope == "global":
        member_sets = {"": np.arange(len(dataset), dtype=np.int64)}
    else:
        member_sets = {sid: idx.astype(np.int64) for sid, idx in dataset.sample_index.items()}

    expr = dataset.expression
    if config.asinh_cofactor is not None:
        expr = np.arcsinh(expr / config.asinh_cofactor)

    group_key = [""] * len(dataset)
    local_pos = np.zeros(len(dataset), dtype=np.int64)
    for key, members in member_sets.items():
        for pos, g in enumerate(members):
            group_key[int(g)] = key
            local_pos[int(g)] = pos

    def make(key: str) -> tuple[str, _Group]:
        members = member_sets[key]
        return key, _Group(
            members=members,
            expr=expr[members],
            coords=dataset.positions[members],
            config=config,
            backend=backend,
            tally=tally,
            materialize=len(members) <= materialize_cap,
        )

    keys = list(member_sets)
    if threads and threads > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            groups = dict(pool.map(make, keys))
    else:
        groups = dict(make(k) for k in keys)

    return RankingIndex(dataset, config, backend, groups, group_key, local_pos, tally)


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------


def _check_k(k: int) -> None:
    if k < 0:
        raise ValueError(f"K must be non-negative, got {k}")


def top_k_similar(index: RankingIndex, i: int, k: int) -> list[int]:
    _check_k(k)
    return [int(x) for x in index.expression_ordering(i)[:k]]


def top_k_dissimilar(index: RankingIndex, i: int, k: int) -> list[int]:
    _check_k(k)
    order = index.expression_ordering(i)
    return [int(x) for x in order[::-1][:k]]


def top_k_nearest(index: RankingIndex, i: int, k: int) -> list[int]:
    _check_k(k)
    group, li = index._check(i)
    if group.backend == "spatial_accelerated":
        return [int(group.members[x]) for x in group.nearest_prefix(li, k)]
    return [int(x) for x in index.spatial_ordering(i)[:k]]


def top_k_farthest(index: RankingIndex, i: int, k: int) -> list[int]:
    _check_k(k)
    order = index.spatial_ordering(i)
    return [int(x) for x in order[::-1][:k]]


def rank_window(index: RankingIndex, i: int, which: str, lo: int, hi: int) -> list[int]:
    """Ordering positions lo..hi inclusive (1-based), clipped to length."""
    if which not in QUERY_KINDS:
        raise ConfigError(f"which must be one of {QUERY_KINDS}, got {which!r}")
    if lo < 1:
        raise ValueError(f"window lower bound must be >= 1, got {lo}")
    if lo > hi:
        raise ValueError(f"window ({lo}, {hi}) has lo > hi")
    if which == "nearest":
        return top_k_nearest(index, i, hi)[lo - 1 :]
    if which == "similar":
        order = index.expression_ordering(i)
    elif which == "dissimilar":
        order = index.expression_ordering(i)[::-1]
    else:
        order = index.spatial_ordering(i)[::-1]
    return [int(x) for x in order[lo - 1 : hi]]


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------


def export_neighbors(index: RankingIndex, top_r: int, path: str | Path) -> Path:
    """Line-delimited (cell_id, kind, rank, neighbor_id, score) records for
    the top R neighbors under every query kind."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ds = index.dataset
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("cell_id\tkind\trank\tneighbor_id\tscore\n")
        for i in range(len(ds)):
            expr_ids, expr_scores = index.expression_neighbors(i)
            spat_ids, spat_scores = index.spatial_neighbors(i)
            sections = (
                ("similar", expr_ids, expr_scores),
                ("dissimilar", expr_ids[::-1], expr_scores[::-1]),
                ("nearest", spat_ids, spat_scores),
                ("farthest", spat_ids[::-1], spat_scores[::-1]),
            )
            for kind, ids, scores in sections:
                for rank in range(min(top_r, len(ids))):
                    fh.write(
                        f"{ds.cell_ids[i]}\t{kind}\t{rank + 1}\t"
                        f"{ds.cell_ids[int(ids[rank])]}\t{scores[rank]!r}\n"
                    )
    return path


def export_matrices(
    index: RankingIndex, out_dir: str | Path, cap: int = 5000
) -> list[Path]:
    """Dense similarity and distance matrices as tabular text, one file pair
    per scope group. Refuses datasets above ``cap`` cells."""
    ds = index.dataset
    if len(ds) > cap:
        raise ConfigError(
            f"dataset has {len(ds)} cells, above the dense-export cap of {cap}"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for key, group in index._groups.items():
        tag = key if key else "global"
        ids = [ds.cell_ids[int(g)] for g in group.members]
        for name, values in (
            ("similarity", group._expr_row_values(None)),
            ("distance", group._spat_row_values(None)),
        ):
            p = out_dir / f"{name}_{tag}.tsv"
            with open(p, "w", encoding="utf-8") as fh:
                fh.write("cell_id\t" + "\t".join(ids) + "\n")
                for row_id, row in zip(ids, values):
                    fh.write(row_id + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")
            written.append(p)
    return written
