import math

import numpy as np
import pytest

from spatialprompt.data import Dataset, ProteinPanel
from spatialprompt.errors import ConfigError
from spatialprompt.ranking import (
    MetricConfig,
    build_index,
    distance_matrix,
    export_matrices,
    export_neighbors,
    expression_similarity,
    rank_window,
    similarity_matrix,
    spatial_distance,
    top_k_dissimilar,
    top_k_farthest,
    top_k_nearest,
    top_k_similar,
)
from spatialprompt.util import WarningTally

from conftest import random_dataset


# -- independent oracles ------------------------------------------------------


def brute_expression_order(ds, i, scope_members, metric="cosine"):
    """Pairwise calls + python sort; no shared code with the index build."""
    sims = {j: expression_similarity(ds.expression[i], ds.expression[j], metric)
            for j in scope_members if j != i}
    return [j for j, _ in sorted(sims.items(), key=lambda kv: (-kv[1], kv[0]))]


def brute_spatial_order(ds, i, scope_members, metric="euclidean"):
    dists = {j: spatial_distance(ds.positions[i], ds.positions[j], metric)
             for j in scope_members if j != i}
    return [j for j, _ in sorted(dists.items(), key=lambda kv: (kv[1], kv[0]))]


# -- pairwise metric contracts ------------------------------------------------


class TestExpressionSimilarity:
    def test_cosine_arithmetic_oracle(self):
        a, b = (1.0, 2.0, 3.0), (4.0, 5.0, 6.0)
        dot = sum(x * y for x, y in zip(a, b))
        expected = dot / math.sqrt(sum(x * x for x in a) * sum(y * y for y in b))
        assert expected == pytest.approx(32 / math.sqrt(1078))
        assert abs(expression_similarity(a, b) - expected) < 1e-12

    def test_cosine_self_similarity_is_one(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = rng.uniform(0.1, 5, 7)
            assert expression_similarity(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_cosine_orthogonal(self):
        assert expression_similarity((1.0, 0.0), (0.0, 1.0)) == 0.0

    def test_zero_norm_is_zero_with_warning(self):
        tally = WarningTally()
        assert expression_similarity((0.0, 0.0), (1.0, 2.0), tally=tally) == 0.0
        assert tally.counts["zero_norm_vector"] == 1

    def test_pearson_bounds_and_zero_variance(self):
        tally = WarningTally()
        assert expression_similarity((1.0, 1.0, 1.0), (1.0, 2.0, 3.0), "pearson", tally) == 0.0
        assert tally.counts["zero_variance_vector"] == 1
        r = expression_similarity((1.0, 2.0, 3.0), (3.0, 2.0, 1.0), "pearson")
        assert r == pytest.approx(-1.0)

    def test_negative_euclidean(self):
        assert expression_similarity((0.0, 0.0), (3.0, 4.0), "negative_euclidean") == -5.0

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        for metric in ("cosine", "pearson", "negative_euclidean"):
            a, b = rng.uniform(0, 5, 9), rng.uniform(0, 5, 9)
            assert expression_similarity(a, b, metric) == pytest.approx(
                expression_similarity(b, a, metric), abs=1e-12
            )

    def test_unknown_metric(self):
        with pytest.raises(ConfigError):
            expression_similarity((1.0,), (1.0,), "hamming")


class TestSpatialDistance:
    def test_three_four_five(self):
        assert spatial_distance((0.0, 0.0), (3.0, 4.0)) == 5.0

    def test_l1(self):
        assert spatial_distance((0.0, 0.0), (3.0, 4.0), "l1") == 7.0

    def test_identity_zero(self):
        assert spatial_distance((2.5, -1.0), (2.5, -1.0)) == 0.0
        assert spatial_distance((2.5, -1.0), (2.5, -1.0), "l1") == 0.0

    def test_cosine_distance(self):
        assert spatial_distance((1.0, 0.0), (2.0, 0.0), "cosine_distance") == pytest.approx(0.0)
        assert spatial_distance((1.0, 0.0), (0.0, 3.0), "cosine_distance") == pytest.approx(1.0)

    def test_cosine_distance_zero_vector_defined(self):
        tally = WarningTally()
        assert spatial_distance((0.0, 0.0), (1.0, 1.0), "cosine_distance", tally) == 1.0
        assert tally.counts["zero_position_vector"] == 1


class TestMatrices:
    def test_symmetry_and_diagonals(self):
        rng = np.random.default_rng(2)
        V = rng.uniform(0.01, 5, size=(150, 12))
        P = rng.uniform(0, 100, size=(150, 2))
        G = similarity_matrix(V)
        assert np.abs(G - G.T).max() <= 1e-12
        assert np.abs(np.diag(G) - 1.0).max() <= 1e-12
        for metric in ("euclidean", "l1"):
            D = distance_matrix(P, metric)
            assert np.abs(D - D.T).max() <= 1e-12
            assert np.abs(np.diag(D)).max() == 0.0

    def test_triangle_inequality(self):
        rng = np.random.default_rng(3)
        P = rng.uniform(0, 50, size=(60, 2))
        for metric in ("euclidean", "l1"):
            D = distance_matrix(P, metric)
            for _ in range(300):
                i, j, k = rng.integers(0, 60, 3)
                assert D[i, k] <= D[i, j] + D[j, k] + 1e-9

    def test_pairwise_matches_matrix(self):
        rng = np.random.default_rng(4)
        V = rng.uniform(0, 5, size=(20, 6))
        for metric in ("cosine", "pearson", "negative_euclidean"):
            G = similarity_matrix(V, metric)
            for _ in range(40):
                i, j = rng.integers(0, 20, 2)
                assert G[i, j] == pytest.approx(
                    expression_similarity(V[i], V[j], metric), abs=1e-12
                )


# -- index build and queries --------------------------------------------------


def line_dataset():
    return Dataset(
        panel=ProteinPanel(("A", "B")),
        cell_ids=["c0", "c1", "c2"],
        sample_ids=["s", "s", "s"],
        expression=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
        positions=np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]]),
    )


class TestBuildIndex:
    def test_collinear_spatial_ordering(self):
        index = build_index(line_dataset())
        assert top_k_nearest(index, 0, 2) == [1, 2]

    def test_identical_expression_mutual_top1(self):
        ds = random_dataset(np.random.default_rng(5), 10)
        expr = ds.expression.copy()
        expr[4] = expr[7]
        ds2 = Dataset(ds.panel, ds.cell_ids, ["s"] * 10, expr, ds.positions)
        index = build_index(ds2, MetricConfig(neighbor_scope="global"))
        assert top_k_similar(index, 4, 1) == [7]
        assert top_k_similar(index, 7, 1) == [4]

    def test_single_cell_sample_warns_with_empty_orderings(self):
        ds = random_dataset(np.random.default_rng(6), 5)
        ds2 = Dataset(ds.panel, ds.cell_ids, ["a", "a", "a", "a", "solo"], ds.expression, ds.positions)
        tally = WarningTally()
        index = build_index(ds2, tally=tally)
        assert tally.counts["single_cell_sample"] == 1
        assert top_k_similar(index, 4, 3) == []
        assert top_k_nearest(index, 4, 3) == []

    def test_scope_restricts_to_sample(self):
        ds = random_dataset(np.random.default_rng(7), 40, n_samples=4)
        index = build_index(ds)
        for i in (0, 13, 26):
            ids, _ = index.expression_neighbors(i)
            assert len(ids) == 9
            assert all(ds.sample_ids[j] == ds.sample_ids[i] for j in ids)

    def test_queries_never_contain_self(self):
        ds = random_dataset(np.random.default_rng(8), 30)
        index = build_index(ds, MetricConfig(neighbor_scope="global"))
        for i in range(30):
            n = len(ds) - 1
            assert i not in top_k_similar(index, i, n)
            assert i not in top_k_nearest(index, i, n)

    def test_scale_invariance_of_cosine_ordering(self):
        ds = random_dataset(np.random.default_rng(9), 25)
        expr = ds.expression.copy()
        scaled = expr.copy()
        scaled[3] *= 17.0
        a = build_index(Dataset(ds.panel, ds.cell_ids, ["s"] * 25, expr, ds.positions),
                        MetricConfig(neighbor_scope="global"))
        b = build_index(Dataset(ds.panel, ds.cell_ids, ["s"] * 25, scaled, ds.positions),
                        MetricConfig(neighbor_scope="global"))
        np.testing.assert_array_equal(a.expression_ordering(3), b.expression_ordering(3))

    def test_threads_do_not_change_results(self):
        ds = random_dataset(np.random.default_rng(10), 60, n_samples=6)
        a = build_index(ds)
        b = build_index(ds, threads=4)
        for i in range(60):
            np.testing.assert_array_equal(a.expression_ordering(i), b.expression_ordering(i))
            np.testing.assert_array_equal(a.spatial_ordering(i), b.spatial_ordering(i))

    def test_bad_backend(self):
        with pytest.raises(ConfigError):
            build_index(line_dataset(), backend="approximate")

    def test_metric_config_validation(self):
        with pytest.raises(ConfigError):
            MetricConfig(expression_metric="jaccard")
        with pytest.raises(ConfigError):
            MetricConfig(spatial_metric="chebyshev")
        with pytest.raises(ConfigError):
            MetricConfig(neighbor_scope="per_patient")
        with pytest.raises(ConfigError):
            MetricConfig(asinh_cofactor=0.0)

    def test_asinh_transform_changes_similarities_not_contracts(self):
        ds = random_dataset(np.random.default_rng(18), 20)
        raw = build_index(ds, MetricConfig(neighbor_scope="global"))
        xfm = build_index(
            ds, MetricConfig(neighbor_scope="global", asinh_cofactor=5.0)
        )
        _, raw_sims = raw.expression_neighbors(0)
        _, xfm_sims = xfm.expression_neighbors(0)
        assert not np.allclose(raw_sims, xfm_sims)
        # spatial side is untouched by the expression transform
        np.testing.assert_array_equal(raw.spatial_ordering(0), xfm.spatial_ordering(0))


@pytest.fixture(scope="module")
def indexed():
    ds = random_dataset(np.random.default_rng(11), 50, n_markers=6, grid=12)
    return ds, build_index(ds, MetricConfig(neighbor_scope="global"))


class TestQueries:
    def test_k_zero_empty(self, indexed):
        _, index = indexed
        assert top_k_similar(index, 0, 0) == []
        assert top_k_farthest(index, 0, 0) == []

    def test_dissimilar_full_is_reverse(self, indexed):
        _, index = indexed
        order = [int(x) for x in index.expression_ordering(7)]
        assert top_k_dissimilar(index, 7, 49) == order[::-1]

    def test_all_queries_match_brute_force(self, indexed):
        ds, index = indexed
        members = range(len(ds))
        for i in range(50):
            expr_o = brute_expression_order(ds, i, members)
            spat_o = brute_spatial_order(ds, i, members)
            assert top_k_similar(index, i, 3) == expr_o[:3]
            assert top_k_dissimilar(index, i, 3) == expr_o[::-1][:3]
            assert top_k_nearest(index, i, 3) == spat_o[:3]
            assert top_k_farthest(index, i, 3) == spat_o[::-1][:3]

    def test_rank_window_equals_top_k(self, indexed):
        _, index = indexed
        for which, top in (("similar", top_k_similar), ("nearest", top_k_nearest)):
            assert rank_window(index, 4, which, 1, 3) == top(index, 4, 3)

    def test_rank_window_clipping(self):
        ds = random_dataset(np.random.default_rng(12), 6)
        index = build_index(ds, MetricConfig(neighbor_scope="global"))
        # 5 neighbors available: window 4..6 clips to positions 4 and 5
        assert len(rank_window(index, 0, "nearest", 4, 6)) == 2
        assert rank_window(index, 0, "similar", 6, 9) == []

    def test_rank_window_oracle_far_positions(self, indexed):
        ds, index = indexed
        members = range(len(ds))
        for i in range(30):
            expr_o = brute_expression_order(ds, i, members)
            spat_o = brute_spatial_order(ds, i, members)
            assert rank_window(index, i, "dissimilar", 7, 9) == expr_o[::-1][6:9]
            assert rank_window(index, i, "farthest", 7, 9) == spat_o[::-1][6:9]
            assert rank_window(index, i, "nearest", 4, 6) == spat_o[3:6]

    def test_window_argument_errors(self, indexed):
        _, index = indexed
        with pytest.raises(ValueError):
            rank_window(index, 0, "similar", 3, 2)
        with pytest.raises(ValueError):
            rank_window(index, 0, "similar", 0, 2)
        with pytest.raises(ConfigError):
            rank_window(index, 0, "closest", 1, 2)

    def test_invalid_cell_index(self, indexed):
        _, index = indexed
        with pytest.raises(IndexError):
            top_k_similar(index, 50, 1)
        with pytest.raises(IndexError):
            top_k_nearest(index, -1, 1)

    def test_negative_k(self, indexed):
        _, index = indexed
        with pytest.raises(ValueError):
            top_k_similar(index, 0, -1)


class TestBackendEquivalence:
    @pytest.mark.parametrize("spatial_metric", ["euclidean", "l1", "cosine_distance"])
    def test_accelerated_matches_exhaustive(self, spatial_metric):
        rng = np.random.default_rng(13)
        ds = random_dataset(rng, 400, n_markers=5, grid=15)
        cfg = MetricConfig(spatial_metric=spatial_metric, neighbor_scope="global")
        ex = build_index(ds, cfg, backend="exhaustive")
        acc = build_index(ds, cfg, backend="spatial_accelerated")
        for i in range(0, 400, 7):
            for k in (0, 1, 3, 10, 399):
                assert top_k_nearest(acc, i, k) == top_k_nearest(ex, i, k)
            assert top_k_farthest(acc, i, 5) == top_k_farthest(ex, i, 5)
            for lo, hi in ((1, 1), (1, 3), (4, 6), (7, 9)):
                assert rank_window(acc, i, "nearest", lo, hi) == rank_window(ex, i, "nearest", lo, hi)
                assert rank_window(acc, i, "farthest", lo, hi) == rank_window(ex, i, "farthest", lo, hi)

    def test_lazy_rows_match_materialized(self):
        ds = random_dataset(np.random.default_rng(14), 120, grid=9)
        cfg = MetricConfig(neighbor_scope="global")
        eager = build_index(ds, cfg)
        lazy = build_index(ds, cfg, materialize_cap=0)
        for i in range(0, 120, 11):
            np.testing.assert_array_equal(eager.expression_ordering(i), lazy.expression_ordering(i))
            np.testing.assert_array_equal(eager.spatial_ordering(i), lazy.spatial_ordering(i))

    def test_duplicate_points_tie_order(self):
        # many cells share exact coordinates; tie order must match everywhere
        positions = np.array([[0.0, 0.0]] * 4 + [[1.0, 0.0]] * 4 + [[2.0, 0.0]] * 2)
        rng = np.random.default_rng(15)
        ds = Dataset(
            panel=ProteinPanel(("A", "B")),
            cell_ids=[f"c{i}" for i in range(10)],
            sample_ids=["s"] * 10,
            expression=rng.uniform(0, 2, size=(10, 2)),
            positions=positions,
        )
        cfg = MetricConfig(neighbor_scope="global")
        ex = build_index(ds, cfg, backend="exhaustive")
        acc = build_index(ds, cfg, backend="spatial_accelerated")
        for i in range(10):
            for k in (1, 3, 5, 9):
                assert top_k_nearest(acc, i, k) == top_k_nearest(ex, i, k)
        # duplicates of cell 0 at distance zero, ascending index, self excluded
        assert top_k_nearest(ex, 0, 3) == [1, 2, 3]
        assert top_k_nearest(ex, 2, 3) == [0, 1, 3]


class TestExports:
    def test_neighbor_export_shape(self, tmp_path):
        ds = random_dataset(np.random.default_rng(16), 8)
        index = build_index(ds, MetricConfig(neighbor_scope="global"))
        path = export_neighbors(index, 3, tmp_path / "nb.tsv")
        lines = path.read_text().splitlines()
        assert lines[0] == "cell_id\tkind\trank\tneighbor_id\tscore"
        assert len(lines) == 1 + 8 * 4 * 3
        first = lines[1].split("\t")
        assert first[0] == "c0" and first[1] == "similar" and first[2] == "1"

    def test_matrix_export_and_cap(self, tmp_path):
        ds = random_dataset(np.random.default_rng(17), 6)
        index = build_index(ds, MetricConfig(neighbor_scope="global"))
        files = export_matrices(index, tmp_path)
        assert sorted(p.name for p in files) == ["distance_global.tsv", "similarity_global.tsv"]
        header = files[0].read_text().splitlines()[0].split("\t")
        assert header == ["cell_id"] + ds.cell_ids
        with pytest.raises(ConfigError):
            export_matrices(index, tmp_path, cap=5)
