"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Tolerances and runtime budgets are pinned here; run with
``pytest tests/test_acceptance.py -v -s``.
"""
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest

from spatialprompt.classify import ClassifierConfig
from spatialprompt.cli import main
from spatialprompt.data import Dataset, ProteinPanel
from spatialprompt.evaluate import EvalSettings, evaluate_classifier, frequency_summary, sweep
from spatialprompt.ranking import (
    MetricConfig,
    build_index,
    distance_matrix,
    rank_window,
    similarity_matrix,
    top_k_farthest,
    top_k_nearest,
)
from spatialprompt.sentences import to_sentence
from spatialprompt.synth import SynthConfig, generate
from spatialprompt.util import sha256_file

from conftest import random_dataset


@contextmanager
def criterion(name: str):
    start = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"[ACCEPTANCE] {name}: FAIL ({time.perf_counter() - start:.1f}s)")
        raise
    print(f"[ACCEPTANCE] {name}: PASS ({time.perf_counter() - start:.1f}s)")


def test_matrix_invariants():
    """Symmetry 1e-12, cosine diagonal 1, distance diagonal 0, triangle
    inequality on 100 random datasets (N <= 200, M <= 40) in under 30 s."""
    with criterion("matrix-invariants"):
        rng = np.random.default_rng(100)
        start = time.perf_counter()
        for _ in range(100):
            n = int(rng.integers(2, 201))
            m = int(rng.integers(2, 41))
            V = rng.uniform(0.01, 10, size=(n, m))
            P = rng.uniform(-50, 50, size=(n, 2))
            G = similarity_matrix(V, "cosine")
            assert np.abs(G - G.T).max() <= 1e-12
            assert np.abs(np.diag(G) - 1.0).max() <= 1e-12
            for metric in ("euclidean", "l1"):
                D = distance_matrix(P, metric)
                assert np.abs(D - D.T).max() <= 1e-12
                assert np.abs(np.diag(D)).max() == 0.0
                i = rng.integers(0, n, 50)
                j = rng.integers(0, n, 50)
                k = rng.integers(0, n, 50)
                assert np.all(D[i, k] <= D[i, j] + D[j, k] + 1e-9)
        elapsed = time.perf_counter() - start
        assert elapsed < 30, f"matrix invariants took {elapsed:.1f}s"


def test_backend_oracle_equivalence():
    """Accelerated spatial top-K and rank windows identical (tie order
    included) to exhaustive O(N^2) enumeration; 50 datasets up to N=2000 in
    under 60 s."""
    with criterion("backend-oracle-equivalence"):
        rng = np.random.default_rng(200)
        start = time.perf_counter()
        sizes = [int(x) for x in np.exp(rng.uniform(np.log(10), np.log(500), 44))]
        sizes += [800, 1200, 1500, 1800, 2000, 2000]
        for case, n in enumerate(sizes):
            grid = int(rng.integers(5, 40)) if case % 2 == 0 else None
            metric = "euclidean" if case % 3 else "l1"
            ds = random_dataset(rng, n, n_markers=4, grid=grid, labeled=False)
            cfg = MetricConfig(spatial_metric=metric, neighbor_scope="global")
            exhaustive = build_index(ds, cfg, backend="exhaustive")
            accelerated = build_index(ds, cfg, backend="spatial_accelerated")
            probes = rng.integers(0, n, min(n, 25))
            for i in probes:
                i = int(i)
                for k in (0, 1, 3, min(40, n - 1), n - 1):
                    assert top_k_nearest(accelerated, i, k) == top_k_nearest(exhaustive, i, k)
                assert top_k_farthest(accelerated, i, 5) == top_k_farthest(exhaustive, i, 5)
                for lo, hi in ((1, 1), (1, 3), (4, 6), (7, 9)):
                    assert rank_window(accelerated, i, "nearest", lo, hi) == rank_window(
                        exhaustive, i, "nearest", lo, hi
                    )
                    assert rank_window(accelerated, i, "farthest", lo, hi) == rank_window(
                        exhaustive, i, "farthest", lo, hi
                    )
        elapsed = time.perf_counter() - start
        assert elapsed < 60, f"backend equivalence took {elapsed:.1f}s"


def test_sentence_properties():
    """Permutation, deterministic tie-break, and monotone-transform
    invariance over 1000 random cells."""
    with criterion("sentence-properties"):
        rng = np.random.default_rng(300)
        for _ in range(1000):
            m = int(rng.integers(2, 41))
            panel = ProteinPanel(tuple(f"p{j:02d}" for j in range(m)))
            # quantized values force ties
            expr = np.round(rng.uniform(0, 4, m), 0 if rng.integers(2) else 1)
            ds = Dataset(
                panel=panel,
                cell_ids=["c"],
                sample_ids=["s"],
                expression=expr[None, :],
                positions=np.zeros((1, 2)),
            )
            s = to_sentence(ds.cell(0), panel)
            assert sorted(s.tokens) == sorted(panel.names)  # permutation
            # ties keep panel order
            order = [panel.index_of(t) for t in s.tokens]
            for a, b in zip(order, order[1:]):
                if expr[a] == expr[b]:
                    assert a < b
            # identical input, identical bytes
            assert to_sentence(ds.cell(0), panel).text() == s.text()
            # strictly increasing transforms keep the sentence
            for f in (lambda x: 2 * x + 1, lambda x: x**3):
                ds2 = Dataset(
                    panel=panel,
                    cell_ids=["c"],
                    sample_ids=["s"],
                    expression=f(expr)[None, :],
                    positions=np.zeros((1, 2)),
                )
                assert to_sentence(ds2.cell(0), panel).tokens == s.tokens


def test_corpus_determinism(tmp_path, monkeypatch):
    """Two full synth -> split -> prompts CLI runs with identical configs
    give byte-identical corpora and manifests."""
    with criterion("corpus-determinism"):
        for d in ("run1", "run2"):
            workdir = tmp_path / d
            workdir.mkdir()
            monkeypatch.chdir(workdir)
            assert main(["synth", "--out", "data", "--seed", "1",
                         "--samples", "5", "--cells", "60"]) == 0
            assert main(["split", "--dataset", "data", "--seed", "4",
                         "--out", "split.tsv"]) == 0
            assert main(["prompts", "--dataset", "data", "--split-file", "split.tsv",
                         "--k", "3", "--task", "multi_task", "--seed", "4",
                         "--out", "corpus.jsonl"]) == 0
        a, b = tmp_path / "run1", tmp_path / "run2"
        assert sha256_file(a / "corpus.jsonl") == sha256_file(b / "corpus.jsonl")
        assert sha256_file(a / "corpus.manifest.json") == sha256_file(
            b / "corpus.manifest.json"
        )


@pytest.fixture(scope="module")
def default_synthetic():
    # the documented default shape: separation 2, 10 samples x 500 cells
    return generate(SynthConfig(seed=0))


def test_neighbor_context_beats_baseline(default_synthetic):
    """K=3 neighbor voting (combine=both) beats the nearest-centroid K=0
    baseline in at least 2 of 3 seeds with a positive mean gap."""
    with criterion("k-context-vs-baseline"):
        ds = default_synthetic
        index = build_index(ds)
        base = EvalSettings(
            task="cell_type",
            seeds=(0, 1, 2),
            classifier=ClassifierConfig(k=3, combine="both"),
        )
        knn = evaluate_classifier(ds, base, index=index)
        centroid = evaluate_classifier(ds, replace(base, baseline_k0=True), index=index)
        wins = sum(
            1 for a, b in zip(knn.seed_accuracies, centroid.seed_accuracies) if a > b
        )
        gap = knn.seed_mean - centroid.seed_mean
        print(
            f"  knn={['%.4f' % a for a in knn.seed_accuracies]} "
            f"centroid={['%.4f' % a for a in centroid.seed_accuracies]} gap={gap:+.4f}"
        )
        assert wins >= 2
        assert gap > 0


def test_negative_window_sweep_harness(default_synthetic):
    """The negative-window sweep completes with 4 comparable reports sharing
    one split checksum (no claim on result ordering)."""
    with criterion("negative-window-harness"):
        settings = EvalSettings(
            task="cell_type",
            seeds=(0, 1, 2),
            classifier=ClassifierConfig(k=3, combine="both"),
        )
        windows = [(1, 1), (1, 3), (4, 6), (7, 9)]
        reports = sweep(default_synthetic, "negative_window", windows, settings)
        assert len(reports) == 4
        assert [r.axis_value for r in reports] == ["1-1", "1-3", "4-6", "7-9"]
        assert len({r.split_checksum for r in reports}) == 1
        for r in reports:
            assert r.n_evaluated > 0
            assert r.diagnostics["window"] == list(map(int, r.axis_value.split("-")))


def test_frequency_summary_analog():
    """Cohort shares sum to 100 within 1e-9; on well-separated data the
    predicted-vs-truth share gap is at most 5 points per label."""
    with criterion("cohort-frequency-analog"):
        ds = generate(SynthConfig(n_samples=10, cells_per_sample=300, separation=5.0, seed=3))
        index = build_index(ds)
        collected: list = []
        evaluate_classifier(
            ds,
            EvalSettings(task="cell_type", seeds=(0, 1, 2),
                         classifier=ClassifierConfig(k=3, combine="both")),
            index=index,
            collect=collected,
        )
        by_cell = {i: pred for _, i, _, pred in collected}
        predicted = [by_cell.get(i) for i in range(len(ds))]
        summary = frequency_summary(ds.cell_types, ds.statuses, predicted)
        assert set(summary.groups) == {"case", "control"}
        for group, series in summary.groups.items():
            for name in ("truth", "predicted"):
                assert abs(sum(series[name].values()) - 100.0) <= 1e-9
            for label, truth_share in series["truth"].items():
                gap = abs(truth_share - series["predicted"].get(label, 0.0))
                assert gap <= 5.0, f"{group}/{label}: gap {gap:.2f} points"


def test_strong_signal_classification():
    """Separation-5 synthetic data: cell-type accuracy >= 0.95 on held-out
    cells and status accuracy >= 0.9 on 20 held-out samples, under 2 min."""
    with criterion("strong-signal-classification"):
        start = time.perf_counter()
        ds = generate(SynthConfig(n_samples=40, cells_per_sample=250, separation=5.0, seed=1))

        type_report = evaluate_classifier(
            ds,
            EvalSettings(
                task="cell_type",
                fractions=(0.81, 0.09, 0.10),
                seeds=(0,),
                classifier=ClassifierConfig(k=3, combine="both"),
            ),
        )
        assert type_report.n_evaluated >= 500
        print(f"  cell-type accuracy {type_report.accuracy:.4f} on {type_report.n_evaluated} cells")
        assert type_report.accuracy >= 0.95

        status_report = evaluate_classifier(
            ds,
            EvalSettings(
                task="status",
                fractions=(0.5, 0.0, 0.5),
                stratify_by="sample",
                seeds=(0,),
                metric=MetricConfig(neighbor_scope="global"),
                classifier=ClassifierConfig(
                    k=5, combine="expression_only", label_target="status"
                ),
            ),
        )
        assert status_report.n_evaluated == 20
        print(f"  status accuracy {status_report.accuracy:.4f} on 20 held-out samples")
        assert status_report.accuracy >= 0.9
        elapsed = time.perf_counter() - start
        assert elapsed < 120, f"strong-signal run took {elapsed:.1f}s"
