import numpy as np
import pytest

from spatialprompt.data import dataset_checksum, load_dataset_dir
from spatialprompt.errors import ConfigError
from spatialprompt.ranking import build_index, top_k_nearest
from spatialprompt.synth import SynthConfig, generate, generate_to_dir


def test_deterministic_per_seed():
    cfg = SynthConfig(n_samples=3, cells_per_sample=50, n_types=3, n_markers=10, seed=9)
    a, b = generate(cfg), generate(cfg)
    assert a.cell_ids == b.cell_ids
    np.testing.assert_array_equal(a.expression, b.expression)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert dataset_checksum(a) == dataset_checksum(b)


def test_seed_changes_data():
    base = SynthConfig(n_samples=2, cells_per_sample=30, seed=0)
    other = SynthConfig(n_samples=2, cells_per_sample=30, seed=1)
    assert dataset_checksum(generate(base)) != dataset_checksum(generate(other))


def test_zero_noise_collapses_types():
    cfg = SynthConfig(n_samples=2, cells_per_sample=60, n_types=3, n_markers=8,
                      noise_scale=0.0, seed=4)
    ds = generate(cfg)
    for sid, members in ds.sample_index.items():
        for t in set(ds.cell_types):
            rows = [i for i in members if ds.cell_types[int(i)] == t]
            if len(rows) > 1:
                block = ds.expression[rows]
                assert np.all(block == block[0])


def test_expression_non_negative_and_labeled():
    ds = generate(SynthConfig(n_samples=2, cells_per_sample=40, seed=5))
    assert (ds.expression >= 0).all()
    assert all(ds.cell_types)
    assert all(ds.statuses)
    assert ds.type_vocabulary == tuple(f"type_{t:02d}" for t in range(1, 8))
    assert ds.status_vocabulary == ("case", "control")


def test_default_shape_mirrors_larger_cohort():
    ds = generate(SynthConfig(n_samples=2, cells_per_sample=20))
    assert ds.panel.size == 38
    assert len(ds.type_vocabulary) == 7


def test_round_trip_through_ingest(tmp_path):
    cfg = SynthConfig(n_samples=3, cells_per_sample=40, n_types=4, n_markers=9, seed=6)
    ds = generate(cfg)
    generate_to_dir(cfg, tmp_path / "d")
    back = load_dataset_dir(tmp_path / "d")
    assert back.cell_ids == ds.cell_ids
    np.testing.assert_array_equal(back.expression, ds.expression)
    assert dataset_checksum(back) == dataset_checksum(ds)


def test_spatial_neighbors_share_type_when_separated():
    ds = generate(SynthConfig(n_samples=5, cells_per_sample=300, n_types=3,
                              separation=5.0, seed=7))
    index = build_index(ds)
    same = []
    for i in range(0, len(ds), 3):
        for j in top_k_nearest(index, i, 3):
            same.append(ds.cell_types[j] == ds.cell_types[i])
    assert np.mean(same) >= 0.9


def test_composition_within_binomial_error():
    # case samples lean toward the first types by (1 + effect) / (1 - effect)
    cfg = SynthConfig(n_samples=20, cells_per_sample=400, n_types=4,
                      status_effect=0.5, seed=8)
    ds = generate(cfg)
    weights = np.array([1.5, 1.5, 0.5, 0.5])
    expected = weights / weights.sum()
    case_cells = [i for i in range(len(ds)) if ds.statuses[i] == "case"]
    n = len(case_cells)
    for t, name in enumerate(ds.type_vocabulary):
        observed = sum(1 for i in case_cells if ds.cell_types[i] == name)
        sigma = np.sqrt(n * expected[t] * (1 - expected[t]))
        assert abs(observed - n * expected[t]) <= 3 * sigma


def test_statuses_balanced_across_samples():
    ds = generate(SynthConfig(n_samples=10, cells_per_sample=10, seed=9))
    per_sample = {sid: ds.statuses[int(m[0])] for sid, m in ds.sample_index.items()}
    values = list(per_sample.values())
    assert values.count("case") == 5
    assert values.count("control") == 5


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(n_samples=0)
    with pytest.raises(ConfigError):
        SynthConfig(separation=0.0)
    with pytest.raises(ConfigError):
        SynthConfig(status_effect=1.5)
    with pytest.raises(ConfigError):
        SynthConfig(noise_scale=-1.0)
