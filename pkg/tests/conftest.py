import numpy as np
import pytest

from spatialprompt.data import Dataset, ProteinPanel


@pytest.fixture
def toy_panel():
    return ProteinPanel(("A", "B", "C"))


@pytest.fixture
def toy_dataset(toy_panel):
    """Three cells in one sample on a line; expressions chosen so cell 0 and
    1 are most similar and cell 2 stands apart."""
    return Dataset(
        panel=toy_panel,
        cell_ids=["c1", "c2", "c3"],
        sample_ids=["s1", "s1", "s1"],
        expression=np.array([[3.0, 1.0, 2.0], [6.0, 2.0, 4.0], [0.0, 5.0, 1.0]]),
        positions=np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]]),
        cell_types=["T cell", "T cell", "Neutrophils"],
        statuses=["case", "case", "case"],
    )


def random_dataset(
    rng: np.random.Generator,
    n_cells: int,
    n_markers: int = 8,
    n_samples: int = 1,
    grid: int | None = None,
    labeled: bool = True,
) -> Dataset:
    """Unstructured random dataset; ``grid`` snaps coordinates to an integer
    lattice so exact distance ties are common."""
    if grid is not None:
        positions = rng.integers(0, grid, size=(n_cells, 2)).astype(float)
    else:
        positions = rng.uniform(0, 100, size=(n_cells, 2))
    sample_ids = [f"s{(i % n_samples) + 1}" for i in range(n_cells)]
    statuses = [f"st{(int(sid[1:]) % 2) + 1}" for sid in sample_ids]
    return Dataset(
        panel=ProteinPanel(tuple(f"p{j}" for j in range(n_markers))),
        cell_ids=[f"c{i}" for i in range(n_cells)],
        sample_ids=sample_ids,
        expression=rng.uniform(0, 5, size=(n_cells, n_markers)),
        positions=positions,
        cell_types=(
            [f"t{rng.integers(0, 3)}" for _ in range(n_cells)] if labeled else None
        ),
        statuses=statuses,
    )
