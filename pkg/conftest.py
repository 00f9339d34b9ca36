import numpy as np
import pytest

from srm_reciprocity.dyad_data import NetworkDataset
from srm_reciprocity.model import FixedEffects, VarianceComponents
from srm_reciprocity.simulator import CovariateGenerator, SimulationSpec, simulate


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow recovery tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo or recovery test (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def write_csv_text(tmp_path):
    """Write CSV text to a temporary file and return its path."""
    def _write(text: str, name: str = "data.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return _write


@pytest.fixture
def triad() -> NetworkDataset:
    """Three nodes, two reciprocated dyads and one one-way dyad."""
    records = [
        ("1", "2", 3, 10, 0.5, 2),
        ("2", "1", 4, 10, 0.5, 3),
        ("1", "3", 0, 5, -1.0, 4),
        ("3", "1", 5, 5, -1.0, 5),
        ("2", "3", 7, 8, 2.0, 6),
    ]
    return NetworkDataset.from_records(records)


@pytest.fixture
def small_spec() -> SimulationSpec:
    return SimulationSpec(
        n_nodes=8,
        fixed=FixedEffects(alpha=-0.5, beta=0.8),
        components=VarianceComponents(sigma_a=0.9, sigma_b=0.7, rho_ab=0.4, sigma_u=1.1,
                                      sigma_v=0.6, rho_uv=-0.3, sigma_d=0.5),
        trials_per_cell=6,
        covariate=CovariateGenerator(kind='uniform', low=-1.0, high=1.0),
        seed=11,
    )


@pytest.fixture
def simulated(small_spec):
    dataset, latents = simulate(small_spec)
    return dataset, latents


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(2024)))
