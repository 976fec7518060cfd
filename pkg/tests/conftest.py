# tests/conftest.py
"""
Shared fixtures: small blob datasets and tiny indexes built in temp dirs.
"""

import numpy as np
import pytest

from core.datasets import generate_synthetic, generate_synthetic_split
from core.types import ZoomConfig
from zoom.index import build

n_examples = 2000
n_queries = 20
n_features = 16
n_blobs = 16


@pytest.fixture(scope="session")
def blob_split():
    """(database, queries) drawn from one blob sample."""
    return generate_synthetic_split(n_examples, n_queries, n_features, n_blobs, seed=7)


@pytest.fixture(scope="session")
def database(blob_split):
    return blob_split[0]


@pytest.fixture(scope="session")
def queries(blob_split):
    return blob_split[1]


@pytest.fixture(scope="session")
def small_config():
    return ZoomConfig(n_cluster=32, m=4, l=32, out_d=6, seed=3)


@pytest.fixture(scope="session")
def built_index(database, small_config, tmp_path_factory):
    """Index over the session database, full view read through the page cache."""
    workdir = tmp_path_factory.mktemp("index")
    index = build(database, small_config, str(workdir / "small.fvw"), io_mode='buffered')
    yield index
    index.close()


@pytest.fixture
def tiny_dataset():
    return generate_synthetic(300, 8, 6, seed=11)


@pytest.fixture
def tiny_index(tiny_dataset, tmp_path):
    """Function-scoped index that a test may serialize, move or corrupt."""
    config = ZoomConfig(n_cluster=8, m=2, l=16, out_d=4, seed=5)
    index = build(tiny_dataset, config, str(tmp_path / "tiny.fvw"), io_mode='buffered')
    yield index
    index.close()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
