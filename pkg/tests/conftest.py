import pytest

from pomp.config import TrainingConfig
from pomp.data import fit_normalizer
from pomp.model import init_model
from pomp.synthetic import SyntheticSpec, generate_synthetic
from pomp.text import Vocabulary


@pytest.fixture(scope="session")
def small_data():
    """30 records/category over 3 categories of 4 diseases each."""
    spec = SyntheticSpec(
        seed=3, records_per_category=30, category_count=3, diseases_per_category=4
    )
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def small_config():
    return TrainingConfig(d_text=16, d_model=16, d_fuse=12, heads=4, max_len=64, seed=9)


@pytest.fixture()
def small_model(small_data, small_config):
    """Freshly initialized (untrained) model over the small dataset."""
    ds, taxonomy, _ = small_data
    normalizer = fit_normalizer(ds)
    vocab = Vocabulary.build(ds)
    return init_model(taxonomy, vocab, normalizer, small_config)
