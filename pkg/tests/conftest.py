import numpy as np
import pytest

from docevents.extractor import init_local_params
from docevents.features import HashedFeatureProvider
from docevents.synth import GenConfig, generate, inventory_for


@pytest.fixture(scope="session")
def small_cfg():
    return GenConfig(n_docs=12, sentences_per_doc=(2, 4), tokens_per_sentence=(6, 12),
                     seed=7)


@pytest.fixture(scope="session")
def small_corpus(small_cfg):
    return generate(small_cfg)


@pytest.fixture(scope="session")
def inventory(small_cfg):
    return inventory_for(small_cfg)


@pytest.fixture(scope="session")
def provider():
    return HashedFeatureProvider(dim=16, seed=3)


@pytest.fixture()
def tiny_local(inventory, provider):
    rng = np.random.default_rng(0)
    return init_local_params(rng, inventory, token_dim=provider.dim, width_dim=4, hidden=8)
