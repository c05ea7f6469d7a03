import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hyperfuse.datamodel import ModelConfig
from hyperfuse.synthdata import SynthSpec, generate_cohort


@pytest.fixture
def tiny_config():
    """Small everything: keeps gradient checks and training loops fast."""
    return ModelConfig(n_nodes=6, ts_dim=5, vec_dim=4, latent_dim=3,
                       prior_subset_size=2, hyperedge_size=3,
                       enc_hidden=4, dec_hidden=4, vec_enc_hidden=4,
                       vec_dec_hidden=4, latent_cls_hidden=4, conn_cls_hidden=5,
                       epochs_stage1=2, epochs_stage2=2, seed=0)


@pytest.fixture
def tiny_spec():
    return SynthSpec(n_per_class=5, n_nodes=6, ts_dim=5, vec_dim=4,
                     separation=1.5, communities=2, disease_rois=(0, 1), seed=3)


@pytest.fixture
def tiny_cohort(tiny_spec):
    return generate_cohort(tiny_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
