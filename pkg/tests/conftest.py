import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mrnlg.data import MeaningRepresentation, Slot, prepare_corpus, synth_corpus, SynthConfig

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def kentucky_mr():
    return MeaningRepresentation(
        "inform",
        (Slot("timepoint", "1792"), Slot("objStr", "kentucky"), Slot("claStr", "state"), Slot("relStr", "founded")),
        "when was kentucky founded",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus():
    config = SynthConfig(n_groups=6, instances_per_group=5, n_slot_types=10)
    return prepare_corpus(synth_corpus(config, seed=3))
