"""Shared fixtures: small corpora and session-scoped trained models.

Training happens once per session; attack, defense, metric, and acceptance
tests all reuse the same frozen models to keep the suite fast.
"""

import numpy as np
import pytest

from voxadv.corpus import SynthSpec, split, synth_corpus
from voxadv.frontend import FrontendConfig
from voxadv.models import CnnConfig, OptimizerConfig, TdnnConfig, build_cnn, build_tdnn, train_erm

# one desk-scale recipe shared by every trained fixture
DESK_FRONTEND = FrontendConfig(n_mels=32)
DESK_SPEC = SynthSpec(n_speakers=10, utterances_per_speaker=10, duration_s=1.0, seed=0)
DESK_CNN = CnnConfig(n_classes=10, channels=(32,) * 8, seed=0)
DESK_TDNN = TdnnConfig(n_classes=10, channels=(48, 48, 48, 48, 96), embedding_dim=48, seed=0)
DESK_OPT = OptimizerConfig(epochs=30, seed=0, crop_s=1.0)


@pytest.fixture(scope="session")
def desk_corpus():
    return synth_corpus(DESK_SPEC)


@pytest.fixture(scope="session")
def desk_split(desk_corpus):
    return split(desk_corpus, 0.9, seed=0)


@pytest.fixture(scope="session")
def desk_train(desk_split):
    return desk_split[0]


@pytest.fixture(scope="session")
def desk_test(desk_split):
    return desk_split[1]


@pytest.fixture(scope="session")
def cnn_model(desk_train):
    model = build_cnn(DESK_CNN, DESK_FRONTEND)
    model, _ = train_erm(model, desk_train, DESK_OPT)
    return model


@pytest.fixture(scope="session")
def tdnn_model(desk_train):
    model = build_tdnn(DESK_TDNN, DESK_FRONTEND)
    model, _ = train_erm(model, desk_train, DESK_OPT)
    return model


@pytest.fixture(scope="session")
def test_batch(desk_test):
    """All test utterances as one (N, L) matrix plus the label vector."""
    x = np.stack([s.waveform for s in desk_test])
    y = desk_test.labels()
    return x, y
