import os

# rich wraps table cells at the default 80 columns; pin a wide console before the CLI is imported
os.environ["COLUMNS"] = "200"

import numpy as np
import pytest

from ldpfl.base.config import (
    DataSourceConfig,
    ExtractorConfig,
    RunConfig,
)
from ldpfl.bitcodec import CodecConfig
from ldpfl.data import synth_blobs
from ldpfl.federation import FederationConfig
from ldpfl.neuralnet import OptimizerConfig


@pytest.fixture
def codec():
    return CodecConfig(m=4, n=5)


@pytest.fixture
def blobs():
    return synth_blobs(classes=3, per_class=40, dims=4, spread=0.5, seed=7)


@pytest.fixture
def small_config(tmp_path) -> RunConfig:
    """A run that finishes in well under a second per stage."""
    return RunConfig(
        data=DataSourceConfig(classes=3, per_class=30, dims=4, spread=0.5),
        extractor=ExtractorConfig(hidden=(6,), tap_layer=1, epochs=5, patience=None),
        federation=FederationConfig(
            clients=2,
            local_epochs=1,
            rounds=2,
            hidden=(8,),
            optimizer=OptimizerConfig(kind="adam", learning_rate=0.01),
        ),
        seed=3,
        out_dir=str(tmp_path / "run"),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
