#!/usr/bin/env python3
"""
File: conftest.py
    Shared pytest fixtures: tiny model configs and a small generated dataset.
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from backbone import ModelConfig  # noqa: E402
from decoder import FusionConfig  # noqa: E402
from qaModule import QAConfig  # noqa: E402
from syntheticData import VOCABULARY, GroundingSample, generate_dataset  # noqa: E402
from tensorEngine import Rng  # noqa: E402
from trainer import TrainConfig  # noqa: E402

DATA_SEED: int = 7
DATA_COUNT: int = 12


@pytest.fixture
def rng() -> Rng:
    return Rng(0, 'tests')


@pytest.fixture
def model_config() -> ModelConfig:
    """Four by four patches of a 64 pixel image, two thin layers."""
    return ModelConfig(image_size=64, patch_size=16, width=16, layers=2, heads=2, mlp_ratio=2, max_text_len=12,
                       vocab_size=len(VOCABULARY), embed_dim=16)


@pytest.fixture
def qa_config() -> QAConfig:
    return QAConfig(layers=(1, 2), width=8, num_queries=3, heads=2, mlp_ratio=2)


@pytest.fixture
def fusion_config() -> FusionConfig:
    return FusionConfig(layers=(1, 2), heads=2)


@pytest.fixture
def train_config() -> TrainConfig:
    return TrainConfig(epochs=1, batch_size=4, learning_rate=1e-3, pretrain_steps=2, pretrain_batch_size=4)


@pytest.fixture(scope='session')
def samples() -> list[GroundingSample]:
    return generate_dataset(DATA_SEED, DATA_COUNT)


@pytest.fixture
def images(samples) -> np.ndarray:
    return np.stack([sample.image for sample in samples[:2]])


@pytest.fixture
def tokens(samples) -> np.ndarray:
    return np.stack([sample.tokens for sample in samples[:2]])
