import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from textfill.model import ModelConfig, TextGuidedInpainter
from textfill.toydata import make_toy_dataset
from textfill.trainer import initialize_weights


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    make_toy_dataset(d, n=8, size=64, seed=0)
    return d


@pytest.fixture(scope="session")
def toy_manifest(toy_dir):
    return toy_dir / "manifest.tsv"


@pytest.fixture(scope="session")
def eval_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy_eval")
    make_toy_dataset(d, n=10, size=64, seed=7)
    return d


def small_config(**overrides) -> ModelConfig:
    base = dict(image_size=64, base_channels=16, latent_dim=64)
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture()
def small_model():
    torch.manual_seed(0)
    model = TextGuidedInpainter(small_config(), vocab_size=24)
    initialize_weights(model, seed=0)
    return model
