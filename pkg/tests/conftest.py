"""Shared fixtures: synthetic corpus halves and session-trained toy models.

The three trainings (~45 s each) run at most once per session and only when
a test actually requests them; -m 'not slow' runs the whole suite without
any training.
"""

import time

import numpy as np
import pytest

from tslab.core import PixelGrid
from tslab.corpus import synthetic_corpus
from tslab.denoiser import TrainConfig, train
from tslab.rng import SeededRng
from tslab.sampling import NoiseStrategy

SIGMA = 25 / 255
PATCH = 16


def toy_train_config(kind: str, seed: int) -> TrainConfig:
    return TrainConfig(
        strategy=NoiseStrategy(kind, SIGMA),
        patch_size=PATCH,
        stride=PATCH // 2,
        epochs=400,
        batch_size=8,
        learning_rate=1e-3,
        seed=seed,
        max_steps=2000,
    )


@pytest.fixture(scope="session")
def corpus_halves():
    corpus = synthetic_corpus(12, 96, seed=0)
    return corpus[:6], corpus[6:]


@pytest.fixture(scope="session")
def eval_pairs():
    """100 held-out (clean, noisy) 16x16 patches with fixed noise draws."""
    patches = []
    for image in synthetic_corpus(8, 96, seed=7):
        grid = image.grid()
        for y in range(0, 96 - PATCH + 1, PATCH):
            for x in range(0, 96 - PATCH + 1, PATCH):
                patches.append(PixelGrid.from_array(grid[y : y + PATCH, x : x + PATCH]))
    patches = patches[:100]
    root = SeededRng(123)
    pairs = []
    for i, clean in enumerate(patches):
        noise = root.child(i).normal(PATCH * PATCH, SIGMA)
        noisy = PixelGrid(PATCH, PATCH, np.clip(clean.values + noise, 0.0, 1.0))
        pairs.append((clean, noisy))
    return pairs


@pytest.fixture(scope="session")
def train_seconds():
    return {}


def _timed_train(config, corpus, label, train_seconds):
    start = time.perf_counter()
    result = train(config, corpus)
    train_seconds[label] = time.perf_counter() - start
    return result


@pytest.fixture(scope="session")
def model_normal(corpus_halves, train_seconds):
    """(model, history) trained with plain Gaussian noise on corpus half A."""
    return _timed_train(
        toy_train_config("normal", seed=1), corpus_halves[0], "normal", train_seconds
    )


@pytest.fixture(scope="session")
def model_tsdef(corpus_halves, train_seconds):
    """(model, history) trained with the ts-def strategy on corpus half A."""
    return _timed_train(
        toy_train_config("ts-def", seed=1), corpus_halves[0], "ts-def", train_seconds
    )


@pytest.fixture(scope="session")
def model_b(corpus_halves, train_seconds):
    """(model, history) with a different seed on the disjoint corpus half B."""
    return _timed_train(
        toy_train_config("normal", seed=2), corpus_halves[1], "model-b", train_seconds
    )
