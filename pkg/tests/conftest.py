import numpy as np
import pytest
import torch

from partlayout.data import default_synth_config, split_corpus, synth_generate

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def small_corpus():
    """20 instances, split; enough for shape/determinism tests."""
    corpus = synth_generate(default_synth_config(10), seed=7)
    return split_corpus(corpus, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(123)


def random_part_graph(rng, p=6, n_present=None):
    """Random valid (X, A) pair: present parts get ordered corner boxes."""
    n_present = rng.integers(1, p + 1) if n_present is None else n_present
    present = np.zeros(p)
    present[rng.choice(p, size=n_present, replace=False)] = 1
    X = np.zeros((p, 5))
    for k in range(p):
        if present[k]:
            x = np.sort(rng.uniform(-1, 1, 2))
            y = np.sort(rng.uniform(-1, 1, 2))
            while x[1] - x[0] < 0.05:
                x = np.sort(rng.uniform(-1, 1, 2))
            while y[1] - y[0] < 0.05:
                y = np.sort(rng.uniform(-1, 1, 2))
            X[k] = [1.0, x[0], y[0], x[1], y[1]]
    A = np.zeros((p, p))
    idx = np.where(present)[0]
    for i, m in enumerate(idx):
        for n in idx[i + 1 :]:
            if rng.random() < 0.4:
                A[m, n] = A[n, m] = 1
    return X, A
