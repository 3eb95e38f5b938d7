"""Pinned reference configurations used by the experiments and acceptance suite."""
from __future__ import annotations

import numpy as np

from .models import Dataset, ModelSpec, init_params

TINY_INPUTS = [[1.0, 0.0], [-0.5, 1.0], [-0.5, -1.0]]
TINY_LABELS = [[0.5, -0.5], [-0.25, 0.75], [0.0, -0.5]]

# the fourth input repeats the first, with a different label
DEFICIENT_INPUTS = TINY_INPUTS + [TINY_INPUTS[0]]
DEFICIENT_LABELS = TINY_LABELS + [[-0.5, 0.25]]

# two classes, two samples each; class label (1, 0) or (0, 1)
COLLAPSE_INPUTS = [[1.0, 0.5], [0.5, 1.0], [-1.0, -0.5], [-0.5, -1.0]]
COLLAPSE_LABELS = [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]
COLLAPSE_CLASSES = [0, 0, 1, 1]

TINY_SPEC = ModelSpec(input_dim=2, output_dim=2, hidden_widths=(16,), activation="tanh")
AFFINE_SPEC = ModelSpec(input_dim=2, output_dim=2, hidden_widths=(), activation="tanh")


def tiny_full_rank(seed: int = 0):
    """M=2, Q=2, N=3, one tanh hidden layer of width 16 (K=82 >= QN=6)."""
    return TINY_SPEC, init_params(TINY_SPEC, seed), Dataset(TINY_INPUTS, TINY_LABELS)


def rank_deficient(seed: int = 0, consistent_labels: bool = False):
    """Tiny-full-rank with a duplicated input: rank(D) <= Q(N-1) = 6 < QN = 8."""
    labels = [list(r) for r in DEFICIENT_LABELS]
    if consistent_labels:
        labels[-1] = list(labels[0])
    return TINY_SPEC, init_params(TINY_SPEC, seed), Dataset(DEFICIENT_INPUTS, labels)


def affine(seed: int = 0):
    """No hidden layer, M=Q=2 on the tiny inputs: K = QN = 6."""
    return AFFINE_SPEC, init_params(AFFINE_SPEC, seed), Dataset(TINY_INPUTS, TINY_LABELS)


def collapse_case(seed: int = 0):
    """Q=2, N=4 two-class dataset on the tiny architecture (K=82 >= QN=8)."""
    data = Dataset(COLLAPSE_INPUTS, COLLAPSE_LABELS, classes=COLLAPSE_CLASSES)
    return TINY_SPEC, init_params(TINY_SPEC, seed), data


REFERENCE_MODELS = {
    "tiny-full-rank": tiny_full_rank,
    "rank-deficient": rank_deficient,
    "affine": affine,
}
