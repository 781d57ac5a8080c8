"""The wide-and-deep slide classifier over 18-dimensional feature vectors.

Three deep branches (histogram 10-wide, regression line 2-wide,
component profile 5-wide), each two hidden layers of 300 ReLU units,
concatenated with the raw malignant tissue ratio as the 1-wide
memorization input (concat width 901), followed by a two-layer head and
a 2-way softmax.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np

from .features import FeatureVector
from .ingest import MALIGNANT, NORMAL
from .netcore import (
    BranchSpec,
    GraphSpec,
    NetworkGraph,
    SingleClassDataset,
    TrainConfig,
    forward,
    init_network,
    train,
)

WIDEDEEP_TAG = "widedeep-v1"

INPUT_MPH = "mph"
INPUT_LSRL = "lsrl"
INPUT_MCC = "mcc"
INPUT_MTR = "mtr"

HIDDEN_WIDTH = 300


def widedeep_spec(hidden: int = HIDDEN_WIDTH) -> GraphSpec:
    return GraphSpec(
        branches=(
            BranchSpec(INPUT_MPH, 10, (hidden, hidden)),
            BranchSpec(INPUT_LSRL, 2, (hidden, hidden)),
            BranchSpec(INPUT_MCC, 5, (hidden, hidden)),
        ),
        passthrough=((INPUT_MTR, 1),),
        head_hidden=(hidden, hidden),
        n_outputs=2,
    )


def build_widedeep(seed: int, hidden: int = HIDDEN_WIDTH) -> NetworkGraph:
    return init_network(widedeep_spec(hidden), seed)


def features_to_inputs(fvs: Sequence[FeatureVector]) -> dict[str, np.ndarray]:
    """Route feature families to their named network inputs."""
    return {
        INPUT_MPH: np.array([fv.mph for fv in fvs], dtype=float).reshape(len(fvs), 10),
        INPUT_LSRL: np.array([[fv.lsrl.m, fv.lsrl.b] for fv in fvs], dtype=float),
        INPUT_MCC: np.array([fv.mcc for fv in fvs], dtype=float).reshape(len(fvs), 5),
        INPUT_MTR: np.array([[fv.mtr] for fv in fvs], dtype=float),
    }


def predict_proba(net: NetworkGraph, fvs: Sequence[FeatureVector]) -> np.ndarray:
    """p(malignant) per slide."""
    return forward(net, features_to_inputs(fvs))[:, MALIGNANT]


def predict_slide(net: NetworkGraph, fv: FeatureVector) -> tuple[int, float]:
    """Label and p(malignant); a tie at 0.5 resolves to malignant."""
    p = float(predict_proba(net, [fv])[0])
    return (MALIGNANT if p >= 0.5 else NORMAL), p


def train_widedeep(fvs: Sequence[FeatureVector], labels: Sequence[int],
                   config: TrainConfig, hidden: int = HIDDEN_WIDTH) -> NetworkGraph:
    labels = np.asarray(labels, dtype=int)
    if labels.size < 2 or len({NORMAL, MALIGNANT} & set(labels.tolist())) < 2:
        raise SingleClassDataset("training requires examples of both classes")
    net = build_widedeep(config.seed, hidden)
    net, _ = train(net, features_to_inputs(fvs), labels, config)
    return net


class WideDeepClassifier:
    """fit/predict_proba adapter for cross-validation and comparison runs."""

    def __init__(self, config: TrainConfig, hidden: int = HIDDEN_WIDTH):
        self.config = config
        self.hidden = hidden
        self.net: NetworkGraph | None = None

    def fit(self, fvs: Sequence[FeatureVector], labels: Sequence[int], seed: int):
        self.net = train_widedeep(fvs, labels, replace(self.config, seed=seed),
                                  self.hidden)
        return self

    def predict_proba(self, fvs: Sequence[FeatureVector]) -> np.ndarray:
        if self.net is None:
            raise RuntimeError("classifier not fitted")
        return predict_proba(self.net, fvs)
