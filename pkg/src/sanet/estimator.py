"""Scikit-learn style estimator wrapping the adversarial trainer.

``SanClassifier`` accepts either a sequence of ``NewsSample`` objects
(labels and optional propagation trees carried inside) or a plain
``(X, y)`` pair of content vectors and labels, so it drops into sklearn
pipelines, grid search, and cloning. Structure-adversarial alignment is
only meaningful when training samples carry propagation trees; on plain
arrays the discriminator is disabled and fitting degenerates to a
content-only classifier.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import LABELS, DatasetSplit, NewsSample, SplitInfo
from .errors import DataError
from .training import TrainingConfig, predict, train_san

_ENCODERS_DOC = ("mlp", "gcn", "gat", "bigcn")


def _coerce_samples(X, y=None) -> list[NewsSample]:
    X = list(X)
    if X and isinstance(X[0], NewsSample):
        if y is not None:
            raise DataError("pass labels inside NewsSample objects, not as y")
        return X
    matrix = np.asarray(X, dtype=np.float64)
    if matrix.ndim != 2:
        raise DataError(f"array input must be 2-dimensional, got shape {matrix.shape}")
    if y is None:
        raise DataError("array input needs labels y")
    labels = [LABELS[int(v)] if not isinstance(v, str) else v for v in np.asarray(y).tolist()]
    if len(labels) != matrix.shape[0]:
        raise DataError(f"X has {matrix.shape[0]} rows but y has {len(labels)} entries")
    return [
        NewsSample(id=f"row{i}", x=matrix[i], label=lbl)
        for i, lbl in enumerate(labels)
    ]


class SanClassifier(BaseEstimator, ClassifierMixin, TransformerMixin):
    """Fake news classifier that stays calibrated when propagation is missing.

    Parameters mirror the training configuration: ``encoder`` is one of
    ``mlp``, ``gcn``, ``gat``, ``bigcn``; ``trade_off`` weights the
    propagation-stripped training copy; ``adversarial`` toggles the
    structure discriminator behind the gradient reversal.
    """

    def __init__(
        self,
        encoder: str = "gcn",
        hidden_dim: int = 64,
        learning_rate: float = 0.001,
        trade_off: float = 1.0,
        epochs: int = 200,
        batch_size: int = 16,
        adversarial: bool = True,
        grl_coeff: float = 1.0,
        validation_fraction: float = 0.1,
        patience: int = 30,
        seed: int = 0,
    ):
        self.encoder = encoder
        self.hidden_dim = hidden_dim
        self.learning_rate = learning_rate
        self.trade_off = trade_off
        self.epochs = epochs
        self.batch_size = batch_size
        self.adversarial = adversarial
        self.grl_coeff = grl_coeff
        self.validation_fraction = validation_fraction
        self.patience = patience
        self.seed = seed

    def _config(self) -> TrainingConfig:
        return TrainingConfig(
            encoder=self.encoder,
            hidden_dim=self.hidden_dim,
            learning_rate=self.learning_rate,
            trade_off=self.trade_off,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            adversarial=self.adversarial,
            grl_coeff=self.grl_coeff,
            validation_fraction=self.validation_fraction,
            patience=self.patience,
        )

    def fit(self, X, y=None):
        samples = _coerce_samples(X, y)
        config = self._config()
        if not any(s.tree is not None for s in samples):
            # without propagation the structure labels are vacuous and the
            # reversed gradient is an unbounded ascent direction; fall back
            # to plain content training
            config = dataclasses.replace(config, adversarial=False)
        split = DatasetSplit(train=samples, test=[], provenance=SplitInfo(kind="fit"))
        self.params_, self.trace_ = train_san(split, config)
        self.classes_ = np.array(LABELS)
        self.n_features_in_ = self.params_.d_in
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        res = predict(self.params_, _coerce_samples(X, self._dummy_labels(X)))
        return np.array(res.labels)

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        res = predict(self.params_, _coerce_samples(X, self._dummy_labels(X)))
        return res.probabilities

    def transform(self, X):
        """Hidden representations, one row per input sample."""
        check_is_fitted(self, "params_")
        res = predict(self.params_, _coerce_samples(X, self._dummy_labels(X)))
        return res.hidden

    def score(self, X, y=None):
        samples = _coerce_samples(X, y)
        truth = np.array([s.label for s in samples])
        return float(np.mean(self.predict(samples) == truth))

    @staticmethod
    def _dummy_labels(X):
        X = list(X)
        if X and isinstance(X[0], NewsSample):
            return None
        return np.zeros(len(X), dtype=int)
