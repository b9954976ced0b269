"""Estimator-style wrappers over the training and preprocessing loops.

These mirror the scikit-learn parameter protocol (the constructor
stores hyperparameters verbatim, ``get_params``/``set_params`` expose
them, ``fit`` returns ``self``, learned state gets a trailing
underscore) so the models drop into generic sweep or clone tooling.
scikit-learn itself is not imported; the protocol is just a convention.
"""

from __future__ import annotations

import inspect

import numpy as np
import torch

from .matchmismatch import (
    TrainConfig,
    apply_boundary_mode,
    build_model,
    build_pairs,
    evaluate,
    make_batch,
    train_epochs,
)
from .pipeline import PreprocConfig, preprocess_trial

_EVAL_PAIR_SEED = 2**32 - 1


class _ParamMixin:
    @classmethod
    def _param_names(cls):
        init = inspect.signature(cls.__init__)
        return sorted(name for name in init.parameters if name != "self")

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"unknown parameter {name!r} for {type(self).__name__}; "
                    f"valid parameters: {', '.join(sorted(valid))}"
                )
            setattr(self, name, value)
        return self


class MatchMismatchClassifier(_ParamMixin):
    """Sentence-level match-mismatch model behind a fit/predict surface.

    The samples are sentence records; every derived (matched,
    mismatched) stimulus pair is one classification trial. ``predict``
    returns 1 where the fitted model ranks the matched stimulus above
    the mismatched one, so accuracy against an all-ones target is the
    match-mismatch accuracy. Pair derivation is seeded by ``seed``,
    making every method deterministic for fixed inputs.
    """

    def __init__(self, *, model: str = "proposed", epochs: int = 20,
                 batch_size: int = 32, learning_rate: float = 1e-3,
                 weight_decay: float = 1e-4, similarity: str = "manhattan",
                 strategy: str = "random_same_trial",
                 boundary_mode: str = "annotated", boundary_param=None,
                 seed: int = 0, encoder: dict | None = None):
        self.model = model
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.similarity = similarity
        self.strategy = strategy
        self.boundary_mode = boundary_mode
        self.boundary_param = boundary_param
        self.seed = seed
        self.encoder = encoder

    def _config(self) -> TrainConfig:
        return TrainConfig(**self.get_params()).validate()

    def _prepare(self, records, config: TrainConfig):
        prepared = apply_boundary_mode(records, config.boundary_mode,
                                       config.boundary_param, seed=config.seed)
        pairs = build_pairs(prepared, config.strategy,
                            seed=[config.seed, _EVAL_PAIR_SEED])
        return prepared, pairs

    def fit(self, records, eval_records=None) -> "MatchMismatchClassifier":
        """Train on `records`; optionally track accuracy on `eval_records`.

        Fills ``history_`` with per-epoch mean training loss and, when
        `eval_records` is given, per-epoch evaluation accuracy.
        """
        config = self._config()
        train_records = apply_boundary_mode(records, config.boundary_mode,
                                            config.boundary_param,
                                            seed=config.seed)
        eval_prepared = eval_pairs = None
        if eval_records is not None:
            eval_prepared, eval_pairs = self._prepare(eval_records, config)

        torch.manual_seed(config.seed)
        self.model_ = build_model(train_records, config)
        self.history_ = {"loss": [], "accuracy": []}

        def on_epoch(epoch, n_pairs, mean_loss):
            self.history_["loss"].append(mean_loss)
            if eval_pairs is not None:
                accuracy, _ = evaluate(self.model_, eval_prepared, eval_pairs,
                                       batch_size=config.batch_size)
                self.history_["accuracy"].append(accuracy)

        train_epochs(self.model_, train_records, config, on_epoch=on_epoch)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise ValueError(f"{type(self).__name__} has not been fitted yet")

    def decision_function(self, records) -> np.ndarray:
        """Score margin d(matched) - d(mismatched) per derived pair."""
        self._check_fitted()
        config = self._config()
        prepared, pairs = self._prepare(records, config)
        self.model_.eval()
        margins = []
        with torch.no_grad():
            for start in range(0, len(pairs), config.batch_size):
                chunk = range(start, min(start + config.batch_size, len(pairs)))
                response, matched, mismatched = make_batch(prepared, pairs,
                                                           chunk)
                d_plus, d_minus = self.model_.score_pairs(response, matched,
                                                          mismatched)
                margins.extend((d_plus - d_minus).tolist())
        return np.asarray(margins, dtype=np.float64)

    def predict(self, records) -> np.ndarray:
        """1 where the matched stimulus outranks the mismatched one."""
        return (self.decision_function(records) > 0).astype(np.int64)

    def score(self, records) -> float:
        """Pair accuracy in percent on the records' derived pairs."""
        self._check_fitted()
        config = self._config()
        prepared, pairs = self._prepare(records, config)
        accuracy, _ = evaluate(self.model_, prepared, pairs,
                               batch_size=config.batch_size)
        return accuracy


class SentencePreprocessor(_ParamMixin):
    """Stateless transformer from raw trials to sentence records.

    ``transform`` returns the flat record list; the per-trial reports
    from the latest call are kept on ``reports_``.
    """

    def __init__(self, *, config: PreprocConfig | None = None,
                 neighbor_map: dict | None = None):
        self.config = config
        self.neighbor_map = neighbor_map

    def fit(self, trials=None) -> "SentencePreprocessor":
        (self.config or PreprocConfig()).validate()
        return self

    def transform(self, trials) -> list:
        records = []
        self.reports_ = []
        for trial in trials:
            trial_records, report = preprocess_trial(trial, self.config,
                                                     self.neighbor_map)
            records.extend(trial_records)
            self.reports_.append(report)
        return records

    def fit_transform(self, trials) -> list:
        return self.fit(trials).transform(trials)
