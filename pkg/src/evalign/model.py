"""Estimator-style wrapper around training and zero-shot prediction.

``EventAlignmentModel`` follows the scikit-learn contract: constructor args
are stored verbatim, ``fit`` learns the projection on a record corpus and
stores learned state under trailing-underscore attributes, ``get_params`` /
``set_params`` / ``clone`` work as usual. X is always a sequence of
``CorpusRecord``; there is no y (the records carry their own supervision).
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import DataError
from .evaluate import TypingResult, zero_shot_type
from .io import ConfusionMatrix
from .training import TrainConfig, train
from .types import CorpusRecord, Ontology

__all__ = ["EventAlignmentModel"]


class EventAlignmentModel(BaseEstimator):
    """Contrastive event-alignment model with zero-shot typing prediction."""

    def __init__(
        self,
        ontology: Ontology | None = None,
        event_confusion: ConfusionMatrix | None = None,
        argument_confusion: ConfusionMatrix | None = None,
        prompt_kind: str = "composed",
        dim: int = 16,
        base_dim: int = 64,
        gamma: float = 0.1,
        lambda1: float = 1.0,
        lambda2: float = 1.0,
        epochs: int = 50,
        learning_rate: float = 0.05,
        momentum: float = 0.0,
        seed: int = 0,
        graph_loss_on: str = "positive",
    ):
        self.ontology = ontology
        self.event_confusion = event_confusion
        self.argument_confusion = argument_confusion
        self.prompt_kind = prompt_kind
        self.dim = dim
        self.base_dim = base_dim
        self.gamma = gamma
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.seed = seed
        self.graph_loss_on = graph_loss_on

    def _check_is_fitted(self) -> None:
        if not hasattr(self, "provider_"):
            raise NotFittedError(
                "This EventAlignmentModel instance is not fitted yet; call fit first."
            )

    def _require_ontology(self) -> Ontology:
        if self.ontology is None:
            raise DataError("EventAlignmentModel needs an ontology")
        return self.ontology

    def fit(self, X: Sequence[CorpusRecord], y=None):
        """Train the trainable encoder on a record corpus."""
        ont = self._require_ontology()
        config = TrainConfig(
            prompt_kind=self.prompt_kind,
            gamma=self.gamma,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            seed=self.seed,
            dim=self.dim,
            base_dim=self.base_dim,
            graph_loss_on=self.graph_loss_on,
        )
        result = train(list(X), ont, self.event_confusion, self.argument_confusion, config)
        self.provider_ = result.provider
        self.history_ = result.history
        self.items_ = result.items
        return self

    def transform(self, X: Sequence[CorpusRecord]) -> np.ndarray:
        """Concatenated [sentence, image] embedding per record."""
        self._check_is_fitted()
        rows = [
            np.concatenate([self.provider_.sentence(rec), self.provider_.image(rec)])
            for rec in X
        ]
        return np.stack(rows)

    def fit_transform(self, X: Sequence[CorpusRecord], y=None) -> np.ndarray:
        return self.fit(X).transform(X)

    def predict(
        self,
        X: Sequence[CorpusRecord],
        candidate_types: Sequence[str] | None = None,
    ) -> list[str]:
        """Zero-shot event type per record (over the whole ontology by default)."""
        return [r.prediction for r in self.predict_rankings(X, candidate_types)]

    def predict_rankings(
        self,
        X: Sequence[CorpusRecord],
        candidate_types: Sequence[str] | None = None,
    ) -> list[TypingResult]:
        self._check_is_fitted()
        ont = self._require_ontology()
        candidates = tuple(candidate_types) if candidate_types else ont.type_ids
        return [zero_shot_type(rec, candidates, self.provider_, ont) for rec in X]

    def score(self, X: Sequence[CorpusRecord], y=None) -> float:
        """Typing accuracy against each record's first annotated event."""
        self._check_is_fitted()
        gold = []
        for rec in X:
            if not rec.events:
                raise DataError(f"record {rec.record_id!r} has no events to score against")
            gold.append(rec.events[0].event_type)
        preds = self.predict(X)
        return float(np.mean([p == g for p, g in zip(preds, gold)]))
