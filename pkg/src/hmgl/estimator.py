"""Scikit-learn style facade over the full train-and-match pipeline.

`MultiGraphMatcher` behaves like any other estimator: construct with
hyperparameters, `fit` on a list of `GroupSample`s, then `transform`
groups into member feature matrices or `rank`/`predict` queries against
a gallery. `get_params`/`set_params`/`clone` work as usual, so the model
drops into pipelines and parameter searches.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .domain import Config, GroupSample, MatchScore
from .matching import match_all, match_query
from .trainer import train
from .validation import check_groups


class MultiGraphMatcher(BaseEstimator):
    """Group re-identification by multi-relational graph learning.

    Parameters mirror the pipeline defaults; the embedding dimension and
    the number of member classes are picked up from the training data.
    """

    def __init__(
        self,
        out_dim: int = 32,
        num_layers: int = 2,
        max_members: int = 6,
        tau: float = 0.0,
        margin: float = 0.3,
        delta: float = 0.2,
        alpha: float = 0.6,
        beta: float = 0.3,
        gamma: float = 0.1,
        clusters: int = 3,
        cluster_mode: str = "fixed",
        lr: float = 0.0003,
        epochs: int = 200,
        batch_size: int = 16,
        momentum: float = 0.0,
        seed: int = 0,
    ):
        self.out_dim = out_dim
        self.num_layers = num_layers
        self.max_members = max_members
        self.tau = tau
        self.margin = margin
        self.delta = delta
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.clusters = clusters
        self.cluster_mode = cluster_mode
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.momentum = momentum
        self.seed = seed

    def _build_config(self) -> Config:
        return Config(
            out_dim=self.out_dim,
            num_layers=self.num_layers,
            max_members=self.max_members,
            tau=self.tau,
            margin=self.margin,
            delta=self.delta,
            alpha=self.alpha,
            beta=self.beta,
            gamma=self.gamma,
            clusters=self.clusters,
            cluster_mode=self.cluster_mode,
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            momentum=self.momentum,
            seed=self.seed,
        )

    def fit(self, X: list[GroupSample], y=None) -> "MultiGraphMatcher":
        """Train the graph network on labeled group samples."""
        check_groups(X, self.max_members)
        params, log = train(X, self._build_config())
        self.params_ = params
        self.loss_log_ = log
        self.config_ = self._resolved_config(X)
        return self

    def _resolved_config(self, X: list[GroupSample]) -> Config:
        from .trainer import resolve_config

        return resolve_config(self._build_config(), X)

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before using this estimator")

    def transform(self, X: list[GroupSample]) -> list[np.ndarray]:
        """Output feature matrix (one row per member) for each group."""
        self._check_fitted()
        check_groups(X, self.max_members)
        from .mgnn import embed_group

        return [embed_group(sample, self.params_, self.config_)[0] for sample in X]

    def rank(
        self, X: list[GroupSample], gallery: list[GroupSample], threads: int = 1
    ) -> list[list[tuple[int, MatchScore]]]:
        """Full ranked gallery (index, MatchScore) per query."""
        self._check_fitted()
        check_groups(X, self.max_members)
        check_groups(gallery, self.max_members)
        return match_all(X, gallery, self.params_, self.config_, threads=threads)

    def match(self, query: GroupSample, gallery: list[GroupSample]):
        """Ranked matches for one query sample."""
        self._check_fitted()
        return match_query(query, gallery, self.params_, self.config_)

    def predict(self, X: list[GroupSample], gallery: list[GroupSample]) -> np.ndarray:
        """Top-ranked gallery group id per query."""
        rankings = self.rank(X, gallery)
        return np.array([gallery[ranked[0][0]].group_id for ranked in rankings])

    def score(self, X: list[GroupSample], gallery: list[GroupSample]) -> float:
        """Rank-1 rate: fraction of queries whose top match shares their group id."""
        predictions = self.predict(X, gallery)
        return float(np.mean([p == q.group_id for p, q in zip(predictions, X)]))
