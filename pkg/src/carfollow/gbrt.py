"""Gradient-boosted regression trees for squared-error loss.

Training is the classic stage-wise loop: start from the constant mean,
fit a small tree to the current residuals, scale it by the exact
one-dimensional line-search minimizer, shrink by the learning rate, and
add it to the ensemble.  With squared error the line search is a closed
form, so the whole procedure is deterministic; there is no subsampling
and no randomness anywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import InstanceSet
from .errors import EmptyTraining, LengthMismatch
from .tree import RegressionTree, fit_tree


@dataclass(frozen=True)
class GbrtConfig:
    """Ensemble size, shrinkage, and tree-size regularizers."""

    n_learners: int = 8
    learning_rate: float = 0.1
    max_splits: int = 3
    min_leaf: int = 5

    def __post_init__(self):
        if self.n_learners < 0:
            raise ValueError("n_learners must be >= 0")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_splits < 0:
            raise ValueError("max_splits must be >= 0")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")

    def to_dict(self) -> dict:
        return {
            "n_learners": self.n_learners,
            "learning_rate": self.learning_rate,
            "max_splits": self.max_splits,
            "min_leaf": self.min_leaf,
        }

    @staticmethod
    def from_dict(d: dict) -> "GbrtConfig":
        return GbrtConfig(
            n_learners=int(d["n_learners"]),
            learning_rate=float(d["learning_rate"]),
            max_splits=int(d["max_splits"]),
            min_leaf=int(d["min_leaf"]),
        )


@dataclass(frozen=True)
class Stage:
    tree: RegressionTree
    beta: float


@dataclass(frozen=True)
class GbrtModel:
    """Constant base value plus an ordered list of weighted trees.

    ``training_loss_curve[m]`` is the training MSE after ``m`` stages, so
    entry 0 belongs to the constant model and the curve has ``n_learners + 1``
    entries.
    """

    f0: float
    stages: tuple[Stage, ...]
    config: GbrtConfig
    training_loss_curve: tuple[float, ...] = field(default_factory=tuple)

    def predict(self, x) -> float | np.ndarray:
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        out = np.full(len(X), self.f0)
        nu = self.config.learning_rate
        for stage in self.stages:
            out += nu * stage.beta * stage.tree.predict(X)
        return float(out[0]) if single else out

    def staged_predict(self, x) -> np.ndarray:
        """Partial-sum predictions after 0, 1, ..., M stages.

        For a single 3-vector the result has shape ``(M + 1,)``; for an
        ``(n, 3)`` batch it is ``(M + 1, n)``.
        """
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        nu = self.config.learning_rate
        acc = np.full(len(X), self.f0)
        out = np.empty((len(self.stages) + 1, len(X)))
        out[0] = acc
        for m, stage in enumerate(self.stages, start=1):
            acc = acc + nu * stage.beta * stage.tree.predict(X)
            out[m] = acc
        return out[:, 0] if single else out

    def truncate(self, n_stages: int) -> "GbrtModel":
        """Model containing only the first ``n_stages`` stages."""
        if not (0 <= n_stages <= len(self.stages)):
            raise ValueError("n_stages out of range")
        cfg = GbrtConfig(
            n_learners=n_stages,
            learning_rate=self.config.learning_rate,
            max_splits=self.config.max_splits,
            min_leaf=self.config.min_leaf,
        )
        return GbrtModel(
            f0=self.f0,
            stages=self.stages[:n_stages],
            config=cfg,
            training_loss_curve=self.training_loss_curve[:n_stages + 1],
        )

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "f0": self.f0,
            "stages": [
                {"beta": s.beta, "tree": s.tree.to_dict()} for s in self.stages
            ],
            "training_loss_curve": list(self.training_loss_curve),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "GbrtModel":
        cfg = GbrtConfig.from_dict(d["config"])
        stages = tuple(
            Stage(
                tree=RegressionTree.from_dict(
                    s["tree"], max_splits=cfg.max_splits, min_leaf=cfg.min_leaf
                ),
                beta=float(s["beta"]),
            )
            for s in d["stages"]
        )
        return GbrtModel(
            f0=float(d["f0"]),
            stages=stages,
            config=cfg,
            training_loss_curve=tuple(float(v) for v in d["training_loss_curve"]),
        )

    @staticmethod
    def from_json(text: str) -> "GbrtModel":
        return GbrtModel.from_dict(json.loads(text))


def line_search_beta(residuals, tree_preds) -> float:
    """Exact minimizer of the squared error along the tree's direction.

    Minimizing ``sum((r_i - beta * h_i)^2)`` over ``beta`` gives
    ``sum(r_i h_i) / sum(h_i^2)``; a zero direction returns 0 so that an
    all-zero tree contributes a harmless no-op stage.
    """
    r = np.asarray(residuals, dtype=float)
    h = np.asarray(tree_preds, dtype=float)
    if len(r) != len(h):
        raise LengthMismatch(
            f"residuals ({len(r)}) and tree predictions ({len(h)}) differ"
        )
    denom = float(np.dot(h, h))
    if denom == 0.0:
        return 0.0
    return float(np.dot(r, h)) / denom


def fit_gbrt(train: InstanceSet | tuple, config: GbrtConfig | None = None) -> GbrtModel:
    """Fit the boosted ensemble on a training set.

    ``train`` is either an :class:`InstanceSet` or a ``(features, responses)``
    pair of arrays.  Returns the fitted model with its training-MSE curve
    (entry 0 is the constant baseline, entry m the MSE after stage m).
    """
    if config is None:
        config = GbrtConfig()
    if isinstance(train, InstanceSet):
        X = np.asarray(train.features, dtype=float)
        y = np.asarray(train.responses, dtype=float)
    else:
        X = np.asarray(train[0], dtype=float)
        y = np.asarray(train[1], dtype=float)
    if len(y) == 0:
        raise EmptyTraining("cannot fit on an empty training set")

    f0 = float(np.mean(y))
    F = np.full(len(y), f0)
    curve = [float(np.mean((y - F) ** 2))]
    nu = config.learning_rate
    stages = []
    for _ in range(config.n_learners):
        residuals = y - F
        tree = fit_tree(X, residuals, config.max_splits, config.min_leaf)
        h = tree.predict(X)
        beta = line_search_beta(residuals, h)
        F = F + nu * beta * h
        stages.append(Stage(tree=tree, beta=beta))
        curve.append(float(np.mean((y - F) ** 2)))
    return GbrtModel(
        f0=f0,
        stages=tuple(stages),
        config=config,
        training_loss_curve=tuple(curve),
    )


def predict(model: GbrtModel, x) -> float | np.ndarray:
    """Ensemble prediction: base value plus shrunk weighted tree outputs."""
    return model.predict(x)


def staged_predict(model: GbrtModel, x) -> np.ndarray:
    """Predictions of every prefix of the ensemble; see GbrtModel.staged_predict."""
    return model.staged_predict(x)
