"""Supervised instances from a leader-follower series, splits, and folds.

One instance pairs the follower's acceleration at the response instant
``t + tau`` with three predictors: the follower's speed at ``t + tau`` and
the relative speed and gap observed at the stimulus instant ``t``.  Splits
and cross-validation folds are strictly time-ordered blocks; nothing is
ever shuffled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSplit,
    TauNotGridAligned,
    TauTooLarge,
    TooFewInstances,
)
from .trajectory_io import FRAME_DT_S, FollowerLeaderSeries

TAU_MIN_S = 0.1
TAU_MAX_S = 3.0


def tau_to_steps(tau_s: float, dt: float = FRAME_DT_S) -> int:
    """Number of frames spanned by the reaction time; validates grid alignment."""
    steps = int(round(tau_s / dt))
    if steps < 1 or abs(tau_s - steps * dt) > 1e-9:
        raise TauNotGridAligned(
            f"tau={tau_s} s is not a positive multiple of {dt} s"
        )
    return steps


@dataclass(frozen=True)
class CarFollowingInstance:
    """One supervised sample: response acceleration plus 3 predictors."""

    response_acc_mps2: float
    features: np.ndarray  # [speed at response instant, delta_v, delta_x]
    t_index: int

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        if f.shape != (3,):
            raise ValueError("feature vector must have exactly 3 entries")
        if f[2] <= 0:
            raise ValueError("delta_x must be positive")
        f.setflags(write=False)
        object.__setattr__(self, "features", f)


@dataclass(frozen=True)
class InstanceSet:
    """Time-ordered instances stored as dense arrays.

    ``tau_s`` may be None for sets loaded from a plain instance CSV, which
    does not carry the reaction time.
    """

    responses: np.ndarray          # (n,)
    features: np.ndarray           # (n, 3) columns: v_resp, dv, dx
    t_index: np.ndarray            # (n,) strictly increasing
    tau_s: float | None
    source_name: str = ""

    def __post_init__(self):
        r = np.asarray(self.responses, dtype=float)
        f = np.asarray(self.features, dtype=float)
        t = np.asarray(self.t_index, dtype=int)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError("features must be an (n, 3) array")
        if not (len(r) == len(f) == len(t)):
            raise ValueError("responses, features and t_index must align")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("t_index must be strictly increasing")
        if len(f) and np.min(f[:, 2]) <= 0:
            raise ValueError("delta_x column must be positive")
        if self.tau_s is not None:
            steps = tau_to_steps(self.tau_s)
            if not (TAU_MIN_S - 1e-9 <= steps * FRAME_DT_S <= TAU_MAX_S + 1e-9):
                raise ValueError(
                    f"tau={self.tau_s} s outside [{TAU_MIN_S}, {TAU_MAX_S}]"
                )
        for name, arr in (("responses", r), ("features", f), ("t_index", t)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.responses)

    def __getitem__(self, i: int) -> CarFollowingInstance:
        return CarFollowingInstance(
            response_acc_mps2=float(self.responses[i]),
            features=self.features[i].copy(),
            t_index=int(self.t_index[i]),
        )

    def slice(self, start: int, stop: int) -> "InstanceSet":
        return InstanceSet(
            responses=self.responses[start:stop].copy(),
            features=self.features[start:stop].copy(),
            t_index=self.t_index[start:stop].copy(),
            tau_s=self.tau_s,
            source_name=self.source_name,
        )

    @staticmethod
    def concat(parts: list["InstanceSet"]) -> "InstanceSet":
        if not parts:
            raise ValueError("nothing to concatenate")
        return InstanceSet(
            responses=np.concatenate([p.responses for p in parts]),
            features=np.concatenate([p.features for p in parts]),
            t_index=np.concatenate([p.t_index for p in parts]),
            tau_s=parts[0].tau_s,
            source_name=parts[0].source_name,
        )


@dataclass(frozen=True)
class FoldPlan:
    """Contiguous, disjoint index ranges partitioning [0, n_train)."""

    k: int
    fold_ranges: tuple[tuple[int, int], ...]  # half-open (start, stop)

    def __post_init__(self):
        prev = 0
        for start, stop in self.fold_ranges:
            if start != prev or stop <= start:
                raise ValueError("fold ranges must tile [0, n) in order")
            prev = stop
        if len(self.fold_ranges) != self.k:
            raise ValueError("number of ranges must equal k")


def build_instances(series: FollowerLeaderSeries, tau_s: float) -> InstanceSet:
    """Lag the series into supervised instances for a fixed reaction time.

    For every stimulus frame ``t`` whose response frame ``t + tau`` is still
    inside the series, the instance is ``{acc(t+tau);
    [v(t+tau), delta_v(t), delta_x(t)]}``.  The instance count is the series
    length minus ``tau`` in frames.
    """
    steps = tau_to_steps(tau_s)
    n = len(series) - steps
    if n <= 0:
        raise TauTooLarge(
            f"tau={tau_s} s spans {steps} frames but the series has only "
            f"{len(series)}"
        )
    features = np.column_stack([
        series.follower_speed_mps[steps:],
        series.delta_v_mps[:n],
        series.delta_x_m[:n],
    ])
    return InstanceSet(
        responses=series.follower_acc_mps2[steps:].copy(),
        features=features,
        t_index=series.frame_indices()[:n],
        tau_s=steps * FRAME_DT_S,
        source_name=series.name,
    )


def split_train_test(instances: InstanceSet, train_fraction: float = 0.8
                     ) -> tuple[InstanceSet, InstanceSet]:
    """First ``floor(n * fraction)`` instances for training, rest for test."""
    if not (0.0 < train_fraction < 1.0):
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(instances)
    n_train = int(np.floor(n * train_fraction))
    if n_train == 0 or n_train == n:
        raise DegenerateSplit(
            f"splitting {n} instances at {train_fraction} leaves an empty side"
        )
    return instances.slice(0, n_train), instances.slice(n_train, n)


def contiguous_folds(train: InstanceSet, k: int = 5) -> FoldPlan:
    """Partition the training range into k consecutive blocks.

    Block sizes are ``n // k`` or ``n // k + 1`` with the remainder going to
    the earliest folds, so fold 1 is always the first block.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    n = len(train)
    if n < k:
        raise TooFewInstances(f"{n} instances cannot form {k} folds")
    base, extra = divmod(n, k)
    ranges = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        ranges.append((start, start + size))
        start += size
    return FoldPlan(k=k, fold_ranges=tuple(ranges))
