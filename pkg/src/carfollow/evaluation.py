"""Model selection and comparison: MSE, blocked CV, grids, sweeps.

Cross-validation folds are consecutive time blocks (never shuffled); each
fold serves once as the validation block with the remaining folds, in time
order, as the training data.  Grid cells and sweep rows are independent
jobs, so they can optionally run on a process pool; results are assembled
by index, which keeps every report byte-identical regardless of worker
count.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import InstanceSet, build_instances, contiguous_folds, split_train_test
from .errors import EmptyInput, LengthMismatch
from .gbrt import GbrtConfig, fit_gbrt
from .ghr import DEFAULT_LB, DEFAULT_UB, GhrParameters, calibrate_ghr, ghr_predict
from .trajectory_io import FollowerLeaderSeries

DEFAULT_NU_VALUES: tuple[float, ...] = (0.1, 0.3, 0.5, 0.8, 1.0)
DEFAULT_M_VALUES: tuple[int, ...] = tuple(range(1, 10)) + tuple(range(10, 100, 10)) \
    + tuple(range(100, 1100, 100))
DEFAULT_DEPTHS: tuple[int, ...] = tuple(range(1, 11))
DEFAULT_TAUS: tuple[float, ...] = tuple(i / 10 for i in range(1, 31))


class ModelKind(Enum):
    GBRT = "gbrt"
    GHR = "ghr"


def mse(predicted, observed) -> float:
    """Mean squared difference between two equal-length sequences."""
    p = np.asarray(predicted, dtype=float)
    o = np.asarray(observed, dtype=float)
    if len(p) != len(o):
        raise LengthMismatch(f"predicted ({len(p)}) vs observed ({len(o)})")
    if len(p) == 0:
        raise EmptyInput("mse of empty sequences is undefined")
    return float(np.mean((p - o) ** 2))


def _fold_arrays(train: InstanceSet, k: int):
    """Per-fold (train arrays, validation arrays) in fold order."""
    plan = contiguous_folds(train, k)
    out = []
    for i, (start, stop) in enumerate(plan.fold_ranges):
        keep = np.ones(len(train), dtype=bool)
        keep[start:stop] = False
        out.append((
            train.features[keep], train.responses[keep],
            train.features[start:stop], train.responses[start:stop],
        ))
    return out


def cross_validate(train: InstanceSet, config: GbrtConfig, k: int = 5) -> float:
    """Average validation MSE of the boosted model over k contiguous folds."""
    fold_mses = []
    for X_tr, y_tr, X_val, y_val in _fold_arrays(train, k):
        model = fit_gbrt((X_tr, y_tr), config)
        fold_mses.append(mse(model.predict(X_val), y_val))
    return float(np.mean(fold_mses))


def cross_validate_ghr(train: InstanceSet, k: int = 5,
                       lb=DEFAULT_LB, ub=DEFAULT_UB) -> float:
    """Average validation MSE of fold-calibrated stimulus-response models."""
    plan = contiguous_folds(train, k)
    fold_mses = []
    for start, stop in plan.fold_ranges:
        keep = np.ones(len(train), dtype=bool)
        keep[start:stop] = False
        fit_set = InstanceSet(
            responses=train.responses[keep],
            features=train.features[keep],
            t_index=train.t_index[keep],
            tau_s=train.tau_s,
            source_name=train.source_name,
        )
        params = calibrate_ghr(fit_set, lb, ub)
        val = train.features[start:stop]
        preds = ghr_predict(params, val[:, 0], val[:, 1], val[:, 2])
        fold_mses.append(mse(preds, train.responses[start:stop]))
    return float(np.mean(fold_mses))


@dataclass(frozen=True)
class GridReport:
    """Cross-validated MSE for every (learning rate, ensemble size) cell."""

    nu_values: tuple[float, ...]
    m_values: tuple[int, ...]
    avg_mse: np.ndarray  # shape (|nu|, |M|)
    best_nu: float
    best_m: int
    best_avg_mse: float

    def __post_init__(self):
        a = np.asarray(self.avg_mse, dtype=float)
        if a.shape != (len(self.nu_values), len(self.m_values)):
            raise ValueError("matrix shape must match the axes")
        a.setflags(write=False)
        object.__setattr__(self, "avg_mse", a)

    def to_csv(self) -> str:
        lines = ["nu,M,avg_mse"]
        for i, nu in enumerate(self.nu_values):
            for j, m in enumerate(self.m_values):
                lines.append(f"{nu!r},{m},{float(self.avg_mse[i, j])!r}")
        return "\n".join(lines) + "\n"


def _staged_val_mse(X_tr, y_tr, X_val, y_val, nu: float, m_values,
                    depth: int, min_leaf: int) -> np.ndarray:
    """Validation MSE at each requested ensemble size, from one fit.

    Fits once with the largest requested size and reads the smaller sizes
    off the staged partial sums; stage fitting never looks ahead, so each
    column equals an independent refit at that size.
    """
    config = GbrtConfig(
        n_learners=max(m_values), learning_rate=nu,
        max_splits=depth, min_leaf=min_leaf,
    )
    model = fit_gbrt((X_tr, y_tr), config)
    staged = model.staged_predict(X_val)  # (M+1, n_val)
    errs = np.mean((staged - y_val[None, :]) ** 2, axis=1)
    return errs[np.asarray(m_values, dtype=int)]


def _grid_task(args) -> np.ndarray:
    X_tr, y_tr, X_val, y_val, nu, m_values, depth, min_leaf = args
    return _staged_val_mse(X_tr, y_tr, X_val, y_val, nu, m_values, depth, min_leaf)


def _run_tasks(task_fn, tasks, n_jobs: int):
    if n_jobs <= 1 or len(tasks) <= 1:
        return [task_fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(task_fn, tasks))


def grid_search_nu_m(train: InstanceSet,
                     nu_values=DEFAULT_NU_VALUES,
                     m_values=DEFAULT_M_VALUES,
                     depth: int = 3, min_leaf: int = 5, k: int = 5,
                     n_jobs: int = 1) -> GridReport:
    """Blocked-CV average MSE over the (learning rate, ensemble size) grid.

    Per learning rate, each fold is fitted once at the largest ensemble
    size; all other sizes are read from staged partial sums.  The best cell
    is the matrix minimum, ties resolved toward the smaller learning rate
    and then the smaller size.
    """
    nu_values = tuple(float(v) for v in nu_values)
    m_values = tuple(int(m) for m in m_values)
    if not nu_values or not m_values:
        raise ValueError("grid axes must be nonempty")
    if list(m_values) != sorted(m_values):
        raise ValueError("m_values must be ascending")
    folds = _fold_arrays(train, k)
    tasks = [
        (X_tr, y_tr, X_val, y_val, nu, m_values, depth, min_leaf)
        for nu in nu_values
        for (X_tr, y_tr, X_val, y_val) in folds
    ]
    results = _run_tasks(_grid_task, tasks, n_jobs)
    matrix = np.empty((len(nu_values), len(m_values)))
    for i in range(len(nu_values)):
        per_fold = results[i * len(folds):(i + 1) * len(folds)]
        matrix[i] = np.mean(per_fold, axis=0)
    best_i, best_j = 0, 0
    for i in range(len(nu_values)):
        for j in range(len(m_values)):
            if matrix[i, j] < matrix[best_i, best_j]:
                best_i, best_j = i, j
    return GridReport(
        nu_values=nu_values,
        m_values=m_values,
        avg_mse=matrix,
        best_nu=nu_values[best_i],
        best_m=m_values[best_j],
        best_avg_mse=float(matrix[best_i, best_j]),
    )


@dataclass(frozen=True)
class DepthPoint:
    depth: int
    avg_mse: float


def _depth_task(args) -> float:
    train, depth, fixed_dict, k = args
    config = GbrtConfig(
        n_learners=fixed_dict["n_learners"],
        learning_rate=fixed_dict["learning_rate"],
        max_splits=depth,
        min_leaf=fixed_dict["min_leaf"],
    )
    return cross_validate(train, config, k)


def sweep_depth(train: InstanceSet, depths=DEFAULT_DEPTHS,
                fixed: GbrtConfig | None = None, k: int = 5,
                n_jobs: int = 1) -> list[DepthPoint]:
    """Blocked-CV average MSE for each tree-size budget."""
    if fixed is None:
        fixed = GbrtConfig()
    tasks = [(train, int(d), fixed.to_dict(), k) for d in depths]
    results = _run_tasks(_depth_task, tasks, n_jobs)
    return [DepthPoint(depth=int(d), avg_mse=float(r))
            for d, r in zip(depths, results)]


@dataclass(frozen=True)
class TauPoint:
    tau_s: float
    avg_mse: float
    n_instances: int


@dataclass(frozen=True)
class TauSweepReport:
    model_kind: ModelKind
    rows: tuple[TauPoint, ...]
    best_tau_s: float

    def to_csv(self) -> str:
        lines = ["tau,avg_mse,n_instances"]
        for row in self.rows:
            lines.append(f"{row.tau_s!r},{row.avg_mse!r},{row.n_instances}")
        return "\n".join(lines) + "\n"


def _tau_task(args):
    series, tau, model_kind_value, fixed_dict, lb, ub, k, train_fraction = args
    instances = build_instances(series, tau)
    train, _ = split_train_test(instances, train_fraction)
    if model_kind_value == ModelKind.GBRT.value:
        avg = cross_validate(train, GbrtConfig.from_dict(fixed_dict), k)
    else:
        avg = cross_validate_ghr(train, k, lb, ub)
    return avg, len(instances)


def sweep_tau(series: FollowerLeaderSeries, taus=DEFAULT_TAUS,
              model_kind: ModelKind = ModelKind.GBRT,
              fixed: GbrtConfig | None = None,
              lb=DEFAULT_LB, ub=DEFAULT_UB, k: int = 5,
              train_fraction: float = 0.8, n_jobs: int = 1) -> TauSweepReport:
    """Blocked-CV average MSE per reaction time, for either model family.

    Instances are rebuilt for every reaction time, so the dataset size (and
    therefore fold boundaries) legitimately differ across rows; the count is
    recorded per row.  The best row is the minimum average MSE, ties toward
    the smaller reaction time.
    """
    if fixed is None:
        fixed = GbrtConfig()
    taus = tuple(float(t) for t in taus)
    for t in taus:
        if not (0.1 - 1e-9 <= t <= 3.0 + 1e-9):
            raise ValueError(f"tau={t} outside the 0.1..3.0 s range")
    tasks = [
        (series, t, model_kind.value, fixed.to_dict(), tuple(lb), tuple(ub),
         k, train_fraction)
        for t in taus
    ]
    results = _run_tasks(_tau_task, tasks, n_jobs)
    rows = tuple(
        TauPoint(tau_s=t, avg_mse=float(avg), n_instances=int(n))
        for t, (avg, n) in zip(taus, results)
    )
    best = rows[0]
    for row in rows[1:]:
        if row.avg_mse < best.avg_mse:
            best = row
    return TauSweepReport(model_kind=model_kind, rows=rows, best_tau_s=best.tau_s)


@dataclass(frozen=True)
class ComparisonReport:
    """Held-out test MSE of both models, each at its own reaction time."""

    series_name: str
    tau_gbrt_s: float
    tau_ghr_s: float
    gbrt_config: GbrtConfig
    ghr_params: GhrParameters
    test_mse_gbrt: float
    test_mse_ghr: float
    n_test_gbrt: int
    n_test_ghr: int

    @property
    def n_test(self) -> int:
        return min(self.n_test_gbrt, self.n_test_ghr)

    def to_dict(self) -> dict:
        return {
            "series_name": self.series_name,
            "tau_gbrt_s": self.tau_gbrt_s,
            "tau_ghr_s": self.tau_ghr_s,
            "gbrt_config": self.gbrt_config.to_dict(),
            "ghr_params": self.ghr_params.to_dict(),
            "test_mse_gbrt": self.test_mse_gbrt,
            "test_mse_ghr": self.test_mse_ghr,
            "n_test": self.n_test,
            "n_test_gbrt": self.n_test_gbrt,
            "n_test_ghr": self.n_test_ghr,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "ComparisonReport":
        return ComparisonReport(
            series_name=str(d["series_name"]),
            tau_gbrt_s=float(d["tau_gbrt_s"]),
            tau_ghr_s=float(d["tau_ghr_s"]),
            gbrt_config=GbrtConfig.from_dict(d["gbrt_config"]),
            ghr_params=GhrParameters.from_dict(d["ghr_params"]),
            test_mse_gbrt=float(d["test_mse_gbrt"]),
            test_mse_ghr=float(d["test_mse_ghr"]),
            n_test_gbrt=int(d["n_test_gbrt"]),
            n_test_ghr=int(d["n_test_ghr"]),
        )

    @staticmethod
    def from_json(text: str) -> "ComparisonReport":
        return ComparisonReport.from_dict(json.loads(text))

    def to_csv_row(self) -> str:
        header = ("series,tau_gbrt,tau_ghr,test_mse_gbrt,test_mse_ghr,"
                  "n_test_gbrt,n_test_ghr")
        row = (f"{self.series_name},{self.tau_gbrt_s!r},{self.tau_ghr_s!r},"
               f"{self.test_mse_gbrt!r},{self.test_mse_ghr!r},"
               f"{self.n_test_gbrt},{self.n_test_ghr}")
        return header + "\n" + row + "\n"


def compare_models(series: FollowerLeaderSeries, gbrt_config: GbrtConfig,
                   tau_gbrt: float, tau_ghr: float,
                   train_fraction: float = 0.8,
                   lb=DEFAULT_LB, ub=DEFAULT_UB) -> ComparisonReport:
    """Train both models on their own first-80% splits, score on the rest.

    Each model gets the instance set built at its own reaction time; the
    held-out portions therefore cover the same final stretch of the series
    but may differ in length by the reaction-time difference.
    """
    gbrt_train, gbrt_test = split_train_test(
        build_instances(series, tau_gbrt), train_fraction)
    ghr_train, ghr_test = split_train_test(
        build_instances(series, tau_ghr), train_fraction)

    model = fit_gbrt(gbrt_train, gbrt_config)
    params = calibrate_ghr(ghr_train, lb, ub)

    gbrt_preds = model.predict(gbrt_test.features)
    ghr_preds = ghr_predict(
        params,
        ghr_test.features[:, 0], ghr_test.features[:, 1], ghr_test.features[:, 2],
    )
    return ComparisonReport(
        series_name=series.name,
        tau_gbrt_s=float(tau_gbrt),
        tau_ghr_s=float(tau_ghr),
        gbrt_config=gbrt_config,
        ghr_params=params,
        test_mse_gbrt=mse(gbrt_preds, gbrt_test.responses),
        test_mse_ghr=mse(ghr_preds, ghr_test.responses),
        n_test_gbrt=len(gbrt_test),
        n_test_ghr=len(ghr_test),
    )
