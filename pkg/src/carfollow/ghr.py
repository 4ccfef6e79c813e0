"""Stimulus-response car-following model and its box-constrained calibration.

The model predicts the follower's acceleration as
``alpha * v^m * delta_v / delta_x^l``: the relative speed is the stimulus
and the speed/gap power term is the driver's sensitivity.  Calibration
minimizes the sum of squared prediction errors over a training set,
subject to a box on ``(alpha, m, l)``, via multi-start derivative-free
descent: a 7x7x7 grid of starts, each refined by Nelder-Mead with every
vertex projected onto the box.

All 343 simplexes are iterated in lockstep so each descent step costs one
vectorized objective evaluation over the whole batch; the search path uses
a log-space form of the objective (numerically equivalent), while reported
objectives always come from the plain power form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import InstanceSet
from .errors import EmptyTraining

GAP_FLOOR_M = 0.1
DEFAULT_LB = (0.0, 0.0, 0.0)
DEFAULT_UB = (3.0, 3.0, 3.0)
_N_GRID_PER_DIM = 7
_F_SPREAD_TOL = 1e-10
_MAX_EVALS_PER_START = 2000


@dataclass(frozen=True)
class OptimizerReport:
    n_starts: int
    n_evals: int
    converged: bool
    flat_landscape: bool = False
    n_clamped_gaps: int = 0

    def to_dict(self) -> dict:
        return {
            "n_starts": self.n_starts,
            "n_evals": self.n_evals,
            "converged": self.converged,
            "flat_landscape": self.flat_landscape,
            "n_clamped_gaps": self.n_clamped_gaps,
        }


@dataclass(frozen=True)
class GhrParameters:
    """Calibrated sensitivity gain and exponents, with fit diagnostics."""

    alpha: float
    m_exp: float
    l_exp: float
    tau_s: float | None = None
    objective: float = float("nan")
    optimizer_report: OptimizerReport | None = None

    def __post_init__(self):
        for name in ("alpha", "m_exp", "l_exp"):
            v = getattr(self, name)
            if not (0.0 <= v <= 3.0):
                raise ValueError(f"{name}={v} outside the [0, 3] box")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "m": self.m_exp,
            "l": self.l_exp,
            "tau_s": self.tau_s,
            "objective": self.objective,
            "optimizer_report": (
                self.optimizer_report.to_dict() if self.optimizer_report else None
            ),
        }

    @staticmethod
    def from_dict(d: dict) -> "GhrParameters":
        rep = d.get("optimizer_report")
        return GhrParameters(
            alpha=float(d["alpha"]),
            m_exp=float(d["m"]),
            l_exp=float(d["l"]),
            tau_s=None if d.get("tau_s") is None else float(d["tau_s"]),
            objective=float(d["objective"]),
            optimizer_report=None if rep is None else OptimizerReport(
                n_starts=int(rep["n_starts"]),
                n_evals=int(rep["n_evals"]),
                converged=bool(rep["converged"]),
                flat_landscape=bool(rep.get("flat_landscape", False)),
                n_clamped_gaps=int(rep.get("n_clamped_gaps", 0)),
            ),
        )


def ghr_predict(params: GhrParameters, v_resp, delta_v, delta_x):
    """Predicted acceleration ``alpha * v^m * delta_v / delta_x^l``.

    Accepts scalars or arrays.  Gaps below 0.1 m are clamped to 0.1 m and
    ``0^0`` is taken as 1 (a standing follower with m = 0 still responds to
    the stimulus).  Speeds must be nonnegative.
    """
    v = np.asarray(v_resp, dtype=float)
    dv = np.asarray(delta_v, dtype=float)
    dx = np.maximum(np.asarray(delta_x, dtype=float), GAP_FLOOR_M)
    pred = params.alpha * np.power(v, params.m_exp) * dv / np.power(dx, params.l_exp)
    return float(pred) if pred.ndim == 0 else pred


def ghr_objective(alpha: float, m_exp: float, l_exp: float,
                  train: InstanceSet) -> float:
    """Sum of squared errors of the model on a training set."""
    if len(train) == 0:
        raise EmptyTraining("objective needs a non-empty training set")
    v = train.features[:, 0]
    dv = train.features[:, 1]
    dx = np.maximum(train.features[:, 2], GAP_FLOOR_M)
    pred = alpha * np.power(v, m_exp) * dv / np.power(dx, l_exp)
    diff = pred - train.responses
    return float(np.sum(diff * diff))


class _LogSpaceObjective:
    """Batch objective over parameter triples via log-space evaluation.

    ``alpha * v^m / dx^l`` becomes ``alpha * exp(m*log(v) - l*log(dx))``,
    which turns the per-triple cost into one broadcasted multiply-add plus
    one ``exp`` over the batch.  Zero speeds are special-cased so the
    ``0^0 = 1`` convention survives the log transform.
    """

    def __init__(self, v: np.ndarray, dv: np.ndarray, dx: np.ndarray,
                 acc: np.ndarray):
        dxc = np.maximum(dx, GAP_FLOOR_M)
        with np.errstate(divide="ignore"):
            log_v = np.log(v)
        # (2, n) design so the exponent is a single small matmul per batch
        self.design = np.ascontiguousarray(np.vstack([log_v, -np.log(dxc)]))
        self.v_zero = v == 0.0
        self.any_v_zero = bool(np.any(self.v_zero))
        self.dv = np.ascontiguousarray(dv)
        self.acc = np.ascontiguousarray(acc)

    def __call__(self, params: np.ndarray) -> np.ndarray:
        P = np.atleast_2d(params)
        E = P[:, 1:3] @ self.design
        if self.any_v_zero:
            E[:, self.v_zero] = np.where(P[:, 1:2] == 0.0, 0.0, -np.inf)
        np.exp(E, out=E)
        E *= self.dv[None, :]
        E *= P[:, 0:1]
        E -= self.acc[None, :]
        return np.einsum("ij,ij->i", E, E)


def _initial_simplexes(starts: np.ndarray, lb: np.ndarray,
                       ub: np.ndarray) -> np.ndarray:
    """One simplex per start: the start plus an offset vertex per dimension."""
    n, dim = starts.shape
    step = 0.05 * (ub - lb)
    X = np.repeat(starts[:, None, :], dim + 1, axis=1)
    for i in range(dim):
        moved = X[:, i + 1, i] + step[i]
        X[:, i + 1, i] = np.where(moved > ub[i], X[:, i + 1, i] - step[i], moved)
    return X


def _batched_nelder_mead(f_batch, starts: np.ndarray, lb: np.ndarray,
                         ub: np.ndarray, f_tol: float = _F_SPREAD_TOL,
                         max_evals: int = _MAX_EVALS_PER_START):
    """Run one projected Nelder-Mead per start, all in lockstep.

    Every simplex performs the classic reflect/expand/contract/shrink step
    each iteration; infeasible trial points are projected (clipped) onto
    the box.  A simplex freezes once the spread of its vertex objectives
    drops below ``f_tol``, its evaluation budget is spent, or an iteration
    leaves it bit-for-bit unchanged (the update is deterministic, so a
    fixed point can never make further progress and burning the remaining
    budget on it would return the identical vertex).

    Returns ``(best_points, best_values, evals, converged)`` arrays.
    """
    B, dim = starts.shape
    X = _initial_simplexes(starts, lb, ub)
    F = f_batch(X.reshape(-1, dim)).reshape(B, dim + 1)
    evals = np.full(B, dim + 1)
    stalled = np.zeros(B, dtype=bool)
    converged = (F.max(axis=1) - F.min(axis=1)) < f_tol
    # worst case one iteration spends 1 + max(1, dim) extra evaluations
    active = ~converged & ~stalled & (evals + (2 + dim) <= max_evals)

    while np.any(active):
        idx = np.nonzero(active)[0]
        order = np.argsort(F[idx], axis=1, kind="stable")
        Xs = np.take_along_axis(X[idx], order[:, :, None], axis=1)
        Fs = np.take_along_axis(F[idx], order, axis=1)
        X_before = Xs.copy()
        F_before = Fs.copy()
        centroid = Xs[:, :dim, :].mean(axis=1)
        worst = Xs[:, dim, :]
        f_best = Fs[:, 0]
        f_second = Fs[:, dim - 1]
        f_worst = Fs[:, dim]

        xr = np.clip(centroid + (centroid - worst), lb, ub)
        fr = f_batch(xr)
        evals[idx] += 1

        expand = fr < f_best
        reflect = ~expand & (fr < f_second)
        contract = ~expand & ~reflect

        # expansion and contraction trials are disjoint rows: one batched call
        second = expand | contract
        if np.any(second):
            s = np.nonzero(second)[0]
            outside = fr[s] < f_worst[s]
            trial = np.where(
                expand[s, None],
                centroid[s] + 2.0 * (centroid[s] - worst[s]),
                np.where(
                    outside[:, None],
                    centroid[s] + 0.5 * (xr[s] - centroid[s]),
                    centroid[s] - 0.5 * (centroid[s] - worst[s]),
                ),
            )
            trial = np.clip(trial, lb, ub)
            f_trial = f_batch(trial)
            evals[idx[s]] += 1

            exp_rows = expand[s]
            if np.any(exp_rows):
                e = s[exp_rows]
                better = f_trial[exp_rows] < fr[e]
                Xs[e, dim, :] = np.where(better[:, None], trial[exp_rows], xr[e])
                Fs[e, dim] = np.where(better, f_trial[exp_rows], fr[e])
            con_rows = contract[s]
            if np.any(con_rows):
                c = s[con_rows]
                fc = f_trial[con_rows]
                accept = fc < np.where(outside[con_rows], fr[c], f_worst[c])
                acc_rows = c[accept]
                Xs[acc_rows, dim, :] = trial[con_rows][accept]
                Fs[acc_rows, dim] = fc[accept]
                shrink_rows = c[~accept]
                if len(shrink_rows):
                    best_pts = Xs[shrink_rows, 0:1, :]
                    Xs[shrink_rows, 1:, :] = best_pts + 0.5 * (
                        Xs[shrink_rows, 1:, :] - best_pts
                    )
                    fv = f_batch(Xs[shrink_rows, 1:, :].reshape(-1, dim))
                    Fs[shrink_rows, 1:] = fv.reshape(len(shrink_rows), dim)
                    evals[idx[shrink_rows]] += dim
        if np.any(reflect):
            r = np.nonzero(reflect)[0]
            Xs[r, dim, :] = xr[r]
            Fs[r, dim] = fr[r]

        unchanged = ~(
            np.any(Xs != X_before, axis=(1, 2)) | np.any(Fs != F_before, axis=1)
        )
        stalled[idx[unchanged]] = True
        X[idx] = Xs
        F[idx] = Fs
        converged = (F.max(axis=1) - F.min(axis=1)) < f_tol
        active = ~converged & ~stalled & (evals + (2 + dim) <= max_evals)

    best_vertex = np.argmin(F, axis=1)
    best_points = X[np.arange(B), best_vertex, :]
    best_values = F[np.arange(B), best_vertex]
    return best_points, best_values, evals, converged


def start_grid(lb, ub, n_per_dim: int = _N_GRID_PER_DIM) -> np.ndarray:
    """Uniform grid of starting triples covering the box, one row per start."""
    axes = [np.linspace(lb[i], ub[i], n_per_dim) for i in range(3)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def calibrate_ghr(train: InstanceSet, lb=DEFAULT_LB, ub=DEFAULT_UB) -> GhrParameters:
    """Best box-constrained least-squares fit of ``(alpha, m, l)``.

    Every start on the 7x7x7 grid is refined; the returned parameters are
    the best candidate among all refined points and all raw grid starts, so
    the reported objective never exceeds the best coarse-grid objective.
    Ties go to the lexicographically smallest triple.

    A series with no relative-speed signal (``delta_v`` identically zero)
    has a perfectly flat objective; the lower bound is returned with
    ``converged=False`` and the flat-landscape flag set.
    """
    if len(train) == 0:
        raise EmptyTraining("cannot calibrate on an empty training set")
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if lb.shape != (3,) or ub.shape != (3,):
        raise ValueError("lb and ub must be 3-vectors")
    if np.any(lb > ub):
        raise ValueError("lb must not exceed ub componentwise")

    v = train.features[:, 0]
    dv = train.features[:, 1]
    dx = train.features[:, 2]
    acc = train.responses
    n_clamped = int(np.sum(dx < GAP_FLOOR_M))
    tau = train.tau_s

    if np.all(dv == 0.0):
        params = GhrParameters(
            alpha=float(lb[0]), m_exp=float(lb[1]), l_exp=float(lb[2]),
            tau_s=tau,
        )
        obj = ghr_objective(params.alpha, params.m_exp, params.l_exp, train)
        return GhrParameters(
            alpha=params.alpha, m_exp=params.m_exp, l_exp=params.l_exp,
            tau_s=tau, objective=obj,
            optimizer_report=OptimizerReport(
                n_starts=0, n_evals=0, converged=False,
                flat_landscape=True, n_clamped_gaps=n_clamped,
            ),
        )

    starts = start_grid(lb, ub)
    f_batch = _LogSpaceObjective(v, dv, dx, acc)
    refined, _, evals, conv = _batched_nelder_mead(f_batch, starts, lb, ub)

    # Final selection under the reported (power-form) objective, over both
    # refined points and raw starts: grid dominance then holds exactly.
    pool = np.vstack([refined, starts])
    pool_obj = np.array([
        ghr_objective(p[0], p[1], p[2], train) for p in pool
    ])
    order = np.lexsort((pool[:, 2], pool[:, 1], pool[:, 0], pool_obj))
    winner = order[0]
    alpha, m_exp, l_exp = (float(x) for x in pool[winner])
    return GhrParameters(
        alpha=alpha, m_exp=m_exp, l_exp=l_exp, tau_s=tau,
        objective=float(pool_obj[winner]),
        optimizer_report=OptimizerReport(
            n_starts=len(starts),
            n_evals=int(np.sum(evals)),
            converged=bool(conv[winner % len(starts)]),
            flat_landscape=False,
            n_clamped_gaps=n_clamped,
        ),
    )
