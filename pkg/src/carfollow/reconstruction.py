"""Trajectory cleaning: outlier removal, spline re-interpolation, filtering.

The pipeline mirrors the usual treatment of camera-derived trajectory data:
acceleration spikes beyond a physical threshold mark unreliable position
fixes, the flagged positions are re-interpolated with a natural cubic
spline through nearby reliable points, speeds and accelerations are
re-derived from the repaired positions, and a zero-phase moving average
removes the residual high-frequency error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import TooFewAnchors, TooShort, WindowTooLarge
from .trajectory_io import VehicleTrack


@dataclass(frozen=True)
class ReconstructionConfig:
    """Knobs for the cleaning pipeline.

    ``acc_threshold_mps2`` flags outliers, ``anchor_count`` is the number of
    reliable points taken on each side of an outlier run for the spline,
    ``filter_window`` is the width (odd, in samples) of the zero-phase
    moving average, and ``dt_s`` the sampling interval.
    """

    acc_threshold_mps2: float = 3.0
    anchor_count: int = 5
    filter_window: int = 5
    dt_s: float = 0.1

    def __post_init__(self):
        if self.acc_threshold_mps2 <= 0:
            raise ValueError("acc_threshold_mps2 must be positive")
        if self.anchor_count < 2:
            raise ValueError("anchor_count must be >= 2")
        if self.filter_window < 1 or self.filter_window % 2 == 0:
            raise ValueError("filter_window must be odd and >= 1")
        if self.dt_s <= 0:
            raise ValueError("dt_s must be positive")


@dataclass(frozen=True)
class ReconstructionReport:
    n_outliers: int
    max_abs_acc_before: float
    max_abs_acc_after: float


@dataclass(frozen=True)
class ReconstructedTrack:
    """Cleaned kinematics aligned frame-for-frame with the original track."""

    original: VehicleTrack
    positions_m: np.ndarray
    speeds_mps: np.ndarray
    accs_mps2: np.ndarray
    outlier_frames: frozenset[int] = field(default_factory=frozenset)
    report: ReconstructionReport | None = None

    def __post_init__(self):
        n = len(self.original)
        for name in ("positions_m", "speeds_mps", "accs_mps2"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if len(arr) != n:
                raise ValueError(f"{name} must match the original track length")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def detect_outliers(accs, threshold: float) -> set[int]:
    """Indices where the absolute acceleration exceeds ``threshold``."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    accs = np.asarray(accs, dtype=float)
    return set(int(i) for i in np.nonzero(np.abs(accs) > threshold)[0])


def _outlier_runs(outliers: set[int]) -> list[tuple[int, int]]:
    """Maximal runs of consecutive indices, as (start, end) inclusive."""
    runs = []
    for i in sorted(outliers):
        if runs and i == runs[-1][1] + 1:
            runs[-1] = (runs[-1][0], i)
        else:
            runs.append((i, i))
    return runs


def spline_interpolate(positions, times, outliers: set[int],
                       anchor_count: int = 5) -> np.ndarray:
    """Replace flagged positions by natural-cubic-spline values.

    Each maximal run of consecutive outliers is re-interpolated from a
    spline fitted through up to ``anchor_count`` non-outlier points on each
    side of the run.  Runs touching the boundary have anchors on one side
    only; the spline's end polynomial is extrapolated there.  Non-outlier
    positions pass through unchanged.
    """
    if anchor_count < 2:
        raise ValueError("anchor_count must be >= 2")
    positions = np.asarray(positions, dtype=float)
    times = np.asarray(times, dtype=float)
    if len(positions) != len(times):
        raise ValueError("positions and times must have equal length")
    out = positions.copy()
    if not outliers:
        return out
    good = np.array(sorted(set(range(len(positions))) - set(outliers)), dtype=int)
    if len(good) < 2:
        raise TooFewAnchors(
            f"need at least 2 non-outlier points, have {len(good)}"
        )
    for start, end in _outlier_runs(outliers):
        left = good[good < start][-anchor_count:]
        right = good[good > end][:anchor_count]
        anchors = np.concatenate([left, right])
        if len(anchors) < 2:
            raise TooFewAnchors(
                f"outlier run {start}..{end} has {len(anchors)} usable anchors"
            )
        spline = CubicSpline(times[anchors], positions[anchors],
                             bc_type="natural", extrapolate=True)
        idx = np.arange(start, end + 1)
        out[idx] = spline(times[idx])
    return out


def derive_kinematics(positions, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Speeds and accelerations by central differences.

    Central differences in the interior, first-order one-sided at the two
    ends; accelerations are the same stencil applied to the speeds.
    """
    positions = np.asarray(positions, dtype=float)
    if len(positions) < 3:
        raise TooShort("need at least 3 positions")
    if dt <= 0:
        raise ValueError("dt must be positive")

    def diff(y: np.ndarray) -> np.ndarray:
        d = np.empty_like(y)
        d[1:-1] = (y[2:] - y[:-2]) / (2.0 * dt)
        d[0] = (y[1] - y[0]) / dt
        d[-1] = (y[-1] - y[-2]) / dt
        return d

    speeds = diff(positions)
    accs = diff(speeds)
    return speeds, accs


def low_pass_filter(signal, window: int) -> np.ndarray:
    """Zero-phase centered moving average with shrinking boundary windows.

    Within ``(window - 1) // 2`` samples of either end the window shrinks
    symmetrically, so the output has the same length as the input and no
    phase lag anywhere.  A constant signal passes through bit-exactly.
    """
    signal = np.asarray(signal, dtype=float)
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    n = len(signal)
    if window > n:
        raise WindowTooLarge(f"window {window} exceeds signal length {n}")
    if window == 1 or n == 0:
        return signal.copy()
    # Working relative to the first sample keeps constants exact: a constant
    # input becomes all zeros, whose window means are exactly zero.
    base = signal[0]
    d = signal - base
    cs = np.concatenate([[0.0], np.cumsum(d)])
    idx = np.arange(n)
    half = np.minimum((window - 1) // 2, np.minimum(idx, n - 1 - idx))
    means = (cs[idx + half + 1] - cs[idx - half]) / (2 * half + 1)
    return base + means


def reconstruct(track: VehicleTrack, config: ReconstructionConfig | None = None) -> ReconstructedTrack:
    """Run the full cleaning pipeline on one track.

    Order: flag outliers on the recorded accelerations, re-interpolate the
    flagged positions, re-derive speeds/accelerations from the repaired
    positions, then low-pass filter both derived signals.
    """
    if config is None:
        config = ReconstructionConfig()
    raw_acc = track.accs_mps2()
    outlier_idx = detect_outliers(raw_acc, config.acc_threshold_mps2)
    positions = spline_interpolate(
        track.positions_m(), track.times_s(), outlier_idx, config.anchor_count
    )
    speeds_raw, accs_raw = derive_kinematics(positions, config.dt_s)
    speeds = low_pass_filter(speeds_raw, config.filter_window)
    accs = low_pass_filter(accs_raw, config.filter_window)
    report = ReconstructionReport(
        n_outliers=len(outlier_idx),
        max_abs_acc_before=float(np.max(np.abs(raw_acc))) if len(raw_acc) else 0.0,
        max_abs_acc_after=float(np.max(np.abs(accs))) if len(accs) else 0.0,
    )
    first = track.first_frame
    return ReconstructedTrack(
        original=track,
        positions_m=positions,
        speeds_mps=speeds,
        accs_mps2=accs,
        outlier_frames=frozenset(first + i for i in outlier_idx),
        report=report,
    )
