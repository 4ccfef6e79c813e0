"""Deterministic leader-follower trajectory generator for verification.

Produces NGSIM-format CSV files from known dynamics so that calibration,
reaction-time recovery, reconstruction, and model-comparison code paths can
be checked against ground truth.  The follower is integrated forward with
explicit Euler steps at the data resolution (0.1 s): its acceleration at
each step is the stimulus-response law evaluated on the current state,
optionally plus Gaussian noise drawn from NumPy's seeded PCG64 generator,
so identical specs yield byte-identical files on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import FrameOutOfRange
from .ghr import GhrParameters
from .trajectory_io import (
    FRAME_DT_S,
    parse_trajectory_csv,
    write_trajectory_csv,
)

MIN_GAP_M = 0.5
LEADER_ID = 1
FOLLOWER_ID = 2


class GeneratorKind(Enum):
    GHR_DYNAMICS = "ghr"
    REGIME_SWITCH = "regime-switch"


class LeaderProfileKind(Enum):
    CONSTANT = "constant"
    SINUSOIDAL = "sinusoidal"
    SAWTOOTH = "sawtooth"


@dataclass(frozen=True)
class LeaderProfile:
    """Speed profile of the lead vehicle, clamped at zero."""

    kind: LeaderProfileKind = LeaderProfileKind.CONSTANT
    base_speed_mps: float = 10.0
    amplitude_mps: float = 0.0
    period_s: float = 30.0

    def speeds(self, times: np.ndarray) -> np.ndarray:
        if self.kind is LeaderProfileKind.CONSTANT:
            v = np.full_like(times, self.base_speed_mps)
        elif self.kind is LeaderProfileKind.SINUSOIDAL:
            v = self.base_speed_mps + self.amplitude_mps * np.sin(
                2.0 * np.pi * times / self.period_s
            )
        else:
            phase = np.mod(times / self.period_s, 1.0)
            v = self.base_speed_mps + self.amplitude_mps * (2.0 * phase - 1.0)
        return np.maximum(v, 0.0)

    @staticmethod
    def from_text(text: str) -> "LeaderProfile":
        """Parse ``constant``, ``sinusoidal:<amp>:<period>`` or ``sawtooth:...``."""
        parts = text.split(":")
        kind = LeaderProfileKind(parts[0])
        if kind is LeaderProfileKind.CONSTANT:
            return LeaderProfile(kind=kind)
        return LeaderProfile(
            kind=kind,
            amplitude_mps=float(parts[1]),
            period_s=float(parts[2]),
        )


@dataclass(frozen=True)
class GeneratorSpec:
    kind: GeneratorKind = GeneratorKind.GHR_DYNAMICS
    ghr: GhrParameters = field(
        default_factory=lambda: GhrParameters(1.0, 1.0, 1.0, tau_s=0.5)
    )
    ghr_near: GhrParameters | None = None  # regime used below switch_gap_m
    switch_gap_m: float = 15.0
    leader: LeaderProfile = field(default_factory=LeaderProfile)
    duration_s: float = 60.0
    dt_s: float = FRAME_DT_S
    initial_gap_m: float = 20.0
    follower_speed_mps: float | None = None  # None: start at the leader base speed
    noise_std_mps2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.duration_s < 10.0:
            raise ValueError("duration_s must be at least 10 s")
        if self.initial_gap_m <= 0:
            raise ValueError("initial_gap_m must be positive")
        if self.noise_std_mps2 < 0:
            raise ValueError("noise_std_mps2 must be nonnegative")
        if self.kind is GeneratorKind.REGIME_SWITCH and self.ghr_near is None:
            raise ValueError("regime-switch generation needs ghr_near")


@dataclass(frozen=True)
class GenerationTruth:
    """Ground truth retained alongside the generated file."""

    spec: GeneratorSpec
    gap_m: np.ndarray                 # per-frame leader-follower gap
    follower_speed_mps: np.ndarray
    follower_acc_mps2: np.ndarray     # stimulus-response values (plus noise)
    stalled: bool                     # gap floor was hit at least once


@dataclass(frozen=True)
class GenerationResult:
    csv_bytes: bytes
    truth: GenerationTruth


def _law(params: GhrParameters, v: float, dv: float, dx: float) -> float:
    return params.alpha * v ** params.m_exp * dv / dx ** params.l_exp


def generate(spec: GeneratorSpec) -> GenerationResult:
    """Integrate the spec forward and emit an NGSIM-format CSV.

    The leader follows its speed profile; the follower's acceleration at
    step ``i`` applies the stimulus observed ``tau`` earlier:
    ``acc[i] = law(v_f[i], dv[i-k], dx[i-k]) + noise`` with ``k = tau/dt``
    (zero before the first stimulus is available).  Speeds are clamped at
    zero and positions integrate trapezoidally; if the gap would close
    below 0.5 m the follower is held at the floor and the stall flag set.
    """
    dt = spec.dt_s
    n = int(round(spec.duration_s / dt))
    k = int(round(spec.ghr.tau_s / dt)) if spec.ghr.tau_s else 0
    times = np.arange(n) * dt
    rng = np.random.default_rng(spec.seed)
    noise = (
        rng.normal(0.0, spec.noise_std_mps2, size=n)
        if spec.noise_std_mps2 > 0 else np.zeros(n)
    )

    v_lead = spec.leader.speeds(times)
    x_lead = np.empty(n)
    x_lead[0] = spec.initial_gap_m
    for i in range(n - 1):
        x_lead[i + 1] = x_lead[i] + 0.5 * (v_lead[i] + v_lead[i + 1]) * dt

    v0 = (spec.leader.base_speed_mps if spec.follower_speed_mps is None
          else spec.follower_speed_mps)
    v_fol = np.empty(n)
    x_fol = np.empty(n)
    acc = np.zeros(n)
    v_fol[0] = max(v0, 0.0)
    x_fol[0] = 0.0
    stalled = False
    for i in range(n):
        gap = x_lead[i] - x_fol[i]
        if i >= k:
            dv = v_lead[i - k] - v_fol[i - k]
            dx = x_lead[i - k] - x_fol[i - k]
            if spec.kind is GeneratorKind.REGIME_SWITCH and dx < spec.switch_gap_m:
                params = spec.ghr_near
            else:
                params = spec.ghr
            acc[i] = _law(params, v_fol[i], dv, dx) + noise[i]
        if i == n - 1:
            break
        v_next = max(v_fol[i] + acc[i] * dt, 0.0)
        x_next = x_fol[i] + 0.5 * (v_fol[i] + v_next) * dt
        if x_lead[i + 1] - x_next < MIN_GAP_M:
            stalled = True
            x_next = x_lead[i + 1] - MIN_GAP_M
            v_next = v_lead[i + 1]
        v_fol[i + 1] = v_next
        x_fol[i + 1] = x_next

    lead_acc = np.zeros(n)
    lead_acc[:-1] = np.diff(v_lead) / dt
    if n > 1:
        lead_acc[-1] = lead_acc[-2]

    rows = []
    for vid, xs, vs, accs, preceding in (
        (LEADER_ID, x_lead, v_lead, lead_acc, 0),
        (FOLLOWER_ID, x_fol, v_fol, acc, LEADER_ID),
    ):
        for i in range(n):
            rows.append((vid, i, xs[i], vs[i], accs[i], preceding))
    csv_bytes = _rows_to_csv(rows)
    truth = GenerationTruth(
        spec=spec,
        gap_m=x_lead - x_fol,
        follower_speed_mps=v_fol,
        follower_acc_mps2=acc,
        stalled=stalled,
    )
    return GenerationResult(csv_bytes=csv_bytes, truth=truth)


def _rows_to_csv(rows) -> bytes:
    lines = ["Vehicle_ID,Frame_ID,Local_Y,v_Vel,v_Acc,Preceding,Lane_ID,v_Class"]
    for vid, frame, x, v, a, preceding in rows:
        lines.append(
            f"{vid},{frame},{float(x)!r},{float(v)!r},{float(a)!r},{preceding},1,2"
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def inject_spikes(csv_bytes: bytes, frames: set[int], magnitude: float) -> bytes:
    """Corrupt the acceleration column (and the matching position) at frames.

    ``frames`` are positions within each track (0 = first sample).  The
    acceleration at each frame is set to ``magnitude`` and the position is
    shifted by ``-(magnitude - old_acc) * dt^2 / 2`` so the spike is also
    visible in the position second difference.  An empty frame set returns
    the input unchanged.
    """
    if not frames:
        return csv_bytes
    result = parse_trajectory_csv(csv_bytes)
    new_tracks = []
    for track in result.tracks:
        n = len(track)
        for f in frames:
            if not (0 <= f < n):
                raise FrameOutOfRange(
                    f"frame {f} outside track {track.vehicle_id} (length {n})"
                )
        samples = list(track.samples)
        for f in frames:
            s = samples[f]
            delta_acc = magnitude - s.acc_mps2
            samples[f] = type(s)(
                frame_index=s.frame_index,
                time_s=s.time_s,
                position_m=s.position_m - delta_acc * FRAME_DT_S ** 2 / 2.0,
                speed_mps=s.speed_mps,
                acc_mps2=magnitude,
                vehicle_id=s.vehicle_id,
                preceding_id=s.preceding_id,
                lane_id=s.lane_id,
            )
        new_tracks.append(type(track)(
            vehicle_id=track.vehicle_id,
            samples=tuple(samples),
            vehicle_class=track.vehicle_class,
        ))
    return write_trajectory_csv(new_tracks)
