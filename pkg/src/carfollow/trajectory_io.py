"""NGSIM-style trajectory CSV parsing, leader-follower pairing, and summary stats.

The on-disk format is a comma-delimited CSV with a header row.  Column names
are configurable through a schema mapping; the defaults match the NGSIM
trajectory exports.  All quantities are metric after ingest (``units="ft"``
converts imperial files on the way in).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    EmptyInput,
    EmptySeries,
    NoLeader,
    NonPositiveGap,
    ParseError,
    SchemaError,
    UnknownVehicle,
)

FRAME_DT_S = 0.1
FEET_TO_METERS = 0.3048

# logical field -> default NGSIM column name
DEFAULT_SCHEMA: dict[str, str] = {
    "vehicle_id": "Vehicle_ID",
    "frame": "Frame_ID",
    "position": "Local_Y",
    "speed": "v_Vel",
    "acc": "v_Acc",
    "preceding": "Preceding",
    "lane": "Lane_ID",
    "vehicle_class": "v_Class",
}


class VehicleClass(Enum):
    AUTO = "Auto"
    TRUCK = "Truck"
    OTHER = "Other"


_CLASS_FROM_CODE = {2: VehicleClass.AUTO, 3: VehicleClass.TRUCK}
_CODE_FROM_CLASS = {VehicleClass.AUTO: 2, VehicleClass.TRUCK: 3, VehicleClass.OTHER: 1}


@dataclass(frozen=True)
class TrajectorySample:
    """One vehicle observation at a single 0.1 s frame."""

    frame_index: int
    time_s: float
    position_m: float
    speed_mps: float
    acc_mps2: float
    vehicle_id: int
    preceding_id: int
    lane_id: int


@dataclass(frozen=True)
class VehicleTrack:
    """Gap-free, time-ordered samples of a single vehicle."""

    vehicle_id: int
    samples: tuple[TrajectorySample, ...]
    vehicle_class: VehicleClass

    def __post_init__(self):
        frames = [s.frame_index for s in self.samples]
        for a, b in zip(frames, frames[1:]):
            if b != a + 1:
                raise ValueError(
                    f"track {self.vehicle_id}: frames must be consecutive, "
                    f"got {a} then {b}"
                )
        for s in self.samples:
            if s.vehicle_id != self.vehicle_id:
                raise ValueError(
                    f"sample vehicle id {s.vehicle_id} != track id {self.vehicle_id}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def first_frame(self) -> int:
        return self.samples[0].frame_index

    @property
    def last_frame(self) -> int:
        return self.samples[-1].frame_index

    def positions_m(self) -> np.ndarray:
        return np.array([s.position_m for s in self.samples])

    def speeds_mps(self) -> np.ndarray:
        return np.array([s.speed_mps for s in self.samples])

    def accs_mps2(self) -> np.ndarray:
        return np.array([s.acc_mps2 for s in self.samples])

    def times_s(self) -> np.ndarray:
        return np.array([s.time_s for s in self.samples])


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FollowerLeaderSeries:
    """Aligned follower/leader samples over a contiguous frame range.

    ``delta_v`` is leader speed minus follower speed (a closing follower sees
    a negative value) and ``delta_x`` is leader position minus follower
    position, required positive at every frame.
    """

    name: str
    follower_id: int
    leader_id: int
    start_frame: int
    time_s: np.ndarray
    follower_speed_mps: np.ndarray
    follower_acc_mps2: np.ndarray
    leader_speed_mps: np.ndarray
    delta_v_mps: np.ndarray
    delta_x_m: np.ndarray

    def __post_init__(self):
        arrays = (
            self.time_s,
            self.follower_speed_mps,
            self.follower_acc_mps2,
            self.leader_speed_mps,
            self.delta_v_mps,
            self.delta_x_m,
        )
        n = len(self.time_s)
        if any(len(a) != n for a in arrays):
            raise ValueError("series arrays must have equal length")
        for field, arr in zip(
            ("time_s", "follower_speed_mps", "follower_acc_mps2",
             "leader_speed_mps", "delta_v_mps", "delta_x_m"),
            arrays,
        ):
            object.__setattr__(self, field, _readonly(arr))
        if n and np.min(self.delta_x_m) <= 0:
            raise NonPositiveGap(
                f"series {self.name!r}: delta_x must be positive everywhere"
            )

    def __len__(self) -> int:
        return len(self.time_s)

    def frame_indices(self) -> np.ndarray:
        return self.start_frame + np.arange(len(self))


@dataclass(frozen=True)
class RangeStats:
    min: float
    max: float
    mean: float

    def __post_init__(self):
        if not (self.min <= self.mean <= self.max):
            raise ValueError("expected min <= mean <= max")


@dataclass(frozen=True)
class SeriesStats:
    """Min/max/mean of follower acceleration, follower speed, and gap."""

    n_samples: int
    acc: RangeStats
    speed: RangeStats
    delta_x: RangeStats


@dataclass(frozen=True)
class ParseResult:
    tracks: tuple[VehicleTrack, ...]
    n_dropped_fragments: int


def _coerce_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    if isinstance(source, Path):
        return source.read_bytes().decode("utf-8")
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def parse_trajectory_csv(source, schema: dict[str, str] | None = None,
                         units: str = "m") -> ParseResult:
    """Parse an NGSIM-style CSV into per-vehicle tracks.

    Parameters
    ----------
    source : bytes, str, Path or file-like
        UTF-8 CSV content with a header row.
    schema : dict, optional
        Mapping of logical field names to column names; defaults to the
        NGSIM layout (``Vehicle_ID``, ``Frame_ID``, ``Local_Y``, ...).
    units : {"m", "ft"}
        Unit of position/speed/acceleration columns.  ``"ft"`` converts to
        meters on ingest.

    Returns
    -------
    ParseResult
        One track per vehicle id, samples sorted by frame.  When a vehicle
        has frame gaps, only its longest gap-free run is kept (earliest run
        on ties) and the number of dropped fragments is reported.
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    if units not in ("m", "ft"):
        raise ValueError(f"units must be 'm' or 'ft', got {units!r}")
    scale = FEET_TO_METERS if units == "ft" else 1.0

    text = _coerce_text(source)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise EmptyInput("no header row in CSV input")
    missing = [col for col in schema.values() if col not in reader.fieldnames]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")

    by_vehicle: dict[int, list[tuple[int, TrajectorySample]]] = {}
    classes: dict[int, VehicleClass] = {}
    n_rows = 0
    for rownum, row in enumerate(reader, start=2):  # row 1 is the header
        n_rows += 1
        try:
            vid = int(float(row[schema["vehicle_id"]]))
            frame = int(float(row[schema["frame"]]))
            pos = float(row[schema["position"]]) * scale
            speed = float(row[schema["speed"]]) * scale
            acc = float(row[schema["acc"]]) * scale
            preceding = int(float(row[schema["preceding"]]))
            lane = int(float(row[schema["lane"]]))
            vclass = int(float(row[schema["vehicle_class"]]))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"row {rownum}: {exc}") from exc
        if speed < 0:
            raise ParseError(f"row {rownum}: negative speed {speed}")
        sample = TrajectorySample(
            frame_index=frame,
            time_s=frame * FRAME_DT_S,
            position_m=pos,
            speed_mps=speed,
            acc_mps2=acc,
            vehicle_id=vid,
            preceding_id=preceding,
            lane_id=lane,
        )
        by_vehicle.setdefault(vid, []).append((frame, sample))
        classes.setdefault(vid, _CLASS_FROM_CODE.get(vclass, VehicleClass.OTHER))
    if n_rows == 0:
        raise EmptyInput("CSV has a header but no data rows")

    tracks = []
    n_dropped = 0
    for vid in sorted(by_vehicle):
        entries = sorted(by_vehicle[vid], key=lambda e: e[0])
        for (fa, _), (fb, _) in zip(entries, entries[1:]):
            if fb == fa:
                raise ParseError(f"vehicle {vid}: duplicate frame {fa}")
        # split at frame gaps, keep the longest run (earliest on ties)
        runs: list[list[TrajectorySample]] = [[entries[0][1]]]
        for (fa, _), (fb, sb) in zip(entries, entries[1:]):
            if fb == fa + 1:
                runs[-1].append(sb)
            else:
                runs.append([sb])
        best = max(runs, key=len)
        n_dropped += len(runs) - 1
        tracks.append(VehicleTrack(vid, tuple(best), classes[vid]))
    return ParseResult(tuple(tracks), n_dropped)


def write_trajectory_csv(tracks, schema: dict[str, str] | None = None,
                         units: str = "m") -> bytes:
    """Serialize tracks back to the CSV layout accepted by the parser.

    Floats are written with shortest round-trip formatting, so a
    write/parse cycle reproduces the samples exactly.
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    if units not in ("m", "ft"):
        raise ValueError(f"units must be 'm' or 'ft', got {units!r}")
    scale = FEET_TO_METERS if units == "ft" else 1.0

    buf = io.StringIO()
    fields = ["vehicle_id", "frame", "position", "speed", "acc",
              "preceding", "lane", "vehicle_class"]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([schema[f] for f in fields])
    for track in sorted(tracks, key=lambda t: t.vehicle_id):
        code = _CODE_FROM_CLASS[track.vehicle_class]
        for s in track.samples:
            writer.writerow([
                s.vehicle_id,
                s.frame_index,
                repr(s.position_m / scale),
                repr(s.speed_mps / scale),
                repr(s.acc_mps2 / scale),
                s.preceding_id,
                s.lane_id,
                code,
            ])
    return buf.getvalue().encode("utf-8")


def extract_pair(tracks, follower_id: int, name: str | None = None) -> FollowerLeaderSeries:
    """Build the aligned follower/leader series for one follower.

    The series covers the longest contiguous frame range on which the
    follower's preceding id stays constant (and nonzero) and the leader
    track overlaps.  Ties go to the earliest such range.
    """
    by_id = {t.vehicle_id: t for t in tracks}
    if follower_id not in by_id:
        raise UnknownVehicle(f"no track for vehicle {follower_id}")
    follower = by_id[follower_id]

    # maximal runs of constant, nonzero preceding id
    runs: list[tuple[int, int, int]] = []  # (start_idx, end_idx inclusive, leader_id)
    for i, s in enumerate(follower.samples):
        if s.preceding_id == 0:
            continue
        if runs and runs[-1][2] == s.preceding_id and runs[-1][1] == i - 1:
            runs[-1] = (runs[-1][0], i, s.preceding_id)
        else:
            runs.append((i, i, s.preceding_id))
    if not runs:
        raise NoLeader(f"vehicle {follower_id} never reports a preceding vehicle")

    best: tuple[int, int, int, int] | None = None  # (length, f_start, f_end, leader)
    for start_idx, end_idx, leader_id in runs:
        leader = by_id.get(leader_id)
        if leader is None:
            continue
        f_start = max(follower.samples[start_idx].frame_index, leader.first_frame)
        f_end = min(follower.samples[end_idx].frame_index, leader.last_frame)
        length = f_end - f_start + 1
        if length <= 0:
            continue
        if best is None or length > best[0]:
            best = (length, f_start, f_end, leader_id)
    if best is None:
        raise NoLeader(
            f"vehicle {follower_id}: no leader track overlaps its "
            "constant-leader segments"
        )
    length, f_start, f_end, leader_id = best
    leader = by_id[leader_id]

    fo = f_start - follower.first_frame
    lo = f_start - leader.first_frame
    f_sl = follower.samples[fo:fo + length]
    l_sl = leader.samples[lo:lo + length]
    delta_x = np.array([ls.position_m - fs.position_m for fs, ls in zip(f_sl, l_sl)])
    if np.min(delta_x) <= 0:
        raise NonPositiveGap(
            f"vehicle {follower_id}: leader {leader_id} not ahead over frames "
            f"{f_start}..{f_end}"
        )
    return FollowerLeaderSeries(
        name=name if name is not None else f"pair_{follower_id}_{leader_id}",
        follower_id=follower_id,
        leader_id=leader_id,
        start_frame=f_start,
        time_s=np.array([s.time_s for s in f_sl]),
        follower_speed_mps=np.array([s.speed_mps for s in f_sl]),
        follower_acc_mps2=np.array([s.acc_mps2 for s in f_sl]),
        leader_speed_mps=np.array([s.speed_mps for s in l_sl]),
        delta_v_mps=np.array([ls.speed_mps - fs.speed_mps for fs, ls in zip(f_sl, l_sl)]),
        delta_x_m=delta_x,
    )


def summarize(series: FollowerLeaderSeries) -> SeriesStats:
    """Exact min/max/mean of follower acceleration, speed, and gap."""
    if len(series) == 0:
        raise EmptySeries("cannot summarize an empty series")

    def stats(a: np.ndarray) -> RangeStats:
        return RangeStats(float(np.min(a)), float(np.max(a)), float(np.mean(a)))

    return SeriesStats(
        n_samples=len(series),
        acc=stats(series.follower_acc_mps2),
        speed=stats(series.follower_speed_mps),
        delta_x=stats(series.delta_x_m),
    )
