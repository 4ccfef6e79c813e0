"""Command-line pipeline: generate, clean, build datasets, tune, compare.

Every subcommand is file-based (CSV/JSON in, CSV/JSON out) and writes a
``<output>.manifest.json`` next to each output, recording the command, the
fully resolved configuration, SHA-256 digests of the inputs, and the tool
version.  Outputs contain no timestamps, so identical manifests imply
byte-identical outputs.

Exit codes: 0 success, 1 data/validation error (stderr gets a single
``ERROR <kind>: ...`` line), 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import InstanceSet, build_instances, split_train_test
from .errors import CarFollowError, SchemaError, UnknownVehicle
from .evaluation import (
    DEFAULT_DEPTHS,
    DEFAULT_M_VALUES,
    DEFAULT_NU_VALUES,
    DEFAULT_TAUS,
    ModelKind,
    compare_models,
    grid_search_nu_m,
    mse,
    sweep_depth,
    sweep_tau,
)
from .gbrt import GbrtConfig, GbrtModel, fit_gbrt
from .ghr import DEFAULT_LB, DEFAULT_UB, GhrParameters, calibrate_ghr, ghr_predict
from .reconstruction import ReconstructionConfig, reconstruct
from .synthetic import (
    GeneratorKind,
    GeneratorSpec,
    LeaderProfile,
    generate,
)
from .trajectory_io import (
    DEFAULT_SCHEMA,
    extract_pair,
    parse_trajectory_csv,
)

INSTANCE_HEADER = "t_index,response,v_resp,dv,dx"


def _sha256_file(path: Path) -> str:
    return "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()


def _config_snapshot(args: argparse.Namespace) -> dict:
    snap = {}
    for key, value in sorted(vars(args).items()):
        if key == "func":
            continue
        snap[key] = str(value) if isinstance(value, Path) else value
    return snap


def _emit(path: Path, data: bytes | str, args: argparse.Namespace,
          inputs: list[Path]) -> None:
    """Write one output plus its manifest."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    manifest = {
        "command": args.command,
        "config": _config_snapshot(args),
        "input_digests": {str(p): _sha256_file(p) for p in inputs},
        "tool_version": __version__,
    }
    Path(str(path) + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


# --- instance CSV helpers ---


def write_instances_csv(instances: InstanceSet) -> str:
    lines = [INSTANCE_HEADER]
    for i in range(len(instances)):
        t = int(instances.t_index[i])
        r = float(instances.responses[i])
        v, dv, dx = (float(x) for x in instances.features[i])
        lines.append(f"{t},{r!r},{v!r},{dv!r},{dx!r}")
    return "\n".join(lines) + "\n"


def read_instances_csv(source, tau_s: float | None = None,
                       source_name: str = "") -> InstanceSet:
    if isinstance(source, (str, bytes)):
        text = source.decode("utf-8") if isinstance(source, bytes) else source
    else:
        text = Path(source).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != INSTANCE_HEADER:
        raise SchemaError(
            f"instance CSV must start with header {INSTANCE_HEADER!r}"
        )
    rows = [ln.split(",") for ln in lines[1:]]
    t_index = np.array([int(r[0]) for r in rows], dtype=int)
    responses = np.array([float(r[1]) for r in rows])
    features = np.array([[float(r[2]), float(r[3]), float(r[4])] for r in rows])
    return InstanceSet(
        responses=responses, features=features, t_index=t_index,
        tau_s=tau_s, source_name=source_name,
    )


def _load_series(args) -> "FollowerLeaderSeries":
    result = parse_trajectory_csv(args.input.read_bytes(), units=args.units)
    follower = args.follower
    if follower is None:
        candidates = [
            t.vehicle_id for t in result.tracks
            if any(s.preceding_id != 0 for s in t.samples)
        ]
        if len(candidates) != 1:
            raise UnknownVehicle(
                "pass --follower: cannot pick a unique follower from "
                f"{candidates or 'no candidates'}"
            )
        follower = candidates[0]
    return extract_pair(result.tracks, follower)


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


# --- subcommand handlers ---


def _cmd_synth(args) -> int:
    near = None
    if args.kind == GeneratorKind.REGIME_SWITCH.value:
        near = GhrParameters(args.alpha2, args.m2, args.l2, tau_s=args.tau)
    leader = LeaderProfile.from_text(args.leader)
    leader = LeaderProfile(
        kind=leader.kind, base_speed_mps=args.base_speed,
        amplitude_mps=leader.amplitude_mps, period_s=leader.period_s,
    )
    spec = GeneratorSpec(
        kind=GeneratorKind(args.kind),
        ghr=GhrParameters(args.alpha, args.m, args.l, tau_s=args.tau),
        ghr_near=near,
        switch_gap_m=args.switch_gap,
        leader=leader,
        duration_s=args.duration,
        initial_gap_m=args.initial_gap,
        follower_speed_mps=args.follower_speed,
        noise_std_mps2=args.noise,
        seed=args.seed,
    )
    result = generate(spec)
    _emit(args.out, result.csv_bytes, args, [])
    if args.truth_out is not None:
        truth = {
            "gap_m": [float(g) for g in result.truth.gap_m],
            "stalled": result.truth.stalled,
            "follower_acc_mps2": [float(a) for a in result.truth.follower_acc_mps2],
        }
        _emit(args.truth_out, json.dumps(truth, indent=2, sort_keys=True) + "\n",
              args, [])
    return 0


def _cmd_reconstruct(args) -> int:
    parsed = parse_trajectory_csv(args.input.read_bytes(), units=args.units)
    config = ReconstructionConfig(
        acc_threshold_mps2=args.threshold,
        anchor_count=args.anchors,
        filter_window=args.window,
    )
    header = list(DEFAULT_SCHEMA.values()) + [
        "pos_recon", "v_recon", "a_recon", "is_outlier",
    ]
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    reports = {}
    code = {"Auto": 2, "Truck": 3, "Other": 1}
    for track in parsed.tracks:
        recon = reconstruct(track, config)
        reports[str(track.vehicle_id)] = {
            "n_outliers": recon.report.n_outliers,
            "max_abs_acc_before": recon.report.max_abs_acc_before,
            "max_abs_acc_after": recon.report.max_abs_acc_after,
            "outlier_frames": sorted(recon.outlier_frames),
        }
        for i, s in enumerate(track.samples):
            flag = 1 if s.frame_index in recon.outlier_frames else 0
            buf.write(
                f"{s.vehicle_id},{s.frame_index},{s.position_m!r},"
                f"{s.speed_mps!r},{s.acc_mps2!r},{s.preceding_id},{s.lane_id},"
                f"{code[track.vehicle_class.value]},"
                f"{float(recon.positions_m[i])!r},{float(recon.speeds_mps[i])!r},"
                f"{float(recon.accs_mps2[i])!r},{flag}\n"
            )
    _emit(args.out, buf.getvalue(), args, [args.input])
    sidecar = {
        "n_dropped_fragments": parsed.n_dropped_fragments,
        "tracks": reports,
    }
    _emit(Path(str(args.out) + ".report.json"),
          json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
          args, [args.input])
    return 0


def _cmd_build_dataset(args) -> int:
    series = _load_series(args)
    instances = build_instances(series, args.tau)
    _emit(args.out, write_instances_csv(instances), args, [args.input])
    if args.train_out is not None or args.test_out is not None:
        train, test = split_train_test(instances, args.train_fraction)
        if args.train_out is not None:
            _emit(args.train_out, write_instances_csv(train), args, [args.input])
        if args.test_out is not None:
            _emit(args.test_out, write_instances_csv(test), args, [args.input])
    return 0


def _cmd_train(args) -> int:
    train = read_instances_csv(args.input, tau_s=args.tau)
    config = GbrtConfig(
        n_learners=args.n_learners,
        learning_rate=args.learning_rate,
        max_splits=args.max_splits,
        min_leaf=args.min_leaf,
    )
    model = fit_gbrt(train, config)
    _emit(args.out, model.to_json() + "\n", args, [args.input])
    return 0


def _cmd_calibrate(args) -> int:
    train = read_instances_csv(args.input, tau_s=args.tau)
    params = calibrate_ghr(train, _float_list(args.lb), _float_list(args.ub))
    _emit(args.out, json.dumps(params.to_dict(), indent=2, sort_keys=True) + "\n",
          args, [args.input])
    return 0


def _cmd_evaluate(args) -> int:
    payload = json.loads(args.model.read_text(encoding="utf-8"))
    instances = read_instances_csv(args.input)
    if "stages" in payload:
        model = GbrtModel.from_dict(payload)
        preds = model.predict(instances.features)
        kind = "gbrt"
    else:
        params = GhrParameters.from_dict(payload)
        preds = ghr_predict(
            params,
            instances.features[:, 0],
            instances.features[:, 1],
            instances.features[:, 2],
        )
        kind = "ghr"
    report = {"kind": kind, "mse": mse(preds, instances.responses),
              "n": len(instances)}
    _emit(args.out, json.dumps(report, indent=2, sort_keys=True) + "\n",
          args, [args.model, args.input])
    return 0


def _is_instance_csv(path: Path) -> bool:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.readline().strip() == INSTANCE_HEADER


def _cmd_tune(args) -> int:
    out_dir = args.out_dir
    fixed = GbrtConfig(
        n_learners=args.n_learners,
        learning_rate=args.learning_rate,
        max_splits=args.depth,
        min_leaf=args.min_leaf,
    )
    nu_values = _float_list(args.nu_values)
    m_values = _int_list(args.m_values)
    depths = _int_list(args.depths)
    taus = _float_list(args.taus)

    series = None
    if _is_instance_csv(args.input):
        train = read_instances_csv(args.input)
    else:
        series = _load_series(args)
        instances = build_instances(series, args.tau)
        train, _ = split_train_test(instances, args.train_fraction)

    grid = grid_search_nu_m(
        train, nu_values, m_values,
        depth=args.depth, min_leaf=args.min_leaf, k=args.k, n_jobs=args.jobs,
    )
    _emit(out_dir / "grid_nu_m.csv", grid.to_csv(), args, [args.input])

    depth_rows = sweep_depth(train, depths, fixed, k=args.k, n_jobs=args.jobs)
    depth_csv = "depth,avg_mse\n" + "".join(
        f"{p.depth},{p.avg_mse!r}\n" for p in depth_rows
    )
    _emit(out_dir / "sweep_depth.csv", depth_csv, args, [args.input])

    if series is not None:
        tau_report = sweep_tau(
            series, taus, ModelKind.GBRT, fixed,
            k=args.k, train_fraction=args.train_fraction, n_jobs=args.jobs,
        )
        _emit(out_dir / "sweep_tau.csv", tau_report.to_csv(), args, [args.input])
    else:
        print(
            "note: input is an instance CSV; the reaction-time sweep needs a "
            "trajectory file and was skipped", file=sys.stderr,
        )
    return 0


def _cmd_compare(args) -> int:
    series = _load_series(args)
    fixed = GbrtConfig(
        n_learners=args.n_learners,
        learning_rate=args.learning_rate,
        max_splits=args.max_splits,
        min_leaf=args.min_leaf,
    )
    taus = _float_list(args.taus)
    lb = _float_list(args.lb)
    ub = _float_list(args.ub)
    tau_gbrt = args.tau_gbrt
    if tau_gbrt is None:
        tau_gbrt = sweep_tau(
            series, taus, ModelKind.GBRT, fixed,
            k=args.k, train_fraction=args.train_fraction, n_jobs=args.jobs,
        ).best_tau_s
    tau_ghr = args.tau_ghr
    if tau_ghr is None:
        tau_ghr = sweep_tau(
            series, taus, ModelKind.GHR, fixed, lb=lb, ub=ub,
            k=args.k, train_fraction=args.train_fraction, n_jobs=args.jobs,
        ).best_tau_s
    report = compare_models(
        series, fixed, tau_gbrt, tau_ghr,
        train_fraction=args.train_fraction, lb=lb, ub=ub,
    )
    _emit(args.out_dir / "comparison.json", report.to_json() + "\n",
          args, [args.input])
    _emit(args.out_dir / "comparison.csv", report.to_csv_row(),
          args, [args.input])
    return 0


# --- parser ---


def _default_jobs() -> int:
    return int(os.environ.get("CARFOLLOW_JOBS", "1"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carfollow",
        description="Car-following model pipeline over trajectory CSV files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic leader-follower file")
    p.add_argument("--kind", choices=[k.value for k in GeneratorKind],
                   default="ghr")
    p.add_argument("--alpha", type=float, default=1.2)
    p.add_argument("--m", type=float, default=0.8)
    p.add_argument("--l", type=float, default=1.5)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--alpha2", type=float, default=2.5)
    p.add_argument("--m2", type=float, default=0.2)
    p.add_argument("--l2", type=float, default=0.2)
    p.add_argument("--switch-gap", type=float, default=15.0)
    p.add_argument("--leader", default="sinusoidal:2:30",
                   help="constant | sinusoidal:<amp>:<period> | sawtooth:<amp>:<period>")
    p.add_argument("--base-speed", type=float, default=10.0)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--initial-gap", type=float, default=20.0)
    p.add_argument("--follower-speed", type=float, default=None)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--truth-out", type=Path, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("reconstruct", help="clean a trajectory file")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--units", choices=["m", "ft"], default="m")
    p.add_argument("--threshold", type=float, default=3.0)
    p.add_argument("--anchors", type=int, default=5)
    p.add_argument("--window", type=int, default=5)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("build-dataset", help="lag a pair into supervised instances")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--follower", type=int, default=None)
    p.add_argument("--units", choices=["m", "ft"], default="m")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--train-out", type=Path, default=None)
    p.add_argument("--test-out", type=Path, default=None)
    p.set_defaults(func=_cmd_build_dataset)

    p = sub.add_parser("train", help="fit the boosted-tree model on instances")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--n-learners", type=int, default=8)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--max-splits", type=int, default=3)
    p.add_argument("--min-leaf", type=int, default=5)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("calibrate", help="fit the stimulus-response model")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--lb", default="0,0,0")
    p.add_argument("--ub", default="3,3,3")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("evaluate", help="score a saved model on instances")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("tune", help="grid and sweeps for the regularizers")
    p.add_argument("--input", type=Path, required=True,
                   help="trajectory CSV or instance CSV (sniffed by header)")
    p.add_argument("--follower", type=int, default=None)
    p.add_argument("--units", choices=["m", "ft"], default="m")
    p.add_argument("--tau", type=float, default=1.0,
                   help="reaction time used to build grid/depth instances")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--nu-values",
                   default=",".join(repr(v) for v in DEFAULT_NU_VALUES))
    p.add_argument("--m-values",
                   default=",".join(str(m) for m in DEFAULT_M_VALUES))
    p.add_argument("--depths", default=",".join(str(d) for d in DEFAULT_DEPTHS))
    p.add_argument("--taus", default=",".join(repr(t) for t in DEFAULT_TAUS))
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--n-learners", type=int, default=8)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("compare", help="held-out comparison of both models")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--follower", type=int, default=None)
    p.add_argument("--units", choices=["m", "ft"], default="m")
    p.add_argument("--tau-gbrt", type=float, default=None,
                   help="fixed reaction time for the boosted model "
                        "(default: argmin of its sweep)")
    p.add_argument("--tau-ghr", type=float, default=None)
    p.add_argument("--taus", default=",".join(repr(t) for t in DEFAULT_TAUS))
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--n-learners", type=int, default=8)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--max-splits", type=int, default=3)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--lb", default="0,0,0")
    p.add_argument("--ub", default="3,3,3")
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage/help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CarFollowError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
