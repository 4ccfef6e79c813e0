"""Car-following models from vehicle trajectory data.

The package covers the full pipeline: parsing NGSIM-style trajectory CSV
files, cleaning them (outlier removal, spline re-interpolation, zero-phase
filtering), turning leader-follower pairs into lagged supervised
instances, fitting a gradient-boosted regression-tree model and a
calibrated stimulus-response model on identical training data, tuning
regularizers by contiguous cross-validation, and comparing held-out MSE.
A deterministic synthetic generator provides ground truth for all of it.
"""

__version__ = "0.1.0"

from .dataset import (
    CarFollowingInstance,
    FoldPlan,
    InstanceSet,
    build_instances,
    contiguous_folds,
    split_train_test,
)
from .errors import CarFollowError
from .evaluation import (
    ComparisonReport,
    GridReport,
    ModelKind,
    TauSweepReport,
    compare_models,
    cross_validate,
    cross_validate_ghr,
    grid_search_nu_m,
    mse,
    sweep_depth,
    sweep_tau,
)
from .gbrt import GbrtConfig, GbrtModel, fit_gbrt, line_search_beta, predict, staged_predict
from .ghr import GhrParameters, calibrate_ghr, ghr_objective, ghr_predict
from .reconstruction import (
    ReconstructedTrack,
    ReconstructionConfig,
    derive_kinematics,
    detect_outliers,
    low_pass_filter,
    reconstruct,
    spline_interpolate,
)
from .synthetic import (
    GenerationResult,
    GeneratorKind,
    GeneratorSpec,
    LeaderProfile,
    generate,
    inject_spikes,
)
from .trajectory_io import (
    FollowerLeaderSeries,
    SeriesStats,
    TrajectorySample,
    VehicleClass,
    VehicleTrack,
    extract_pair,
    parse_trajectory_csv,
    summarize,
    write_trajectory_csv,
)
from .tree import RegressionTree, fit_tree, predict_tree

__all__ = [
    "CarFollowError",
    "CarFollowingInstance",
    "ComparisonReport",
    "FoldPlan",
    "FollowerLeaderSeries",
    "GbrtConfig",
    "GbrtModel",
    "GenerationResult",
    "GeneratorKind",
    "GeneratorSpec",
    "GhrParameters",
    "GridReport",
    "InstanceSet",
    "LeaderProfile",
    "ModelKind",
    "ReconstructedTrack",
    "ReconstructionConfig",
    "RegressionTree",
    "SeriesStats",
    "TauSweepReport",
    "TrajectorySample",
    "VehicleClass",
    "VehicleTrack",
    "build_instances",
    "calibrate_ghr",
    "compare_models",
    "contiguous_folds",
    "cross_validate",
    "cross_validate_ghr",
    "derive_kinematics",
    "detect_outliers",
    "extract_pair",
    "fit_gbrt",
    "fit_tree",
    "generate",
    "ghr_objective",
    "ghr_predict",
    "grid_search_nu_m",
    "inject_spikes",
    "line_search_beta",
    "low_pass_filter",
    "mse",
    "parse_trajectory_csv",
    "predict",
    "predict_tree",
    "reconstruct",
    "spline_interpolate",
    "split_train_test",
    "staged_predict",
    "summarize",
    "sweep_depth",
    "sweep_tau",
    "write_trajectory_csv",
]
