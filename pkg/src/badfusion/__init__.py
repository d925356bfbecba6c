"""Fusion-aware 2D-trigger backdoor toolkit for LiDAR-camera 3D detection.

Builds poisoned KITTI-layout datasets whose image-space triggers are placed
where projected LiDAR points actually sample the camera, measures how many
trigger pixels survive the fusion transformation, and scores attack success
from external detector result files.
"""

__version__ = "0.1.0"

from .defenses import DefenseKind, DefenseSpec, apply_defense, gaussian_noise, jpeg_compress
from .densepred import PredictionSet, RegionRecord, load_prediction_file
from .errors import ParseError, ToolkitError
from .fusion_sim import (
    SurvivalStats,
    compare_placements,
    inference_trigger_sweep,
    survival_histogram,
)
from .kernels import BACKEND as kernel_backend
from .kitti_io import (
    CalibrationSet,
    CameraImage,
    DatasetIndex,
    Difficulty,
    FrameBundle,
    ObjectLabel,
    PointCloud,
    classify_difficulty,
    load_frame,
    split_dataset,
    write_frame,
)
from .metrics import (
    Detection3D,
    EvalReport,
    asr_disappear,
    asr_resizing,
    average_precision,
    evaluate,
    iou_3d,
    iou_bev,
)
from .poisoning import (
    AttackGoal,
    AttackKind,
    PoisonConfig,
    PoisonManifest,
    SelectionKind,
    SelectionSpec,
    export_dense_region_dataset,
    load_manifest,
    poison_dataset,
    replay_manifest,
    select_poison_frames,
    transform_label,
)
from .projection import ProjectedCloud, pixels_in_rect, points_on_vehicle, project_points
from .trigger import (
    DenseRegion,
    PlacementSource,
    TriggerPlacement,
    TriggerSpec,
    composite_trigger,
    find_densest_region,
    make_trigger,
    place_lidar_aware,
    place_lidar_free,
)

__all__ = [
    "__version__",
    "kernel_backend",
    # errors
    "ToolkitError",
    "ParseError",
    # dataset I/O
    "PointCloud",
    "CalibrationSet",
    "ObjectLabel",
    "CameraImage",
    "FrameBundle",
    "DatasetIndex",
    "Difficulty",
    "classify_difficulty",
    "load_frame",
    "write_frame",
    "split_dataset",
    # projection
    "ProjectedCloud",
    "project_points",
    "points_on_vehicle",
    "pixels_in_rect",
    # trigger
    "TriggerSpec",
    "make_trigger",
    "DenseRegion",
    "TriggerPlacement",
    "PlacementSource",
    "find_densest_region",
    "composite_trigger",
    "place_lidar_aware",
    "place_lidar_free",
    # poisoning
    "AttackGoal",
    "AttackKind",
    "PoisonConfig",
    "PoisonManifest",
    "SelectionKind",
    "SelectionSpec",
    "transform_label",
    "select_poison_frames",
    "poison_dataset",
    "replay_manifest",
    "load_manifest",
    "export_dense_region_dataset",
    # survival analysis
    "SurvivalStats",
    "survival_histogram",
    "compare_placements",
    "inference_trigger_sweep",
    # metrics
    "Detection3D",
    "EvalReport",
    "iou_bev",
    "iou_3d",
    "average_precision",
    "asr_resizing",
    "asr_disappear",
    "evaluate",
    # defenses
    "DefenseKind",
    "DefenseSpec",
    "gaussian_noise",
    "jpeg_compress",
    "apply_defense",
    # dense-region interchange
    "RegionRecord",
    "PredictionSet",
    "load_prediction_file",
]
