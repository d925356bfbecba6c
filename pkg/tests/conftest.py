import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from badfusion.kitti_io import (
    CameraImage,
    FrameBundle,
    ObjectLabel,
    PointCloud,
    write_frame,
)
from badfusion.synth import build_dataset, build_frame, make_calib

settings.register_profile(
    "suite", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def synth_index(tmp_path_factory):
    """Small shared dataset; tests that mutate must copy it first."""
    root = tmp_path_factory.mktemp("synth_ds")
    return build_dataset(root, n_train=12, n_val=4, seed=42)


@pytest.fixture(scope="session")
def synth_frame():
    return build_frame("000003", seed=42)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def make_label(**overrides) -> ObjectLabel:
    """A plain Easy car; fields overridable per test."""
    base = dict(
        class_name="Car",
        truncation=0.0,
        occlusion=0,
        alpha=0.1,
        bbox2d=(100.0, 60.0, 180.0, 120.0),
        dims=(1.5, 1.6, 4.0),
        loc=(1.0, 1.2, 12.0),
        rotation_y=0.2,
    )
    base.update(overrides)
    return ObjectLabel(**base)


def write_no_point_frame(root, frame_id: str, seed: int = 5):
    """A frame whose cars have zero LiDAR returns (cloud emptied entirely;
    leaving ground points is not enough, they project into the 2D boxes)."""
    frame = build_frame(frame_id, seed=seed, n_cars=1)
    bare = FrameBundle(
        frame_id=frame_id,
        cloud=PointCloud(np.empty((0, 4), dtype=np.float32)),
        calib=frame.calib,
        image=frame.image,
        labels=frame.labels,
    )
    write_frame(bare, root)
    return bare
