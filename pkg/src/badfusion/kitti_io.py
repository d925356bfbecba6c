"""Dataset I/O for the KITTI 3D-detection layout.

Parses and writes the four per-frame artifacts (velodyne point cloud,
calibration, camera image, object labels) and manages the train/validation
split.

Coordinate frames (dataset convention):
    Camera:   x-right, y-down, z-forward
    Velodyne: x-forward, y-left, z-up

Directory layout, mirrored on output so a poisoned dataset is a drop-in
replacement for the clean one:

    root/
      velodyne/<frame_id>.bin     raw little-endian float32 (x, y, z, refl)
      calib/<frame_id>.txt        "KEY: v1 v2 ..." text lines
      image_2/<frame_id>.png      8-bit RGB PNG
      label_2/<frame_id>.txt      15 whitespace-separated fields per object
      ImageSets/train.txt, val.txt
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .errors import (
    IoError,
    MissingArtifact,
    MissingKey,
    MissingSplitFile,
    NonFiniteValue,
    OverlappingSplit,
    ParseError,
    TruncatedFile,
    WrongArity,
)

POINT_RECORD_BYTES = 16  # 4 float32 per LiDAR return

CALIB_KEYS = {"P2": 12, "R0_rect": 9, "Tr_velo_to_cam": 12}

LABEL_FIELDS = 15  # class + 14 numeric fields

DONT_CARE = "DontCare"


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class PointCloud:
    """LiDAR returns in the sensor frame.

    ``points`` is an (N, 4) float32 array of (x, y, z, reflectance).
    """

    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float32).reshape(-1, 4)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    def to_bytes(self) -> bytes:
        return np.ascontiguousarray(self.points, dtype="<f4").tobytes()


@dataclass
class CalibrationSet:
    """Projection chain for one frame.

    P2 : (3, 4) camera projection matrix
    R0_rect : (3, 3) rectification rotation
    Tr_velo_to_cam : (3, 4) rigid velodyne-to-camera transform
    """

    P2: np.ndarray
    R0_rect: np.ndarray
    Tr_velo_to_cam: np.ndarray

    def __post_init__(self):
        self.P2 = np.asarray(self.P2, dtype=np.float64).reshape(3, 4)
        self.R0_rect = np.asarray(self.R0_rect, dtype=np.float64).reshape(3, 3)
        self.Tr_velo_to_cam = np.asarray(
            self.Tr_velo_to_cam, dtype=np.float64
        ).reshape(3, 4)

    def validate(self, tol: float = 1e-3) -> None:
        """Check rotation-block invariants; raise ParseError on violation."""
        eye_err = np.abs(self.R0_rect @ self.R0_rect.T - np.eye(3)).max()
        if eye_err > tol:
            raise ParseError(
                f"R0_rect is not orthonormal (max |R R^T - I| = {eye_err:.2e})"
            )
        det = float(np.linalg.det(self.Tr_velo_to_cam[:, :3]))
        if abs(det - 1.0) > tol:
            raise ParseError(
                f"Tr_velo_to_cam rotation block has determinant {det:.6f}, expected 1"
            )

    def rect_4x4(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.R0_rect
        return m

    def velo_to_cam_4x4(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :] = self.Tr_velo_to_cam
        return m


class Difficulty(Enum):
    EASY = "Easy"
    MODERATE = "Moderate"
    HARD = "Hard"
    IGNORED = "Ignored"


@dataclass
class ObjectLabel:
    """One annotated object, 3D pose in the camera frame.

    ``dims`` is (h, w, l) in meters, ``loc`` the (x, y, z) of the box bottom
    center in camera coordinates, ``bbox2d`` the (left, top, right, bottom)
    image-plane box in pixels.
    """

    class_name: str
    truncation: float
    occlusion: int
    alpha: float
    bbox2d: tuple[float, float, float, float]
    dims: tuple[float, float, float]
    loc: tuple[float, float, float]
    rotation_y: float
    score: float | None = None

    @property
    def bbox_height(self) -> float:
        return self.bbox2d[3] - self.bbox2d[1]

    @property
    def is_car(self) -> bool:
        return self.class_name == "Car"

    def to_line(self) -> str:
        """Serialize with the fixed 2-decimal formatting convention."""
        nums = [self.alpha, *self.bbox2d, *self.dims, *self.loc, self.rotation_y]
        parts = [self.class_name, f"{self.truncation:.2f}", str(self.occlusion)]
        parts += [f"{v:.2f}" for v in nums]
        if self.score is not None:
            parts.append(f"{self.score:.4f}")
        return " ".join(parts)


@dataclass
class CameraImage:
    """8-bit RGB raster, ``pixels`` shaped (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("CameraImage expects an (h, w, 3) uint8 array")
        if self.pixels.shape[0] <= 0 or self.pixels.shape[1] <= 0:
            raise ValueError("image dimensions must be positive")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return (self.width, self.height)

    def copy(self) -> "CameraImage":
        return CameraImage(self.pixels.copy())


@dataclass
class FrameBundle:
    """One synchronized sample: cloud + calibration + image + labels."""

    frame_id: str
    cloud: PointCloud
    calib: CalibrationSet
    image: CameraImage
    labels: list[ObjectLabel]


@dataclass
class DatasetIndex:
    """Root path plus the disjoint train / validation frame-id lists."""

    root: Path
    train_ids: list[str]
    valid_ids: list[str] = field(default_factory=list)

    def all_ids(self) -> list[str]:
        return list(self.train_ids) + list(self.valid_ids)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def parse_velodyne(data: bytes) -> PointCloud:
    """Decode a raw velodyne buffer into a point cloud.

    Each 16-byte record is four little-endian IEEE-754 singles:
    x, y, z (meters, sensor frame) and reflectance.
    """
    if len(data) % POINT_RECORD_BYTES != 0:
        raise TruncatedFile(
            f"point cloud buffer is {len(data)} bytes, "
            f"not a multiple of {POINT_RECORD_BYTES}"
        )
    arr = np.frombuffer(data, dtype="<f4").reshape(-1, 4).copy()
    if arr.size and not np.isfinite(arr).all():
        raise NonFiniteValue("point cloud contains NaN or Inf values")
    return PointCloud(arr)


def parse_calib(text: str) -> CalibrationSet:
    """Parse "KEY: v1 v2 ..." calibration text.

    Requires P2 (12 values), R0_rect (9) and Tr_velo_to_cam (12); any other
    keys are ignored.
    """
    found: dict[str, np.ndarray] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or ":" not in line:
            continue
        key, rest = line.split(":", 1)
        key = key.strip()
        if key not in CALIB_KEYS:
            continue
        fields = rest.split()
        if len(fields) != CALIB_KEYS[key]:
            raise WrongArity(
                f"calibration key {key} has {len(fields)} values, "
                f"expected {CALIB_KEYS[key]}"
            )
        try:
            found[key] = np.array([float(f) for f in fields], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"calibration key {key}: {exc}") from exc
    for key in CALIB_KEYS:
        if key not in found:
            raise MissingKey(f"calibration text lacks required key {key!r}")
    return CalibrationSet(
        P2=found["P2"], R0_rect=found["R0_rect"], Tr_velo_to_cam=found["Tr_velo_to_cam"]
    )


def parse_labels(text: str) -> list[ObjectLabel]:
    """Parse a label file: one object per non-empty line, 15+ fields.

    DontCare rows are preserved with class_name "DontCare"; a 16th field,
    when present, is read as a detection score.
    """
    labels: list[ObjectLabel] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < LABEL_FIELDS:
            raise WrongArity(
                f"label line {lineno} has {len(fields)} fields, "
                f"expected at least {LABEL_FIELDS}"
            )
        try:
            nums = [float(f) for f in fields[1:LABEL_FIELDS]]
        except ValueError as exc:
            raise ParseError(f"label line {lineno}: {exc}") from exc
        score = None
        if len(fields) > LABEL_FIELDS:
            try:
                score = float(fields[LABEL_FIELDS])
            except ValueError as exc:
                raise ParseError(f"label line {lineno}: {exc}") from exc
        labels.append(
            ObjectLabel(
                class_name=fields[0],
                truncation=nums[0],
                occlusion=int(nums[1]),
                alpha=nums[2],
                bbox2d=(nums[3], nums[4], nums[5], nums[6]),
                dims=(nums[7], nums[8], nums[9]),
                loc=(nums[10], nums[11], nums[12]),
                rotation_y=nums[13],
                score=score,
            )
        )
    return labels


def classify_difficulty(label: ObjectLabel) -> Difficulty:
    """Standard difficulty tiers from bbox height, occlusion and truncation.

    Easy:     height >= 40 px, occlusion 0, truncation <= 0.15
    Moderate: height >= 25 px, occlusion <= 1, truncation <= 0.30
    Hard:     height >= 25 px, occlusion <= 2, truncation <= 0.50
    Anything else (including DontCare rows) is Ignored.
    """
    if label.class_name == DONT_CARE:
        return Difficulty.IGNORED
    h = label.bbox_height
    if h >= 40 and label.occlusion == 0 and label.truncation <= 0.15:
        return Difficulty.EASY
    if h >= 25 and 0 <= label.occlusion <= 1 and label.truncation <= 0.30:
        return Difficulty.MODERATE
    if h >= 25 and 0 <= label.occlusion <= 2 and label.truncation <= 0.50:
        return Difficulty.HARD
    return Difficulty.IGNORED


# ---------------------------------------------------------------------------
# frame and split management
# ---------------------------------------------------------------------------

def frame_paths(root: Path, frame_id: str) -> dict[str, Path]:
    root = Path(root)
    return {
        "velodyne": root / "velodyne" / f"{frame_id}.bin",
        "calib": root / "calib" / f"{frame_id}.txt",
        "image": root / "image_2" / f"{frame_id}.png",
        "label": root / "label_2" / f"{frame_id}.txt",
    }


def load_image(path: Path) -> CameraImage:
    with Image.open(path) as im:
        return CameraImage(np.asarray(im.convert("RGB"), dtype=np.uint8))


def save_image(image: CameraImage, path: Path) -> None:
    try:
        Image.fromarray(image.pixels, mode="RGB").save(path)
    except OSError as exc:
        raise IoError(f"failed writing image {path}: {exc}") from exc


def load_frame(index: DatasetIndex, frame_id: str) -> FrameBundle:
    """Load all four artifacts of one frame and validate consistency."""
    paths = frame_paths(index.root, frame_id)
    for kind, path in paths.items():
        if not path.is_file():
            raise MissingArtifact(f"frame {frame_id}: missing {kind} file {path}")
    cloud = parse_velodyne(paths["velodyne"].read_bytes())
    calib = parse_calib(paths["calib"].read_text())
    calib.validate()
    image = load_image(paths["image"])
    labels = parse_labels(paths["label"].read_text())
    return FrameBundle(
        frame_id=frame_id, cloud=cloud, calib=calib, image=image, labels=labels
    )


def _read_split_file(path: Path) -> list[str]:
    if not path.is_file():
        raise MissingSplitFile(f"split file not found: {path}")
    ids = [line.strip() for line in path.read_text().splitlines() if line.strip()]
    return ids


def split_dataset(root: Path, split_spec: str | Path = "paper-default") -> DatasetIndex:
    """Build the train/validation index.

    ``split_spec`` is either "paper-default" (reads root/ImageSets/train.txt
    and val.txt) or a directory containing those two files.
    """
    root = Path(root)
    split_dir = root / "ImageSets" if split_spec == "paper-default" else Path(split_spec)
    train_ids = _read_split_file(split_dir / "train.txt")
    valid_ids = _read_split_file(split_dir / "val.txt")
    overlap = set(train_ids) & set(valid_ids)
    if overlap:
        sample = sorted(overlap)[:5]
        raise OverlappingSplit(
            f"{len(overlap)} frame ids appear in both splits (e.g. {sample})"
        )
    return DatasetIndex(root=root, train_ids=train_ids, valid_ids=valid_ids)


# ---------------------------------------------------------------------------
# writing
# ---------------------------------------------------------------------------

def format_calib(calib: CalibrationSet) -> str:
    def row(name, mat):
        return name + ": " + " ".join(repr(float(v)) for v in mat.reshape(-1))

    return "\n".join(
        [
            row("P2", calib.P2),
            row("R0_rect", calib.R0_rect),
            row("Tr_velo_to_cam", calib.Tr_velo_to_cam),
        ]
    ) + "\n"


def format_labels(labels: Sequence[ObjectLabel]) -> str:
    return "".join(label.to_line() + "\n" for label in labels)


def ensure_layout(out_root: Path) -> None:
    for sub in ("velodyne", "calib", "image_2", "label_2"):
        (Path(out_root) / sub).mkdir(parents=True, exist_ok=True)


def write_frame(frame: FrameBundle, out_root: Path) -> None:
    """Write one frame's four files under the standard layout."""
    out_root = Path(out_root)
    paths = frame_paths(out_root, frame.frame_id)
    try:
        ensure_layout(out_root)
        paths["velodyne"].write_bytes(frame.cloud.to_bytes())
        paths["calib"].write_text(format_calib(frame.calib))
        paths["label"].write_text(format_labels(frame.labels))
        save_image(frame.image, paths["image"])
    except OSError as exc:
        raise IoError(f"failed writing frame {frame.frame_id} to {out_root}: {exc}") from exc


def write_dataset(frames: Sequence[FrameBundle], out_root: Path) -> None:
    """Materialize frames on disk; point clouds round-trip bit-identically,
    labels field-equal under the 2-decimal formatting rule."""
    for frame in frames:
        write_frame(frame, out_root)


def copy_frame_files(src_root: Path, dst_root: Path, frame_id: str) -> None:
    """Byte-for-byte copy of one frame's artifacts (used for clean frames)."""
    src = frame_paths(src_root, frame_id)
    dst = frame_paths(dst_root, frame_id)
    try:
        ensure_layout(dst_root)
        for kind in src:
            shutil.copyfile(src[kind], dst[kind])
    except FileNotFoundError as exc:
        raise MissingArtifact(f"frame {frame_id}: {exc}") from exc
    except OSError as exc:
        raise IoError(f"failed copying frame {frame_id}: {exc}") from exc


def copy_split_files(src_root: Path, dst_root: Path) -> None:
    src = Path(src_root) / "ImageSets"
    dst = Path(dst_root) / "ImageSets"
    if src.is_dir():
        dst.mkdir(parents=True, exist_ok=True)
        for name in ("train.txt", "val.txt"):
            if (src / name).is_file():
                shutil.copyfile(src / name, dst / name)


def transformed_copy(label: ObjectLabel, **changes) -> ObjectLabel:
    return replace(label, **changes)
