"""Input-space defense transforms for robustness analysis.

Gaussian pixel noise and JPEG re-compression are the classic cheap
countermeasures against image-space triggers. Both operate on camera images
only; a defended dataset keeps its point clouds, calibration, and labels
byte-identical so detector training pipelines see the same 3D inputs.
"""

from __future__ import annotations

import io
import shutil
import zlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import CodecFailure, IoError
from .kitti_io import CameraImage, copy_split_files, ensure_layout, frame_paths, load_image, save_image
from .poisoning import _run_tasks


class DefenseKind(Enum):
    GAUSSIAN_NOISE = "gaussian_noise"
    JPEG_COMPRESS = "jpeg_compress"


@dataclass(frozen=True)
class DefenseSpec:
    kind: DefenseKind
    noise_max: int = 0        # per-pixel amplitude bound, 0..255
    jpeg_quality: int = 100   # 1..100
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.noise_max <= 255:
            raise ValueError(f"noise_max must be in [0, 255], got {self.noise_max}")
        if not 1 <= self.jpeg_quality <= 100:
            raise ValueError(f"jpeg_quality must be in [1, 100], got {self.jpeg_quality}")


def frame_rng(spec: DefenseSpec, frame_id: str) -> np.random.Generator:
    """Independent per-frame stream so parallel order cannot change outputs."""
    try:
        fid = int(frame_id)
    except ValueError:
        fid = zlib.crc32(frame_id.encode())
    return np.random.default_rng([spec.rng_seed, fid])


def gaussian_noise(
    image: CameraImage, spec: DefenseSpec, rng: np.random.Generator | None = None
) -> CameraImage:
    """Additive zero-mean Gaussian noise with a hard amplitude bound.

    The noise level sets both the scale (sigma = noise_max / 3) and the
    clamp (+/- noise_max before the usual [0, 255] pixel clamp), so
    |output - input| <= noise_max holds per channel everywhere.
    """
    if spec.kind is not DefenseKind.GAUSSIAN_NOISE:
        raise ValueError(f"spec kind is {spec.kind.value}, expected gaussian_noise")
    if spec.noise_max == 0:
        return image.copy()
    if rng is None:
        rng = np.random.default_rng(spec.rng_seed)
    noise = rng.normal(0.0, spec.noise_max / 3.0, size=image.pixels.shape)
    noise = np.clip(noise, -spec.noise_max, spec.noise_max)
    noisy = np.rint(image.pixels.astype(np.float64) + noise)
    return CameraImage(np.clip(noisy, 0, 255).astype(np.uint8))


def jpeg_compress(image: CameraImage, spec: DefenseSpec) -> CameraImage:
    """Round-trip the image through baseline JPEG at the configured quality."""
    if spec.kind is not DefenseKind.JPEG_COMPRESS:
        raise ValueError(f"spec kind is {spec.kind.value}, expected jpeg_compress")
    try:
        buf = io.BytesIO()
        Image.fromarray(image.pixels, mode="RGB").save(
            buf, format="JPEG", quality=spec.jpeg_quality
        )
        buf.seek(0)
        with Image.open(buf) as decoded:
            pixels = np.asarray(decoded.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise CodecFailure(f"JPEG round-trip failed: {exc}") from exc
    if pixels.shape != image.pixels.shape:
        raise CodecFailure(
            f"codec changed image shape {image.pixels.shape} -> {pixels.shape}"
        )
    return CameraImage(pixels)


def defend_image(image: CameraImage, spec: DefenseSpec, frame_id: str) -> CameraImage:
    if spec.kind is DefenseKind.GAUSSIAN_NOISE:
        return gaussian_noise(image, spec, rng=frame_rng(spec, frame_id))
    return jpeg_compress(image, spec)


def _defend_frame(args) -> None:
    root, out_root, frame_id, spec = args
    src = frame_paths(Path(root), frame_id)
    dst = frame_paths(Path(out_root), frame_id)
    try:
        for kind in ("velodyne", "calib", "label"):
            shutil.copyfile(src[kind], dst[kind])
    except FileNotFoundError as exc:
        raise IoError(f"frame {frame_id}: {exc}") from exc
    save_image(defend_image(load_image(src["image"]), spec, frame_id), dst["image"])


def dataset_frame_ids(root: Path) -> list[str]:
    return sorted(p.stem for p in (Path(root) / "image_2").glob("*.png"))


def apply_defense(
    dataset_root: Path,
    spec: DefenseSpec,
    out_root: Path,
    jobs: int = 1,
) -> int:
    """Transform every camera image under the root; copy everything else.

    Returns the number of frames written. Output keeps the input layout so
    the defended dataset is a drop-in replacement.
    """
    root, out_root = Path(dataset_root), Path(out_root)
    frame_ids = dataset_frame_ids(root)
    ensure_layout(out_root)
    tasks = [(str(root), str(out_root), fid, spec) for fid in frame_ids]
    _run_tasks(_defend_frame, tasks, jobs)
    copy_split_files(root, out_root)
    return len(frame_ids)
