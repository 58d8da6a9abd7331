"""Datasets: manifest I/O, scene normalization, synthetic ground truth.

On-disk layout: `scene_dir/transforms.json` plus `scene_dir/images/*.png`
(8-bit).  The manifest schema:

    {
      "camera_angle_x": <radians>,
      "frames": [{"file_path": "images/000.png",
                  "transform_matrix": [[...4x4 row-major...]]}],
      "near": <float>, "far": <float or "inf">,
      "mode": "bounded_360" | "forward_facing_ndc",
      "test_indices": [...]          # optional; default: every 8th frame
    }

Pixels load as value/255 (treated as already display-encoded); RGBA images
are composited over the configured background color at load time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from nerfkit.fields import AnalyticField
from nerfkit.geometry import CameraIntrinsics, Pose, generate_rays_grid
from nerfkit.volume import oracle_render_batch

MODES = ("bounded_360", "forward_facing_ndc")


@dataclass
class Dataset:
    images: list[np.ndarray]  # each (H, W, 3) float64 in [0, 1]
    intrinsics: CameraIntrinsics
    poses: list[Pose]
    near: float
    far: float  # may be inf only in forward_facing_ndc mode
    mode: str
    train_indices: list[int]
    test_indices: list[int]

    def __post_init__(self):
        if len(self.images) != len(self.poses):
            raise ValueError("images and poses must pair up")
        shapes = {im.shape for im in self.images}
        if len(shapes) > 1:
            raise ValueError(f"inconsistent image shapes: {shapes}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.near < self.far:
            raise ValueError(f"need near < far, got [{self.near}, {self.far}]")
        if math.isinf(self.far) and self.mode != "forward_facing_ndc":
            raise ValueError("infinite far bound requires forward_facing_ndc mode")

    def __len__(self):
        return len(self.images)


def default_splits(n_frames: int) -> tuple[list[int], list[int]]:
    """Hold out every 8th frame for testing."""
    test = list(range(7, n_frames, 8))
    train = [i for i in range(n_frames) if i not in set(test)]
    return train, test


def load_dataset(manifest_path, background=(1.0, 1.0, 1.0)) -> Dataset:
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{manifest_path}: malformed JSON: {e}") from e
    root = manifest_path.parent

    images, poses = [], []
    background = np.asarray(background, dtype=np.float64)
    for i, frame in enumerate(manifest["frames"]):
        img_path = root / frame["file_path"]
        if not img_path.exists():
            raise FileNotFoundError(f"frame {i}: missing image {img_path}")
        m = np.asarray(frame["transform_matrix"], dtype=np.float64)
        try:
            poses.append(Pose.from_matrix(m))
        except ValueError as e:
            raise ValueError(f"frame {i} ({frame['file_path']}): {e}") from e
        raw = np.asarray(Image.open(img_path), dtype=np.float64) / 255.0
        if raw.ndim == 2:
            raw = np.repeat(raw[:, :, None], 3, axis=2)
        if raw.shape[2] == 4:
            a = raw[:, :, 3:4]
            raw = raw[:, :, :3] * a + background * (1.0 - a)
        images.append(raw[:, :, :3])

    h, w = images[0].shape[:2]
    angle = float(manifest["camera_angle_x"])
    focal = (w / 2.0) / math.tan(angle / 2.0)
    far = manifest.get("far", "inf")
    far = math.inf if far in ("inf", None) else float(far)
    mode = manifest.get("mode", "bounded_360")

    if "test_indices" in manifest:
        test = list(manifest["test_indices"])
        train = [i for i in range(len(images)) if i not in set(test)]
    else:
        train, test = default_splits(len(images))

    return Dataset(
        images=images,
        intrinsics=CameraIntrinsics(w, h, focal),
        poses=poses,
        near=float(manifest["near"]),
        far=far,
        mode=mode,
        train_indices=train,
        test_indices=test,
    )


def save_dataset(dataset: Dataset, scene_dir) -> Path:
    """Write images + manifest; returns the manifest path."""
    scene_dir = Path(scene_dir)
    (scene_dir / "images").mkdir(parents=True, exist_ok=True)
    frames = []
    for i, (img, pose) in enumerate(zip(dataset.images, dataset.poses)):
        rel = f"images/{i:03d}.png"
        arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(arr).save(scene_dir / rel)
        frames.append({
            "file_path": rel,
            "transform_matrix": pose.matrix().tolist(),
        })
    angle = 2.0 * math.atan((dataset.intrinsics.width_px / 2.0)
                            / dataset.intrinsics.focal_px)
    manifest = {
        "camera_angle_x": angle,
        "frames": frames,
        "near": dataset.near,
        "far": "inf" if math.isinf(dataset.far) else dataset.far,
        "mode": dataset.mode,
        "test_indices": dataset.test_indices,
    }
    path = scene_dir / "transforms.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path


def normalize_scene(dataset: Dataset, center=(0.0, 0.0, 0.0),
                    margin: float = 0.9) -> Dataset:
    """Similarity-transform the cameras so they fit the [-1, 1]^3 cube.

    Recenter on `center`, then scale so the farthest camera sits at radius
    margin * sqrt(3) (the cube's corner distance, with slack).  Bounds are
    rescaled by the same factor.  Idempotent up to floating error.
    """
    if dataset.mode != "bounded_360":
        raise ValueError("normalize_scene applies to bounded_360 scenes only")
    center = np.asarray(center, dtype=np.float64)
    positions = np.stack([p.translation for p in dataset.poses]) - center
    max_radius = float(np.max(np.linalg.norm(positions, axis=1)))
    if max_radius < 1e-12:
        raise ValueError("degenerate scene: all cameras coincident with center")
    scale = margin * math.sqrt(3.0) / max_radius
    poses = [Pose(p.rotation, (p.translation - center) * scale)
             for p in dataset.poses]
    return Dataset(
        images=dataset.images,
        intrinsics=dataset.intrinsics,
        poses=poses,
        near=dataset.near * scale,
        far=dataset.far * scale,
        mode=dataset.mode,
        train_indices=list(dataset.train_indices),
        test_indices=list(dataset.test_indices),
    )


def look_at_pose(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera at `eye` looking at `target` (camera -z axis points there)."""
    eye = np.asarray(eye, dtype=np.float64)
    z = eye - np.asarray(target, dtype=np.float64)
    z = z / np.linalg.norm(z)
    up = np.asarray(up, dtype=np.float64)
    x = np.cross(up, z)
    if np.linalg.norm(x) < 1e-9:  # looking straight along up
        x = np.cross((1.0, 0.0, 0.0), z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(np.stack([x, y, z], axis=1), eye)


def sample_view_directions(n: int, rng: np.random.Generator,
                           hemisphere: bool = True) -> np.ndarray:
    """Uniform directions on the (upper-hemi)sphere, shape (n, 3)."""
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    if hemisphere:
        v[:, 2] = np.abs(v[:, 2])
        # Keep cameras off the pole so the up vector stays usable: cap z and
        # push the excess into the horizontal component.
        z_max = 0.98
        high = v[:, 2] > z_max
        if np.any(high):
            xy = v[high, :2]
            xy_norm = np.maximum(np.linalg.norm(xy, axis=1, keepdims=True), 1e-12)
            v[high, :2] = xy / xy_norm * math.sqrt(1.0 - z_max * z_max)
            v[high, 2] = z_max
    return v


def generate_synthetic_dataset(field: AnalyticField, n_views: int,
                               resolution: int, seed: int,
                               hemisphere: bool = True,
                               camera_radius: float = 4.0,
                               camera_angle_x: float = 0.69,
                               n_dense: int = 4096,
                               background=(1.0, 1.0, 1.0),
                               out_dir=None) -> Dataset:
    """Render a ground-truth dataset from an analytic field.

    Poses are sampled uniformly on a radius-`camera_radius` (hemi)sphere
    looking at the origin; every pixel is rendered with the dense-sample
    oracle.  Fully deterministic given the seed.
    """
    if resolution > 256:
        raise ValueError("synthetic resolution is capped at 256 for tractability")
    rng = np.random.default_rng(seed)
    intr = CameraIntrinsics(
        resolution, resolution,
        (resolution / 2.0) / math.tan(camera_angle_x / 2.0))
    near = camera_radius - 1.8
    far = camera_radius + 1.8
    if near <= 0:
        raise ValueError("camera radius too small for the scene bounds")

    dirs = sample_view_directions(n_views, rng, hemisphere=hemisphere)
    poses = [look_at_pose(d * camera_radius) for d in dirs]

    images = []
    for pose in poses:
        origins, raydirs = generate_rays_grid(intr, pose)
        colors = oracle_render_batch(
            field, origins.reshape(-1, 3), raydirs.reshape(-1, 3),
            near, far, n_dense=n_dense, background=background)
        images.append(np.clip(colors.reshape(resolution, resolution, 3), 0.0, 1.0))

    train, test = default_splits(n_views)
    dataset = Dataset(
        images=images,
        intrinsics=intr,
        poses=poses,
        near=near,
        far=far,
        mode="bounded_360",
        train_indices=train,
        test_indices=test,
    )
    # Contract the camera rig into the side-2 cube so sample positions stay
    # inside the positional encoding's natural domain.  The images were
    # rendered above in world units; a global similarity transform of the
    # ray geometry keeps them valid supervision targets.
    dataset = normalize_scene(dataset)
    if out_dir is not None:
        save_dataset(dataset, out_dir)
    return dataset
