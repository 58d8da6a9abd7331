"""Pinhole camera rays, rigid poses, and the NDC ray remapping.

Camera convention: camera looks along -z in its own frame, x right, y up.
Pixel (px, py) casts a ray through its center (px + 0.5, py + 0.5).
Camera-ray directions are deliberately left unnormalized (z component is -1
in the camera frame) so that the ray parameter t equals metric depth along
the optical axis; the NDC algebra depends on this.

All geometry runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with a single focal length in pixels."""

    width_px: int
    height_px: int
    focal_px: float

    def __post_init__(self):
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError(
                f"image size must be >= 1x1, got {self.width_px}x{self.height_px}"
            )
        if not self.focal_px > 0:
            raise ValueError(f"focal_px must be positive, got {self.focal_px}")


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform: x_world = rotation @ x_cam + translation."""

    rotation: np.ndarray  # (3, 3) orthonormal, det +1
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError(f"bad pose shapes: {r.shape}, {t.shape}")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1 within 1e-9")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """Full 4x4 camera-to-world matrix with bottom row (0, 0, 0, 1)."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected 4x4 matrix, got {m.shape}")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
            raise ValueError(f"bottom row must be (0,0,0,1), got {m[3]}")
        return Pose(m[:3, :3], m[:3, 3])


@dataclass
class Ray:
    """r(t) = origin + t * direction, integrated over t in [t_near, t_far]."""

    origin: np.ndarray  # (3,)
    direction: np.ndarray  # (3,), nonzero, not necessarily unit
    t_near: float
    t_far: float

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        if np.linalg.norm(self.direction) == 0.0:
            raise ValueError("ray direction must be nonzero")
        if not (self.t_near >= 0.0 and self.t_far > self.t_near):
            raise ValueError(
                f"need 0 <= t_near < t_far, got [{self.t_near}, {self.t_far}]"
            )


def generate_ray(intrinsics: CameraIntrinsics, pose: Pose, px: float, py: float,
                 t_near: float = 0.0, t_far: float = np.inf) -> Ray:
    """Cast the world-space ray through pixel center (px + 0.5, py + 0.5)."""
    if not (0 <= px < intrinsics.width_px and 0 <= py < intrinsics.height_px):
        raise ValueError(
            f"pixel ({px}, {py}) outside {intrinsics.width_px}x{intrinsics.height_px}"
        )
    d_cam = np.array([
        (px + 0.5 - intrinsics.width_px / 2.0) / intrinsics.focal_px,
        -(py + 0.5 - intrinsics.height_px / 2.0) / intrinsics.focal_px,
        -1.0,
    ])
    return Ray(pose.translation.copy(), pose.rotation @ d_cam, t_near, t_far)


def generate_rays_grid(intrinsics: CameraIntrinsics, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """All per-pixel rays of one image.

    Returns (origins, directions), each (H, W, 3), row-major in (py, px).
    """
    w, h, f = intrinsics.width_px, intrinsics.height_px, intrinsics.focal_px
    px, py = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    d_cam = np.stack([
        (px + 0.5 - w / 2.0) / f,
        -(py + 0.5 - h / 2.0) / f,
        -np.ones_like(px),
    ], axis=-1)
    dirs = d_cam @ pose.rotation.T
    origins = np.broadcast_to(pose.translation, dirs.shape).copy()
    return origins, dirs


@dataclass(frozen=True)
class NdcContext:
    """Constants of the perspective projection used for the NDC remapping.

    The projected point is (a_x * x/z, a_y * y/z, a_z + b_z / z).  With the
    far bound at infinity, a_z = 1 and b_z = 2 * near exactly.
    """

    near: float
    a_x: float
    a_y: float
    a_z: float
    b_z: float

    def __post_init__(self):
        if not self.near > 0:
            raise ValueError(f"near must be positive, got {self.near}")

    @staticmethod
    def from_intrinsics(intrinsics: CameraIntrinsics, near: float,
                        far: float = np.inf) -> "NdcContext":
        a_x = -intrinsics.focal_px / (intrinsics.width_px / 2.0)
        a_y = -intrinsics.focal_px / (intrinsics.height_px / 2.0)
        if np.isinf(far):
            a_z, b_z = 1.0, 2.0 * near
        else:
            a_z = (far + near) / (far - near)
            b_z = 2.0 * far * near / (far - near)
        return NdcContext(near, a_x, a_y, a_z, b_z)

    def projection_matrix(self) -> np.ndarray:
        """The 4x4 homogeneous projection matrix equivalent to this context.

        Only well-defined for contexts built from intrinsics with a finite
        far plane; the infinite-far case is the limit f -> inf.
        """
        # a_x = -n/r  =>  n/r = -a_x, and similarly for a_y.
        m = np.zeros((4, 4))
        m[0, 0] = -self.a_x
        m[1, 1] = -self.a_y
        m[2, 2] = -self.a_z
        m[2, 3] = -self.b_z
        m[3, 2] = -1.0
        return m


def project_ndc_point(p: np.ndarray, ctx: NdcContext) -> np.ndarray:
    """Perspective-project point(s) in front of the camera into NDC.

    Accepts shape (3,) or (N, 3); requires all z < 0.
    """
    p = np.asarray(p, dtype=np.float64)
    z = p[..., 2]
    if np.any(z >= 0):
        raise ValueError("point is behind or on the camera plane (z >= 0)")
    return np.stack([
        ctx.a_x * p[..., 0] / z,
        ctx.a_y * p[..., 1] / z,
        ctx.a_z + ctx.b_z / z,
    ], axis=-1)


def ndc_convert(ray: Ray, intrinsics: CameraIntrinsics, near: float) -> Ray:
    """Remap a camera-facing ray into NDC space with t' in [0, 1].

    The origin is first slid along the ray to the near plane z = -near, so
    sampling t' linearly in [0, 1] covers depth linearly in disparity from
    near to infinity.
    """
    o, d = ndc_convert_batch(ray.origin[None], ray.direction[None], intrinsics, near)
    return Ray(o[0], d[0], 0.0, 1.0)


def ndc_convert_batch(origins: np.ndarray, directions: np.ndarray,
                      intrinsics: CameraIntrinsics, near: float
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized `ndc_convert` over (N, 3) origins/directions."""
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    if np.any(directions[..., 2] >= 0):
        raise ValueError("ray does not face the camera -z direction (d_z >= 0)")
    if not near > 0:
        raise ValueError(f"near must be positive, got {near}")
    ctx = NdcContext.from_intrinsics(intrinsics, near)

    # Slide each origin to its intersection with the near plane z = -near.
    t_shift = -(near + origins[..., 2]) / directions[..., 2]
    o = origins + t_shift[..., None] * directions
    ox, oy, oz = o[..., 0], o[..., 1], o[..., 2]
    dx, dy, dz = directions[..., 0], directions[..., 1], directions[..., 2]

    o_ndc = np.stack([
        ctx.a_x * ox / oz,
        ctx.a_y * oy / oz,
        ctx.a_z + ctx.b_z / oz,
    ], axis=-1)
    d_ndc = np.stack([
        ctx.a_x * (dx / dz - ox / oz),
        ctx.a_y * (dy / dz - oy / oz),
        -ctx.b_z / oz,
    ], axis=-1)
    return o_ndc, d_ndc


def ndc_t_prime(t: np.ndarray, o_z: float, d_z: float) -> np.ndarray:
    """Parameter correspondence t -> t' for a near-plane-shifted ray."""
    t = np.asarray(t, dtype=np.float64)
    return 1.0 - o_z / (o_z + t * d_z)
