"""Analytic radiance fields: closed-form (sigma, rgb) scene descriptions.

These stand in for a trained network when testing the renderer and when
generating synthetic ground-truth datasets.  All primitives use smooth
(smoothstep-edged) density profiles so quadrature converges quickly, keep
sigma >= 0 everywhere, and emit rgb in [0, 1]^3.

Every field is vectorized: sample(x, d) takes (N, 3) positions and (N, 3)
viewing directions and returns a FieldSample with (N,) sigma and (N, 3) rgb.
"""

from __future__ import annotations

import numpy as np

from nerfkit.network import FieldSample


def smoothstep(x: np.ndarray) -> np.ndarray:
    """Cubic ramp: 0 below 0, 1 above 1, C1-continuous in between."""
    t = np.clip(x, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


class AnalyticField:
    def sample(self, x: np.ndarray, d: np.ndarray) -> FieldSample:
        raise NotImplementedError

    def __add__(self, other: "AnalyticField") -> "SumField":
        return SumField([self, other])


class EmptyField(AnalyticField):
    def sample(self, x, d):
        x = np.atleast_2d(x)
        return FieldSample(rgb=np.zeros((x.shape[0], 3)), sigma=np.zeros(x.shape[0]))


class HomogeneousField(AnalyticField):
    """Constant density and color everywhere (infinite medium)."""

    def __init__(self, sigma: float, color):
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.sigma = float(sigma)
        self.color = np.asarray(color, dtype=np.float64)

    def sample(self, x, d):
        x = np.atleast_2d(x)
        n = x.shape[0]
        return FieldSample(rgb=np.broadcast_to(self.color, (n, 3)).copy(),
                           sigma=np.full(n, self.sigma))


class SlabField(AnalyticField):
    """Constant-color slab z in [z_lo, z_hi] with smoothstep edges."""

    def __init__(self, z_lo: float, z_hi: float, sigma: float, color,
                 edge: float = 0.05):
        self.z_lo, self.z_hi = float(z_lo), float(z_hi)
        self.sigma = float(sigma)
        self.color = np.asarray(color, dtype=np.float64)
        self.edge = float(edge)

    def sample(self, x, d):
        x = np.atleast_2d(x)
        z = x[:, 2]
        s = (smoothstep((z - self.z_lo) / self.edge)
             * smoothstep((self.z_hi - z) / self.edge))
        sigma = self.sigma * s
        return FieldSample(rgb=np.broadcast_to(self.color, (x.shape[0], 3)).copy(),
                           sigma=sigma)


class GaussianBlobField(AnalyticField):
    """Isotropic Gaussian density bump with a fixed color."""

    def __init__(self, center, peak_sigma: float, scale: float, color):
        self.center = np.asarray(center, dtype=np.float64)
        self.peak_sigma = float(peak_sigma)
        self.scale = float(scale)
        self.color = np.asarray(color, dtype=np.float64)

    def sample(self, x, d):
        x = np.atleast_2d(x)
        r2 = np.sum((x - self.center) ** 2, axis=1)
        sigma = self.peak_sigma * np.exp(-0.5 * r2 / self.scale ** 2)
        return FieldSample(rgb=np.broadcast_to(self.color, (x.shape[0], 3)).copy(),
                           sigma=sigma)


class SphereField(AnalyticField):
    """Soft-edged solid sphere, optionally with a view-dependent specular lobe.

    The specular term brightens points when the (reversed) viewing direction
    aligns with a fixed lobe direction, emulating a glossy highlight that
    moves with the camera; it makes rgb a genuine function of d.
    """

    def __init__(self, center, radius: float, sigma: float, color,
                 edge: float = 0.08, specular_color=None,
                 lobe_direction=(0.5, -0.5, 0.7), shininess: float = 8.0):
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)
        self.sigma = float(sigma)
        self.color = np.asarray(color, dtype=np.float64)
        self.edge = float(edge)
        if specular_color is None:
            self.specular_color = None
        else:
            self.specular_color = np.asarray(specular_color, dtype=np.float64)
            lobe = np.asarray(lobe_direction, dtype=np.float64)
            self.lobe_direction = lobe / np.linalg.norm(lobe)
            self.shininess = float(shininess)

    def sample(self, x, d):
        x = np.atleast_2d(x)
        d = np.atleast_2d(d)
        r = np.linalg.norm(x - self.center, axis=1)
        sigma = self.sigma * smoothstep((self.radius - r) / self.edge)
        rgb = np.broadcast_to(self.color, (x.shape[0], 3)).copy()
        if self.specular_color is not None:
            d_unit = d / np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-12)
            align = np.maximum(0.0, -d_unit @ self.lobe_direction)
            rgb = rgb + (align ** self.shininess)[:, None] * self.specular_color
        return FieldSample(rgb=np.clip(rgb, 0.0, 1.0), sigma=sigma)


class SumField(AnalyticField):
    """Densities add; color is the density-weighted mix of part colors."""

    def __init__(self, parts: list[AnalyticField]):
        self.parts = list(parts)

    def sample(self, x, d):
        x = np.atleast_2d(x)
        sigma_total = np.zeros(x.shape[0])
        weighted = np.zeros((x.shape[0], 3))
        for part in self.parts:
            fs = part.sample(x, d)
            sigma_total += fs.sigma
            weighted += fs.sigma[:, None] * fs.rgb
        rgb = weighted / np.maximum(sigma_total, 1e-30)[:, None]
        rgb[sigma_total <= 1e-30] = 0.0
        return FieldSample(rgb=np.clip(rgb, 0.0, 1.0), sigma=sigma_total)


def two_slab_field() -> AnalyticField:
    """Front reddish near-opaque slab, back blue slab (for occlusion checks)."""
    return SumField([
        SlabField(0.3, 0.7, sigma=8.0, color=(0.9, 0.1, 0.1)),
        SlabField(-0.7, -0.3, sigma=8.0, color=(0.1, 0.1, 0.9)),
    ])


def make_preset(name: str) -> AnalyticField:
    presets = {
        "empty": lambda: EmptyField(),
        "homogeneous": lambda: HomogeneousField(2.0, (1.0, 0.4, 0.2)),
        "two-slab": two_slab_field,
        "blob": lambda: GaussianBlobField((0.0, 0.0, 0.0), 12.0, 0.35,
                                          (0.2, 0.8, 0.3)),
        "specular-sphere": lambda: SphereField(
            (0.0, 0.0, 0.0), 0.6, 20.0, (0.6, 0.2, 0.2),
            specular_color=(0.4, 0.4, 0.4)),
        "blob-specular-sphere": lambda: SumField([
            GaussianBlobField((-0.45, 0.35, 0.25), 14.0, 0.22, (0.2, 0.7, 0.95)),
            SphereField((0.35, -0.25, -0.15), 0.5, 22.0, (0.7, 0.25, 0.1),
                        specular_color=(0.35, 0.35, 0.35)),
        ]),
    }
    if name not in presets:
        raise KeyError(f"unknown field preset {name!r}; "
                       f"choose from {sorted(presets)}")
    return presets[name]()


PRESET_NAMES = ("empty", "homogeneous", "two-slab", "blob",
                "specular-sphere", "blob-specular-sphere")
