"""The radiance-field MLP: forward pass, hand-derived backward pass, Adam.

Architecture (default sizes): the encoded position (60 dims) passes through
8 fully-connected ReLU layers of width 256, with the encoded position
re-concatenated to the activation entering trunk layer 5 (0-based).  From the
trunk output, one linear head produces the raw density (ReLU-rectified, with
optional pre-ReLU Gaussian noise during training) and one linear head a
256-dim feature vector.  The feature, concatenated with the encoded viewing
direction (24 dims), passes through one ReLU layer of width 128 and a final
sigmoid layer producing RGB.  Density never depends on the viewing direction.

All operations are batched: inputs are (N, in_x) / (N, in_d).  Parameters are
plain NumPy arrays in a name->array dict so the optimizer and checkpointing
can treat them uniformly.  float32 is used for training; every code path also
runs in float64 for the gradient-check tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MlpConfig:
    """Layer sizing.  Defaults give the full-scale architecture; tests use
    narrow miniatures with the same topology."""

    in_x: int = 60
    in_d: int = 24
    width: int = 256
    depth: int = 8
    skip_layer: int = 5  # trunk layer whose input is concat(activation, enc_x)
    view_width: int = 128

    def __post_init__(self):
        if self.depth < 1 or self.width < 1 or self.view_width < 1:
            raise ValueError("width/depth must be positive")
        if not (0 < self.skip_layer < self.depth):
            raise ValueError("skip_layer must be an interior trunk layer index")
        if self.in_x < 1 or self.in_d < 0:
            raise ValueError("in_x must be >= 1 and in_d >= 0")

    def trunk_in_dims(self) -> list[int]:
        dims = []
        for i in range(self.depth):
            if i == 0:
                dims.append(self.in_x)
            elif i == self.skip_layer:
                dims.append(self.width + self.in_x)
            else:
                dims.append(self.width)
        return dims

    def layer_shapes(self) -> dict[str, tuple[int, ...]]:
        """Name -> shape for every weight and bias, in a fixed order."""
        shapes: dict[str, tuple[int, ...]] = {}
        for i, d_in in enumerate(self.trunk_in_dims()):
            shapes[f"trunk{i}_w"] = (self.width, d_in)
            shapes[f"trunk{i}_b"] = (self.width,)
        shapes["sigma_w"] = (1, self.width)
        shapes["sigma_b"] = (1,)
        shapes["feature_w"] = (self.width, self.width)
        shapes["feature_b"] = (self.width,)
        shapes["view_w"] = (self.view_width, self.width + self.in_d)
        shapes["view_b"] = (self.view_width,)
        shapes["rgb_w"] = (3, self.view_width)
        shapes["rgb_b"] = (3,)
        return shapes


@dataclass
class MlpParams:
    config: MlpConfig
    arrays: dict[str, np.ndarray]

    @property
    def dtype(self):
        return self.arrays["trunk0_w"].dtype

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def copy(self) -> "MlpParams":
        return MlpParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def astype(self, dtype) -> "MlpParams":
        return MlpParams(self.config,
                         {k: v.astype(dtype) for k, v in self.arrays.items()})


@dataclass
class AdamState:
    """First/second moment estimates, same shapes as the parameters."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step_count: int = 0

    @staticmethod
    def zeros_like(params: MlpParams) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(a) for k, a in params.arrays.items()},
            v={k: np.zeros_like(a) for k, a in params.arrays.items()},
            step_count=0,
        )


@dataclass
class FieldSample:
    """Emitted radiance and density at queried points: rgb (..., 3) in [0, 1],
    sigma (...) >= 0."""

    rgb: np.ndarray
    sigma: np.ndarray


def init_params(config: MlpConfig, seed: int, dtype=np.float32) -> MlpParams:
    """Glorot-uniform weights, zero biases; deterministic given seed."""
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in config.layer_shapes().items():
        if name.endswith("_b"):
            arrays[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_out, fan_in = shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            arrays[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return MlpParams(config, arrays)


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(x):
    # Split form avoids overflow warnings for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def forward(params: MlpParams, enc_x: np.ndarray, enc_d: np.ndarray,
            sigma_noise_std: float = 0.0, rng: np.random.Generator | None = None,
            ) -> tuple[FieldSample, dict]:
    """Evaluate the field at a batch of encoded inputs.

    enc_x: (N, in_x); enc_d: (N, in_d), in_d may be 0.  Noise, if enabled,
    is added to the raw density before the ReLU (training-time regularizer).
    Returns the field sample and the activation cache `backward` needs.
    """
    cfg = params.config
    p = params.arrays
    enc_x = np.atleast_2d(np.asarray(enc_x, dtype=params.dtype))
    enc_d = np.atleast_2d(np.asarray(enc_d, dtype=params.dtype))
    n = enc_x.shape[0]
    if enc_x.shape[1] != cfg.in_x or enc_d.shape[1] != cfg.in_d:
        raise ValueError(
            f"input dims {enc_x.shape[1]}/{enc_d.shape[1]} do not match "
            f"architecture {cfg.in_x}/{cfg.in_d}"
        )

    trunk_inputs = []  # input actually fed to each trunk layer
    trunk_masks = []  # ReLU masks
    h = enc_x
    for i in range(cfg.depth):
        if i == cfg.skip_layer:
            h = np.concatenate([h, enc_x], axis=1)
        trunk_inputs.append(h)
        z = h @ p[f"trunk{i}_w"].T + p[f"trunk{i}_b"]
        mask = z > 0
        trunk_masks.append(mask)
        h = z * mask

    raw_sigma = (h @ p["sigma_w"].T + p["sigma_b"])[:, 0]
    if sigma_noise_std > 0.0:
        if rng is None:
            raise ValueError("sigma noise requires an rng")
        raw_sigma = raw_sigma + rng.normal(
            0.0, sigma_noise_std, size=raw_sigma.shape).astype(params.dtype)
    sigma_mask = raw_sigma > 0
    sigma = raw_sigma * sigma_mask

    feature = h @ p["feature_w"].T + p["feature_b"]
    view_in = np.concatenate([feature, enc_d], axis=1) if cfg.in_d else feature
    view_z = view_in @ p["view_w"].T + p["view_b"]
    view_mask = view_z > 0
    view_h = view_z * view_mask
    rgb = _sigmoid(view_h @ p["rgb_w"].T + p["rgb_b"])

    cache = {
        "n": n,
        "trunk_inputs": trunk_inputs,
        "trunk_masks": trunk_masks,
        "trunk_out": h,
        "sigma_mask": sigma_mask,
        "view_in": view_in,
        "view_mask": view_mask,
        "view_h": view_h,
        "rgb": rgb,
    }
    return FieldSample(rgb=rgb, sigma=sigma), cache


def backward(params: MlpParams, cache: dict, grad_rgb: np.ndarray,
             grad_sigma: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of sum(grad_rgb * rgb) + sum(grad_sigma * sigma) w.r.t.
    every parameter.  ReLU subgradient at 0 is taken as 0."""
    cfg = params.config
    p = params.arrays
    grad_rgb = np.atleast_2d(np.asarray(grad_rgb, dtype=params.dtype))
    grad_sigma = np.atleast_1d(np.asarray(grad_sigma, dtype=params.dtype))
    if grad_rgb.shape != cache["rgb"].shape or grad_sigma.shape[0] != cache["n"]:
        raise ValueError("gradient shapes do not match the cached forward pass")

    g: dict[str, np.ndarray] = {}

    # RGB head (sigmoid).
    rgb = cache["rgb"]
    d_logit = grad_rgb * rgb * (1.0 - rgb)
    g["rgb_w"] = d_logit.T @ cache["view_h"]
    g["rgb_b"] = d_logit.sum(axis=0)

    # View layer (ReLU).
    d_view = (d_logit @ p["rgb_w"]) * cache["view_mask"]
    g["view_w"] = d_view.T @ cache["view_in"]
    g["view_b"] = d_view.sum(axis=0)
    d_view_in = d_view @ p["view_w"]
    d_feature = d_view_in[:, :cfg.width]  # enc_d slice carries no parameters

    # Feature head (linear).
    trunk_out = cache["trunk_out"]
    g["feature_w"] = d_feature.T @ trunk_out
    g["feature_b"] = d_feature.sum(axis=0)
    d_trunk = d_feature @ p["feature_w"]

    # Density head (ReLU on raw + noise; noise is additive so the mask is all
    # that matters here).
    d_raw = (grad_sigma * cache["sigma_mask"])[:, None]
    g["sigma_w"] = d_raw.T @ trunk_out
    g["sigma_b"] = d_raw.sum(axis=0)
    d_trunk = d_trunk + d_raw @ p["sigma_w"]

    # Trunk, reversed.
    for i in range(cfg.depth - 1, -1, -1):
        d_z = d_trunk * cache["trunk_masks"][i]
        g[f"trunk{i}_w"] = d_z.T @ cache["trunk_inputs"][i]
        g[f"trunk{i}_b"] = d_z.sum(axis=0)
        if i == 0:
            break
        d_in = d_z @ p[f"trunk{i}_w"]
        if i == cfg.skip_layer:
            d_in = d_in[:, :cfg.width]  # drop the re-concatenated enc_x slice
        d_trunk = d_in
    return g


def zero_grads(params: MlpParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(a) for k, a in params.arrays.items()}


def accumulate(into: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    for k, v in grads.items():
        into[k] += v


def adam_step(params: MlpParams, grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-7) -> None:
    """One bias-corrected Adam update, in place on params and state."""
    for k, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient in {k}")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for k, grad in grads.items():
        m = state.m[k]
        v = state.v[k]
        m += (1.0 - beta1) * (grad - m)
        v += (1.0 - beta2) * (grad * grad - v)
        params.arrays[k] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
