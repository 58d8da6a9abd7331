"""Desk-scale neural radiance fields in NumPy.

A from-scratch radiance-field pipeline: pinhole ray generation (with NDC
remapping for forward-facing captures), sinusoidal positional encoding, a
hand-differentiated MLP with Adam, stratified and hierarchical ray sampling,
alpha-compositing volume rendering, analytic-field oracles, and a coarse/fine
training loop.
"""

from nerfkit.geometry import CameraIntrinsics, Pose, Ray, NdcContext
from nerfkit.encoding import EncodingConfig, encode_scalar, encode_vec3
from nerfkit.network import MlpConfig, MlpParams, AdamState, FieldSample

__all__ = [
    "CameraIntrinsics",
    "Pose",
    "Ray",
    "NdcContext",
    "EncodingConfig",
    "encode_scalar",
    "encode_vec3",
    "MlpConfig",
    "MlpParams",
    "AdamState",
    "FieldSample",
]

__version__ = "0.1.0"
