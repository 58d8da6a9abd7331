"""Camera rays and NDC: from pixels to world-space rays to the warped cube.

Walks through the camera model step by step: generate rays through pixel
centers, then remap a forward-facing ray into normalized device coordinates
where t' in [0, 1] covers the scene out to infinity linearly in disparity.
"""

import numpy as np

from nerfkit.geometry import (
    CameraIntrinsics,
    Pose,
    Ray,
    generate_ray,
    ndc_convert,
    ndc_t_prime,
)

# A 640x480 pinhole camera with a ~53 degree horizontal field of view.
intr = CameraIntrinsics(width_px=640, height_px=480, focal_px=640.0)
pose = Pose.identity()

print("== rays through pixel centers ==")
for px, py, label in [(319.5, 239.5, "principal point"),
                      (0.0, 0.0, "top-left corner"),
                      (639.0, 239.5, "right edge")]:
    ray = generate_ray(intr, pose, px, py)
    print(f"pixel ({px:6.1f}, {py:6.1f})  [{label:>15s}]  "
          f"direction = {np.round(ray.direction, 4)}")

# The camera looks down -z; direction z is always -1 before normalization,
# so the parameter t is metric depth along the optical axis.

print()
print("== NDC remapping of a forward-facing ray ==")
near = 1.0
ray = Ray(origin=np.array([0.2, -0.1, 0.5]),
          direction=np.array([0.05, 0.02, -1.0]),
          t_near=0.0, t_far=np.inf)
ndc = ndc_convert(ray, intr, near)
print(f"world origin    {np.round(ray.origin, 4)}")
print(f"ndc origin      {np.round(ndc.origin, 4)}   (on the near plane, z = -1)")
print(f"ndc direction   {np.round(ndc.direction, 4)}")
print(f"ndc t range     [{ndc.t_near}, {ndc.t_far}]")

# t' sweeps [0, 1) as world t sweeps [0, inf): linear in disparity.
o_shift = -(near + ray.origin[2]) / ray.direction[2]
o_z = ray.origin[2] + o_shift * ray.direction[2]
print()
print("world t -> ndc t' (disparity parameterization):")
for t in (0.0, 1.0, 4.0, 100.0, 1e9):
    tp = ndc_t_prime(t, o_z, ray.direction[2])
    print(f"  t = {t:>10.1f}   t' = {tp:.6f}")
