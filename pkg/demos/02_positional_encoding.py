"""Positional encoding: why a coordinate MLP needs Fourier features.

Fits the same 1D high-frequency signal twice with a tiny least-squares
model -- once on the raw coordinate, once on its sinusoidal encoding -- and
prints the reconstruction error.  The encoded basis captures the wiggles
that a low-dimensional raw input cannot.
"""

import numpy as np

from nerfkit.encoding import encode_scalar

rng = np.random.default_rng(0)

# Target: a signal with content at several frequencies.
x = np.linspace(-1.0, 1.0, 512)
signal = (0.6 * np.sin(2 * np.pi * x)
          + 0.3 * np.sin(16 * np.pi * x + 0.7)
          + 0.1 * np.sin(64 * np.pi * x + 1.3))


def ridge_fit(features: np.ndarray) -> np.ndarray:
    # Tiny ridge regression standing in for "what a small MLP can express".
    a = np.concatenate([features, np.ones((len(x), 1))], axis=1)
    w = np.linalg.solve(a.T @ a + 1e-8 * np.eye(a.shape[1]), a.T @ signal)
    return a @ w


raw = ridge_fit(np.stack([x, x**2, x**3], axis=1))

print("reconstruction RMSE vs encoding frequency count L:")
print(f"  raw polynomial basis : {np.sqrt(np.mean((raw - signal) ** 2)):.4f}")
for L in (2, 4, 6, 8, 10):
    enc = np.stack([encode_scalar(xi, L) for xi in x])
    fit = ridge_fit(enc)
    rmse = np.sqrt(np.mean((fit - signal) ** 2))
    print(f"  gamma with L = {L:2d}     : {rmse:.4f}")

print()
print("The L = 10 position encoding spans frequencies up to 2^9 * pi,")
print("which is what lets the radiance MLP represent sharp detail.")
