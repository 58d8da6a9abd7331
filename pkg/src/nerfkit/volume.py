"""Volume rendering: quadrature, stratified and hierarchical sampling.

The renderer estimates the emission-absorption integral along each ray by
alpha compositing discrete samples: with optical depths tau_i = sigma_i *
delta_i, transmittance T_i = exp(-sum_{j<i} tau_j) and per-sample weight
w_i = T_i * (1 - exp(-tau_i)).  Leftover transmittance multiplies a
configurable background color, so the weights and the background factor
always form a partition of unity.

Two independent compositing routes exist on purpose: `composite` (exp of a
cumulative sum) and `composite_alpha_iterative` (running product of
1 - alpha); tests cross-check them, and the dense-sample oracle renderer is
built on the iterative route so it never shares code with the path it
verifies.

Everything is batched over rays; per-ray wrappers exist for convenience.
Sampling randomness comes from explicit generators, so per-ray streams can
be split deterministically by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from nerfkit import network
from nerfkit.encoding import EncodingConfig, encode_vec3
from nerfkit.fields import AnalyticField
from nerfkit.geometry import Ray
from nerfkit.network import FieldSample, MlpParams

# Below this total weight a ray's coarse PDF is considered degenerate and
# replaced by a uniform one (early training renders near-empty scenes).
DEGENERATE_WEIGHT_SUM = 1e-10


@dataclass
class RaySampleSet:
    """Sorted parametric depths along rays with interval lengths.

    t_values: (R, S) nondecreasing along axis 1; deltas: (R, S) >= 0 with
    deltas[:, i] = t[:, i+1] - t[:, i] and the last interval closed off by
    the ray's far bound.
    """

    t_values: np.ndarray
    deltas: np.ndarray

    def __post_init__(self):
        if self.t_values.shape != self.deltas.shape:
            raise ValueError("t_values and deltas must have identical shape")


def make_sample_set(t_values: np.ndarray, t_far) -> RaySampleSet:
    t_values = np.atleast_2d(t_values)
    t_far = np.broadcast_to(np.asarray(t_far, dtype=t_values.dtype),
                            (t_values.shape[0],))
    deltas = np.empty_like(t_values)
    deltas[:, :-1] = np.diff(t_values, axis=1)
    deltas[:, -1] = t_far - t_values[:, -1]
    if np.any(deltas < -1e-12):
        raise ValueError("t_values must be sorted and within the far bound")
    np.maximum(deltas, 0.0, out=deltas)
    return RaySampleSet(t_values, deltas)


def stratified_sample(t_near, t_far, n: int, rng: np.random.Generator,
                      n_rays: int = 1) -> RaySampleSet:
    """One uniform draw from each of n evenly spaced bins of [t_near, t_far]."""
    if n < 1:
        raise ValueError(f"need at least one sample bin, got n={n}")
    t_near = np.broadcast_to(np.asarray(t_near, dtype=np.float64), (n_rays,))
    t_far = np.broadcast_to(np.asarray(t_far, dtype=np.float64), (n_rays,))
    if np.any(t_near >= t_far):
        raise ValueError("need t_near < t_far")
    u = rng.random((n_rays, n))
    frac = (np.arange(n) + u) / n
    t = t_near[:, None] + frac * (t_far - t_near)[:, None]
    return make_sample_set(t, t_far)


@dataclass
class CompositeResult:
    color: np.ndarray  # (R, 3)
    weights: np.ndarray  # (R, S)
    alpha_acc: np.ndarray  # (R,), sum of weights
    transmittance: np.ndarray  # (R, S), T_i before sample i
    background_transmittance: np.ndarray  # (R,), T after the last sample


def composite(samples: RaySampleSet, field_values: FieldSample,
              background) -> CompositeResult:
    """Alpha-composite sampled (sigma, rgb) values front to back."""
    sigma = np.atleast_2d(field_values.sigma)
    rgb = field_values.rgb
    if rgb.ndim == 2:
        rgb = rgb[None]
    if sigma.shape != samples.t_values.shape or rgb.shape[:2] != sigma.shape:
        raise ValueError("field values do not match the sample set")
    if np.any(sigma < 0):
        raise ValueError("negative density fed to composite")
    background = np.asarray(background, dtype=sigma.dtype)

    tau = sigma * samples.deltas
    cum = np.cumsum(tau, axis=1)
    trans = np.exp(-(cum - tau))  # exclusive prefix: T_i
    alpha = -np.expm1(-tau)  # 1 - exp(-tau)
    weights = trans * alpha
    t_end = np.exp(-cum[:, -1])
    color = np.einsum("rs,rsc->rc", weights, rgb) + t_end[:, None] * background
    return CompositeResult(
        color=color,
        weights=weights,
        alpha_acc=weights.sum(axis=1),
        transmittance=trans,
        background_transmittance=t_end,
    )


def composite_alpha_iterative(samples: RaySampleSet, field_values: FieldSample,
                              background) -> np.ndarray:
    """Independent compositing route: front-to-back running product of
    (1 - alpha_i).  Returns only the color."""
    sigma = np.atleast_2d(field_values.sigma)
    rgb = field_values.rgb
    if rgb.ndim == 2:
        rgb = rgb[None]
    if np.any(sigma < 0):
        raise ValueError("negative density fed to composite")
    background = np.asarray(background, dtype=sigma.dtype)

    alpha = 1.0 - np.exp(-sigma * samples.deltas)
    one_minus = 1.0 - alpha
    trans = np.cumprod(one_minus, axis=1)
    trans_excl = np.concatenate(
        [np.ones_like(trans[:, :1]), trans[:, :-1]], axis=1)
    color = np.einsum("rs,rsc->rc", trans_excl * alpha, rgb)
    return color + trans[:, -1][:, None] * background


def composite_backward(samples: RaySampleSet, field_values: FieldSample,
                       background, result: CompositeResult,
                       grad_color: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of sum(grad_color * color) w.r.t. per-sample rgb and sigma.

    d color / d c_i = w_i, and raising sigma_i both opacifies sample i and
    shades everything behind it:
      d color / d sigma_i = delta_i * (T_i e^{-tau_i} c_i
                                       - sum_{j>i} w_j c_j
                                       - T_end * background).
    """
    sigma = np.atleast_2d(field_values.sigma)
    rgb = field_values.rgb
    if rgb.ndim == 2:
        rgb = rgb[None]
    grad_color = np.atleast_2d(grad_color)
    background = np.asarray(background, dtype=sigma.dtype)

    grad_rgb = result.weights[:, :, None] * grad_color[:, None, :]

    s = np.einsum("rsc,rc->rs", rgb, grad_color)  # c_i . grad per sample
    ws = result.weights * s
    suffix = np.cumsum(ws[:, ::-1], axis=1)[:, ::-1] - ws  # sum over j > i
    tau = sigma * samples.deltas
    behind = result.transmittance * np.exp(-tau)  # T_{i+1}
    bg_term = result.background_transmittance * (grad_color @ background)
    grad_sigma = samples.deltas * (behind * s - suffix - bg_term[:, None])
    return grad_rgb, grad_sigma


@dataclass
class PiecewisePdf:
    """Piecewise-constant density over bins; probs sum to 1 per ray."""

    bin_edges: np.ndarray  # (R, B+1), sorted along axis 1
    probs: np.ndarray  # (R, B), >= 0, rows sum to 1

    def __post_init__(self):
        if self.bin_edges.shape[1] != self.probs.shape[1] + 1:
            raise ValueError("need one more edge than bins")
        if np.any(self.probs < 0):
            raise ValueError("negative bin probability")
        if np.max(np.abs(self.probs.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("bin probabilities must sum to 1")


def weights_to_pdf(weights: np.ndarray, bin_edges: np.ndarray) -> PiecewisePdf:
    """Normalize nonnegative weights into a PDF; all-(near-)zero rows fall
    back to uniform (early training produces empty renders)."""
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    bin_edges = np.atleast_2d(np.asarray(bin_edges, dtype=np.float64))
    if np.any(weights < 0):
        raise ValueError("weights must be >= 0")
    total = weights.sum(axis=1, keepdims=True)
    degenerate = total[:, 0] < DEGENERATE_WEIGHT_SUM
    probs = np.where(degenerate[:, None],
                     1.0 / weights.shape[1],
                     weights / np.where(degenerate[:, None], 1.0, total))
    # Renormalize exactly so downstream CDF inversion sees sum == 1.
    probs = probs / probs.sum(axis=1, keepdims=True)
    return PiecewisePdf(bin_edges, probs)


def sample_pdf(pdf: PiecewisePdf, n_f: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n_f values per ray by inverse transform sampling.

    Uniforms are stratified (u_k in [(k-1)/n_f, k/n_f)), which lowers
    variance; the inverse CDF interpolates linearly inside each bin.  The
    output is sorted along axis 1 by construction.
    """
    if n_f < 1:
        raise ValueError(f"need n_f >= 1, got {n_f}")
    n_rays, n_bins = pdf.probs.shape
    u = (np.arange(n_f) + rng.random((n_rays, n_f))) / n_f
    cdf = np.concatenate(
        [np.zeros((n_rays, 1)), np.cumsum(pdf.probs, axis=1)], axis=1)
    cdf[:, -1] = 1.0

    out = np.empty((n_rays, n_f))
    for r in range(n_rays):
        idx = np.searchsorted(cdf[r], u[r], side="right") - 1
        np.clip(idx, 0, n_bins - 1, out=idx)
        lo = pdf.bin_edges[r, idx]
        width = pdf.bin_edges[r, idx + 1] - lo
        p = pdf.probs[r, idx]
        frac = np.where(p > 1e-15, (u[r] - cdf[r, idx]) / np.where(p > 1e-15, p, 1.0), 0.0)
        out[r] = lo + frac * width
    return out


@dataclass
class RayBatch:
    """A batch of rays plus the unit viewing directions fed to the network
    (kept separate because ray directions are deliberately unnormalized)."""

    origins: np.ndarray  # (R, 3)
    directions: np.ndarray  # (R, 3)
    viewdirs: np.ndarray  # (R, 3), unit
    t_near: np.ndarray  # (R,)
    t_far: np.ndarray  # (R,)

    def __len__(self):
        return self.origins.shape[0]

    @staticmethod
    def from_ray(ray: Ray) -> "RayBatch":
        vd = ray.direction / np.linalg.norm(ray.direction)
        return RayBatch(ray.origin[None], ray.direction[None], vd[None],
                        np.array([ray.t_near]), np.array([ray.t_far]))


@dataclass
class RenderConfig:
    n_coarse: int = 64
    n_fine: int = 128
    background: tuple = (1.0, 1.0, 1.0)
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    positional_encoding: bool = True
    view_dependence: bool = True
    hierarchical: bool = True
    sigma_noise_std: float = 0.0

    def input_dims(self) -> tuple[int, int]:
        in_x = self.encoding.position_dim if self.positional_encoding else 3
        if not self.view_dependence:
            in_d = 0
        elif self.positional_encoding:
            in_d = self.encoding.direction_dim
        else:
            in_d = 3
        return in_x, in_d

    def encode_position(self, x: np.ndarray) -> np.ndarray:
        if self.positional_encoding:
            return encode_vec3(x, self.encoding.L_position)
        return x

    def encode_direction(self, viewdirs: np.ndarray) -> np.ndarray:
        if not self.view_dependence:
            return np.zeros(viewdirs.shape[:-1] + (0,))
        if self.positional_encoding:
            return encode_vec3(viewdirs, self.encoding.L_direction)
        return viewdirs


@dataclass
class RenderResult:
    color_coarse: np.ndarray  # (R, 3)
    color_fine: np.ndarray  # (R, 3)
    coarse_samples: RaySampleSet
    fine_samples: RaySampleSet
    coarse_composite: CompositeResult
    fine_composite: CompositeResult
    coarse_field: FieldSample
    fine_field: FieldSample
    coarse_cache: dict | None
    fine_cache: dict | None


def _query_network(params: MlpParams, batch: RayBatch, t: np.ndarray,
                   config: RenderConfig, rng, keep_cache: bool
                   ) -> tuple[FieldSample, dict | None]:
    n_rays, n_samples = t.shape
    pos = batch.origins[:, None, :] + t[:, :, None] * batch.directions[:, None, :]
    enc_x = config.encode_position(pos.reshape(-1, 3))
    vd = np.broadcast_to(batch.viewdirs[:, None, :], pos.shape).reshape(-1, 3)
    enc_d = config.encode_direction(vd)
    fs, cache = network.forward(params, enc_x, enc_d,
                                sigma_noise_std=config.sigma_noise_std, rng=rng)
    fs = FieldSample(rgb=fs.rgb.reshape(n_rays, n_samples, 3),
                     sigma=fs.sigma.reshape(n_rays, n_samples))
    return fs, (cache if keep_cache else None)


def render_ray_batch(coarse: MlpParams, fine: MlpParams, batch: RayBatch,
                     config: RenderConfig, rng: np.random.Generator,
                     keep_cache: bool = False) -> RenderResult:
    """Coarse/fine hierarchical rendering of a ray batch.

    Coarse pass: stratified samples -> coarse network -> composite.  The
    coarse weights define a piecewise-constant PDF (over bins bounded by the
    sample midpoints) from which n_fine extra depths are drawn; the fine
    network is evaluated at the sorted union of both sets.  Coincident
    depths are harmless: their interval length is 0, so they carry exactly
    zero weight and zero gradient.  With hierarchical sampling disabled the
    coarse pass is the whole render and the fine color aliases the coarse
    one.
    """
    t_coarse = stratified_sample(batch.t_near, batch.t_far, config.n_coarse,
                                 rng, n_rays=len(batch))
    coarse_field, coarse_cache = _query_network(
        coarse, batch, t_coarse.t_values, config, rng, keep_cache)
    coarse_comp = composite(t_coarse, coarse_field, config.background)

    if not config.hierarchical:
        return RenderResult(
            color_coarse=coarse_comp.color, color_fine=coarse_comp.color,
            coarse_samples=t_coarse, fine_samples=t_coarse,
            coarse_composite=coarse_comp, fine_composite=coarse_comp,
            coarse_field=coarse_field, fine_field=coarse_field,
            coarse_cache=coarse_cache, fine_cache=None)

    tc = t_coarse.t_values
    mids = 0.5 * (tc[:, 1:] + tc[:, :-1])
    edges = np.concatenate(
        [batch.t_near[:, None], mids, batch.t_far[:, None]], axis=1)
    pdf = weights_to_pdf(coarse_comp.weights, edges)
    t_extra = sample_pdf(pdf, config.n_fine, rng)
    t_union = np.sort(np.concatenate([tc, t_extra], axis=1), axis=1)
    t_fine = make_sample_set(t_union, batch.t_far)

    fine_field, fine_cache = _query_network(
        fine, batch, t_fine.t_values, config, rng, keep_cache)
    fine_comp = composite(t_fine, fine_field, config.background)

    return RenderResult(
        color_coarse=coarse_comp.color, color_fine=fine_comp.color,
        coarse_samples=t_coarse, fine_samples=t_fine,
        coarse_composite=coarse_comp, fine_composite=fine_comp,
        coarse_field=coarse_field, fine_field=fine_field,
        coarse_cache=coarse_cache, fine_cache=fine_cache)


def render_ray(coarse: MlpParams, fine: MlpParams, ray: Ray,
               config: RenderConfig, rng: np.random.Generator
               ) -> tuple[np.ndarray, np.ndarray]:
    """Single-ray convenience wrapper; returns (coarse color, fine color)."""
    res = render_ray_batch(coarse, fine, RayBatch.from_ray(ray), config, rng)
    return res.color_coarse[0], res.color_fine[0]


def oracle_render(field: AnalyticField, ray: Ray, n_dense: int = 16384,
                  background=(1.0, 1.0, 1.0), check_convergence: bool = True,
                  max_doublings: int = 3) -> np.ndarray:
    """Ground-truth color of a ray under an analytic field.

    Deterministic midpoint rule with n_dense uniform intervals, composited
    with the iterative alpha route.  With the convergence gate on, the
    sample count doubles until the result moves by < 1e-6; failure to
    converge raises.
    """
    colors = oracle_render_batch(field, ray.origin[None], ray.direction[None],
                                 np.array([ray.t_near]), np.array([ray.t_far]),
                                 n_dense, background)
    if not check_convergence:
        return colors[0]
    prev = colors[0]
    n = n_dense
    for _ in range(max_doublings):
        n *= 2
        cur = oracle_render_batch(field, ray.origin[None], ray.direction[None],
                                  np.array([ray.t_near]), np.array([ray.t_far]),
                                  n, background)[0]
        if np.max(np.abs(cur - prev)) < 1e-6:
            return cur
        prev = cur
    raise RuntimeError(
        f"oracle render did not converge by n={n} (last change "
        f"{np.max(np.abs(cur - prev)):.2e})")


def oracle_render_batch(field: AnalyticField, origins: np.ndarray,
                        directions: np.ndarray, t_near: np.ndarray,
                        t_far: np.ndarray, n_dense: int = 16384,
                        background=(1.0, 1.0, 1.0),
                        chunk_rays: int = 256) -> np.ndarray:
    """Vectorized midpoint-rule oracle over many rays (no convergence gate;
    used for synthetic dataset generation where the cost would double)."""
    origins = np.atleast_2d(origins)
    directions = np.atleast_2d(directions)
    t_near = np.broadcast_to(np.asarray(t_near, dtype=np.float64),
                             (origins.shape[0],))
    t_far = np.broadcast_to(np.asarray(t_far, dtype=np.float64),
                            (origins.shape[0],))
    out = np.empty((origins.shape[0], 3))
    frac = (np.arange(n_dense) + 0.5) / n_dense
    for lo in range(0, origins.shape[0], chunk_rays):
        hi = min(lo + chunk_rays, origins.shape[0])
        tn, tf = t_near[lo:hi], t_far[lo:hi]
        t = tn[:, None] + frac * (tf - tn)[:, None]
        delta = ((tf - tn) / n_dense)[:, None] * np.ones_like(t)
        pos = (origins[lo:hi, None, :]
               + t[:, :, None] * directions[lo:hi, None, :])
        vd = np.broadcast_to(directions[lo:hi, None, :], pos.shape)
        fs = field.sample(pos.reshape(-1, 3), vd.reshape(-1, 3))
        fs = FieldSample(rgb=fs.rgb.reshape(hi - lo, n_dense, 3),
                         sigma=fs.sigma.reshape(hi - lo, n_dense))
        samples = RaySampleSet(t, delta)
        out[lo:hi] = composite_alpha_iterative(samples, fs, background)
    return out
