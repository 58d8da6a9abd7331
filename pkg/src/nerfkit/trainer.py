"""Coarse/fine optimization loop, plus full-image rendering and evaluation.

Per step: sample a batch of camera rays uniformly over all training pixels,
render them hierarchically, and minimize the mean over the batch of
|C_coarse - C|^2 + |C_fine - C|^2.  Coarse gradients come only from the
coarse term and fine gradients only from the fine term; the coarse -> PDF ->
fine sample-placement path is treated as constant (no gradient through the
inverse CDF).  Both networks get one Adam step per iteration with an
exponentially decaying learning rate.

All randomness derives from one base seed through named substreams keyed by
(seed, stream, index), so runs are bit-reproducible and resuming from a
checkpoint replays the exact uninterrupted sequence.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from nerfkit import network
from nerfkit.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from nerfkit.encoding import EncodingConfig
from nerfkit.geometry import ndc_convert_batch
from nerfkit.metrics import mse, psnr, ssim, write_eval_report
from nerfkit.network import AdamState, MlpConfig, MlpParams
from nerfkit.scene import Dataset
from nerfkit.volume import RayBatch, RenderConfig, composite_backward, render_ray_batch

# Substream labels for deterministic, resumable randomness.
STREAM_INIT = 1
STREAM_TRAIN = 2
STREAM_EVAL = 3


def substream(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, index])


@dataclass(frozen=True)
class Ablations:
    positional_encoding: bool = True
    view_dependence: bool = True
    hierarchical: bool = True


@dataclass(frozen=True)
class TrainConfig:
    batch_rays: int = 4096
    n_coarse: int = 64
    n_fine: int = 128
    lr_init: float = 5e-4
    lr_final: float = 5e-5
    decay_iters: int | None = None  # None: decay over all of max_iters
    max_iters: int = 20000
    sigma_noise_std: float = 0.0
    seed: int = 0
    ablations: Ablations = field(default_factory=Ablations)
    L_position: int = 10
    width: int = 256
    depth: int = 8
    background: tuple = (1.0, 1.0, 1.0)
    checkpoint_every: int = 1000

    def __post_init__(self):
        if self.batch_rays < 1:
            raise ValueError("batch_rays must be >= 1")
        if not (self.lr_init >= self.lr_final > 0):
            raise ValueError("need lr_init >= lr_final > 0")

    @property
    def effective_decay_iters(self) -> int:
        return self.decay_iters if self.decay_iters is not None else self.max_iters

    def encoding(self) -> EncodingConfig:
        # Direction frequencies track the position count at the default 5:2 ratio.
        return EncodingConfig.for_frequency_sweep(self.L_position) \
            if self.L_position != 10 else EncodingConfig(10, 4)

    def render_config(self, training: bool) -> RenderConfig:
        return RenderConfig(
            n_coarse=self.n_coarse,
            n_fine=self.n_fine,
            background=self.background,
            encoding=self.encoding(),
            positional_encoding=self.ablations.positional_encoding,
            view_dependence=self.ablations.view_dependence,
            hierarchical=self.ablations.hierarchical,
            sigma_noise_std=self.sigma_noise_std if training else 0.0,
        )

    def mlp_config(self) -> MlpConfig:
        in_x, in_d = self.render_config(training=False).input_dims()
        return MlpConfig(in_x=in_x, in_d=in_d, width=self.width,
                         depth=self.depth, skip_layer=5,
                         view_width=max(1, self.width // 2))


@dataclass
class LossReport:
    total: float
    coarse_term: float
    fine_term: float
    iteration: int


@dataclass
class TrainState:
    coarse: MlpParams
    fine: MlpParams
    coarse_adam: AdamState
    fine_adam: AdamState
    iteration: int = 0


def init_train_state(config: TrainConfig, dtype=np.float32) -> TrainState:
    mlp_cfg = config.mlp_config()
    coarse = network.init_params(mlp_cfg, seed=[config.seed, STREAM_INIT, 0],
                                 dtype=dtype)
    fine = network.init_params(mlp_cfg, seed=[config.seed, STREAM_INIT, 1],
                               dtype=dtype)
    return TrainState(
        coarse=coarse, fine=fine,
        coarse_adam=AdamState.zeros_like(coarse),
        fine_adam=AdamState.zeros_like(fine),
        iteration=0,
    )


def dataset_rays(dataset: Dataset, img_idx: np.ndarray, px: np.ndarray,
                 py: np.ndarray) -> RayBatch:
    """World-space (or NDC, for forward-facing scenes) rays through the given
    pixel centers of the given images."""
    intr = dataset.intrinsics
    rot = np.stack([dataset.poses[i].rotation for i in range(len(dataset))])
    trans = np.stack([dataset.poses[i].translation for i in range(len(dataset))])
    d_cam = np.stack([
        (px + 0.5 - intr.width_px / 2.0) / intr.focal_px,
        -(py + 0.5 - intr.height_px / 2.0) / intr.focal_px,
        -np.ones_like(px, dtype=np.float64),
    ], axis=-1)
    dirs = np.einsum("nij,nj->ni", rot[img_idx], d_cam)
    origins = trans[img_idx]
    viewdirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)

    n = origins.shape[0]
    if dataset.mode == "forward_facing_ndc":
        origins, dirs = ndc_convert_batch(origins, dirs, intr, dataset.near)
        t_near = np.zeros(n)
        t_far = np.ones(n)
    else:
        t_near = np.full(n, dataset.near)
        t_far = np.full(n, dataset.far)
    return RayBatch(origins, dirs, viewdirs, t_near, t_far)


def sample_ray_batch(dataset: Dataset, batch_rays: int,
                     rng: np.random.Generator) -> tuple[RayBatch, np.ndarray]:
    """Uniform-with-replacement over all (train image, pixel) pairs."""
    if not dataset.train_indices:
        raise ValueError("dataset has no training images")
    train = np.asarray(dataset.train_indices)
    img_idx = train[rng.integers(0, len(train), size=batch_rays)]
    px = rng.integers(0, dataset.intrinsics.width_px, size=batch_rays)
    py = rng.integers(0, dataset.intrinsics.height_px, size=batch_rays)
    targets = np.stack([dataset.images[i][y, x]
                        for i, x, y in zip(img_idx, px, py)])
    batch = dataset_rays(dataset, img_idx, px.astype(np.float64),
                         py.astype(np.float64))
    return batch, np.clip(targets, 0.0, 1.0)


def loss_report(color_coarse: np.ndarray, color_fine: np.ndarray,
                target: np.ndarray, iteration: int) -> LossReport:
    """Mean over rays of the summed-channel squared errors.

    The batch sum is divided by the ray count so learning-rate settings
    transfer across batch sizes (a scale-only deviation from the plain sum).
    """
    if not (np.all(np.isfinite(color_coarse)) and np.all(np.isfinite(color_fine))):
        raise FloatingPointError("non-finite rendered color in loss")
    n = target.shape[0]
    coarse = float(np.sum((color_coarse - target) ** 2) / n)
    fine = float(np.sum((color_fine - target) ** 2) / n)
    return LossReport(coarse + fine, coarse, fine, iteration)


def lr_at(iteration: int, config: TrainConfig) -> float:
    """Exponential decay from lr_init to lr_final over decay_iters, then flat."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    d = config.effective_decay_iters
    frac = min(iteration, d) / d
    return config.lr_init * (config.lr_final / config.lr_init) ** frac


def train_step(state: TrainState, dataset: Dataset, config: TrainConfig
               ) -> LossReport:
    """One optimization step; advances state in place."""
    rng = substream(config.seed, STREAM_TRAIN, state.iteration)
    batch, target = sample_ray_batch(dataset, config.batch_rays, rng)
    render_cfg = config.render_config(training=True)
    res = render_ray_batch(state.coarse, state.fine, batch, render_cfg, rng,
                           keep_cache=True)
    report = loss_report(res.color_coarse, res.color_fine, target,
                         state.iteration)
    lr = lr_at(state.iteration, config)
    n = target.shape[0]

    grad_c = (2.0 / n) * (res.color_coarse - target)
    grad_rgb, grad_sigma = composite_backward(
        res.coarse_samples, res.coarse_field, render_cfg.background,
        res.coarse_composite, grad_c)
    grads = network.backward(state.coarse, res.coarse_cache,
                             grad_rgb.reshape(-1, 3), grad_sigma.reshape(-1))
    network.adam_step(state.coarse, grads, state.coarse_adam, lr)

    if config.ablations.hierarchical:
        grad_f = (2.0 / n) * (res.color_fine - target)
        grad_rgb, grad_sigma = composite_backward(
            res.fine_samples, res.fine_field, render_cfg.background,
            res.fine_composite, grad_f)
        grads = network.backward(state.fine, res.fine_cache,
                                 grad_rgb.reshape(-1, 3), grad_sigma.reshape(-1))
        network.adam_step(state.fine, grads, state.fine_adam, lr)

    state.iteration += 1
    return report


def make_checkpoint(state: TrainState, config: TrainConfig,
                    include_optimizer: bool = True) -> Checkpoint:
    return Checkpoint(
        encoding=config.encoding(),
        coarse=state.coarse,
        fine=state.fine,
        coarse_adam=state.coarse_adam if include_optimizer else None,
        fine_adam=state.fine_adam if include_optimizer else None,
        iteration=state.iteration,
        metadata={"train_config": {
            "batch_rays": config.batch_rays,
            "n_coarse": config.n_coarse,
            "n_fine": config.n_fine,
            "seed": config.seed,
            "L_position": config.L_position,
            "width": config.width,
            "depth": config.depth,
            "background": list(config.background),
            "ablations": {
                "positional_encoding": config.ablations.positional_encoding,
                "view_dependence": config.ablations.view_dependence,
                "hierarchical": config.ablations.hierarchical,
            },
        }},
    )


def config_from_checkpoint(ckpt: Checkpoint, **overrides) -> TrainConfig:
    """Rebuild the TrainConfig a checkpoint was produced with (the fields
    that matter for rendering and evaluation)."""
    meta = ckpt.metadata.get("train_config", {})
    abl = meta.get("ablations", {})
    kwargs = dict(
        batch_rays=meta.get("batch_rays", 4096),
        n_coarse=meta.get("n_coarse", 64),
        n_fine=meta.get("n_fine", 128),
        seed=meta.get("seed", 0),
        L_position=meta.get("L_position", 10),
        width=meta.get("width", 256),
        depth=meta.get("depth", 8),
        background=tuple(meta.get("background", (1.0, 1.0, 1.0))),
        ablations=Ablations(
            positional_encoding=abl.get("positional_encoding", True),
            view_dependence=abl.get("view_dependence", True),
            hierarchical=abl.get("hierarchical", True),
        ),
    )
    kwargs.update(overrides)
    return TrainConfig(**kwargs)


def state_from_checkpoint(ckpt: Checkpoint) -> TrainState:
    if not ckpt.has_optimizer:
        raise ValueError("checkpoint has no optimizer state; cannot resume")
    return TrainState(ckpt.coarse, ckpt.fine, ckpt.coarse_adam, ckpt.fine_adam,
                      ckpt.iteration)


def train(dataset: Dataset, config: TrainConfig, out_dir,
          resume_from=None, log_every: int = 50,
          progress: bool = False) -> Path:
    """Run the optimization loop; returns the final checkpoint path.

    Writes `train_log.csv` (iter, loss, coarse, fine, lr, wall_time) and
    periodic + final checkpoints under out_dir.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if dataset.mode == "bounded_360":
        # Keep sample positions inside the encoding's [-1, 1] domain
        # (idempotent, so pre-normalized datasets pass through unchanged).
        from nerfkit.scene import normalize_scene

        dataset = normalize_scene(dataset)
    if resume_from is not None:
        state = state_from_checkpoint(load_checkpoint(resume_from))
    else:
        state = init_train_state(config)

    log_path = out_dir / "train_log.csv"
    mode = "a" if (resume_from is not None and log_path.exists()) else "w"
    t0 = time.time()
    with open(log_path, mode, newline="") as f:
        writer = csv.writer(f)
        if mode == "w":
            writer.writerow(["iter", "loss", "coarse", "fine", "lr", "wall_time"])
        while state.iteration < config.max_iters:
            report = train_step(state, dataset, config)
            it = report.iteration
            if it % log_every == 0 or it + 1 == config.max_iters:
                writer.writerow([it, f"{report.total:.8f}",
                                 f"{report.coarse_term:.8f}",
                                 f"{report.fine_term:.8f}",
                                 f"{lr_at(it, config):.3e}",
                                 f"{time.time() - t0:.2f}"])
                f.flush()
                if progress:
                    print(f"iter {it}  loss {report.total:.5f}", flush=True)
            if (config.checkpoint_every
                    and state.iteration % config.checkpoint_every == 0
                    and state.iteration < config.max_iters):
                save_checkpoint(out_dir / f"checkpoint_{state.iteration:06d}.nrfk",
                                make_checkpoint(state, config))

    final = out_dir / "checkpoint_final.nrfk"
    save_checkpoint(final, make_checkpoint(state, config))
    return final


def render_image(state_or_ckpt, dataset: Dataset, pose, config: TrainConfig,
                 eval_seed_index: int = 0, chunk: int = 2048,
                 threads: int = 1) -> np.ndarray:
    """Render a full image from a pose, in evaluation mode (no sigma noise).

    Each pixel chunk draws from its own substream keyed by (image index,
    chunk index), so the result is bit-identical regardless of thread count.
    """
    coarse, fine = state_or_ckpt.coarse, state_or_ckpt.fine
    intr = dataset.intrinsics
    h, w = intr.height_px, intr.width_px
    px, py = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    px, py = px.ravel(), py.ravel()
    img_like = np.empty((h * w, 3))
    render_cfg = config.render_config(training=False)

    tmp = dataset_stub(dataset, pose)
    batch_all = dataset_rays(tmp, np.zeros(px.shape[0], dtype=int), px, py)

    def run_chunk(chunk_index: int, lo: int) -> None:
        hi = min(lo + chunk, h * w)
        sub = RayBatch(batch_all.origins[lo:hi], batch_all.directions[lo:hi],
                       batch_all.viewdirs[lo:hi], batch_all.t_near[lo:hi],
                       batch_all.t_far[lo:hi])
        rng = substream(config.seed, STREAM_EVAL,
                        eval_seed_index * 1_000_003 + chunk_index)
        res = render_ray_batch(coarse, fine, sub, render_cfg, rng)
        img_like[lo:hi] = res.color_fine

    starts = list(range(0, h * w, chunk))
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_chunk, range(len(starts)), starts))
    else:
        for i, lo in enumerate(starts):
            run_chunk(i, lo)
    return np.clip(img_like.reshape(h, w, 3), 0.0, 1.0)


def dataset_stub(dataset: Dataset, pose) -> Dataset:
    """A one-frame view of the dataset geometry for rendering a single pose."""
    blank = np.zeros((dataset.intrinsics.height_px,
                      dataset.intrinsics.width_px, 3))
    return Dataset(
        images=[blank], intrinsics=dataset.intrinsics, poses=[pose],
        near=dataset.near, far=dataset.far, mode=dataset.mode,
        train_indices=[0], test_indices=[],
    )


def evaluate_split(state_or_ckpt, dataset: Dataset, config: TrainConfig,
                   indices: list[int], out_csv=None,
                   threads: int = 1) -> list[dict]:
    """Render the given frames and score them; optionally write the CSV report."""
    rows = []
    for idx in indices:
        rendered = render_image(state_or_ckpt, dataset, dataset.poses[idx],
                                config, eval_seed_index=idx, threads=threads)
        ref = dataset.images[idx]
        rows.append({
            "image_id": idx,
            "psnr": psnr(rendered, ref),
            "ssim": ssim(rendered, ref),
            "mse": mse(rendered, ref),
        })
    if out_csv is not None:
        write_eval_report(out_csv, rows)
    return rows
