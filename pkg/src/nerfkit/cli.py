"""Command-line entry points: synth, train, render, eval.

Configuration precedence: CLI flag > TOML config file > built-in default.
A config file holds one table per subcommand, e.g.

    [train]
    iters = 5000
    batch = 1024
    [train.ablations]
    view_dependence = false

Unknown keys are rejected.  Exit codes: 0 success, 1 runtime failure,
2 usage error.  RFK_THREADS is the fallback for --threads.
"""

from __future__ import annotations

import functools
import math
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import click
import numpy as np

from nerfkit import fields, scene, trainer
from nerfkit.checkpoint import load_checkpoint
from nerfkit.geometry import Pose

KNOWN_KEYS = {
    "synth": {"preset", "views", "res", "seed", "out", "n_dense", "white_bg",
              "camera_radius"},
    "train": {"data", "out", "iters", "batch", "n_coarse", "n_fine",
              "lr_init", "lr_final", "decay_iters", "sigma_noise", "seed",
              "L", "num_images", "width", "depth", "checkpoint_every",
              "threads", "white_bg", "ablations"},
    "render": {"checkpoint", "data", "out", "pose_index", "frames", "threads"},
    "eval": {"checkpoint", "data", "out", "split", "threads"},
}
ABLATION_KEYS = {"positional_encoding", "view_dependence", "hierarchical"}


def load_config_section(path, section: str) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise click.UsageError(f"cannot read config {path}: {e}")
    table = doc.get(section, {})
    unknown = set(table) - KNOWN_KEYS[section]
    if unknown:
        raise click.UsageError(
            f"unknown keys in [{section}]: {sorted(unknown)}")
    if "ablations" in table:
        bad = set(table["ablations"]) - ABLATION_KEYS
        if bad:
            raise click.UsageError(
                f"unknown keys in [{section}.ablations]: {sorted(bad)}")
    return table


def pick(flag_value, file_table: dict, key: str, default):
    """flag > config file > default; flags use None as 'not given'."""
    if flag_value is not None:
        return flag_value
    if key in file_table:
        return file_table[key]
    return default


def runtime_errors(fn):
    """Map runtime failures to exit code 1 (click owns usage errors / 2)."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.ClickException, click.Abort):
            raise
        except Exception as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(1)

    return wrapper


def resolve_threads(threads, table) -> int:
    if threads is None:
        threads = table.get("threads")
    if threads is None:
        threads = os.environ.get("RFK_THREADS")
    return max(1, int(threads)) if threads is not None else 1


@click.group()
def main():
    """Desk-scale neural radiance fields: synthesize data, train, render, eval."""


config_opt = click.option("--config", "-c", type=click.Path(exists=True),
                          default=None, help="TOML config file.")
threads_opt = click.option("--threads", type=int, default=None,
                           help="Ray-chunk thread pool size (env: RFK_THREADS).")


@main.command()
@config_opt
@click.option("--preset", default=None,
              help=f"Scene preset: {', '.join(fields.PRESET_NAMES)}.")
@click.option("--views", type=int, default=None, help="Number of views.")
@click.option("--res", type=int, default=None, help="Image resolution (square).")
@click.option("--seed", type=int, default=None)
@click.option("--n-dense", type=int, default=None,
              help="Oracle samples per ray.")
@click.option("--out", type=click.Path(), default=None, help="Scene directory.")
@runtime_errors
def synth(config, preset, views, res, seed, n_dense, out):
    """Generate a synthetic ground-truth dataset from an analytic field."""
    table = load_config_section(config, "synth")
    preset = pick(preset, table, "preset", "blob-specular-sphere")
    views = pick(views, table, "views", 24)
    res = pick(res, table, "res", 64)
    seed = pick(seed, table, "seed", 0)
    n_dense = pick(n_dense, table, "n_dense", 4096)
    out = pick(out, table, "out", None)
    if out is None:
        raise click.UsageError("an output directory is required (--out)")
    try:
        field = fields.make_preset(preset)
    except KeyError as e:
        raise click.UsageError(str(e.args[0]))
    radius = pick(None, table, "camera_radius", 4.0)
    scene.generate_synthetic_dataset(
        field, n_views=views, resolution=res, seed=seed, n_dense=n_dense,
        camera_radius=radius, out_dir=out)
    click.echo(f"wrote {views} views at {res}x{res} to {out}")


def _load_scene(data, background):
    """Load a dataset and, for bounded scenes, apply the (idempotent) scene
    normalization so geometry matches what training used."""
    ds = scene.load_dataset(_find_manifest(data), background=background)
    if ds.mode == "bounded_360":
        ds = scene.normalize_scene(ds)
    return ds


def _find_manifest(data) -> Path:
    p = Path(data)
    if p.is_dir():
        p = p / "transforms.json"
    if not p.exists():
        raise click.UsageError(f"dataset manifest not found: {p}")
    return p


def _limit_train_images(ds, num_images):
    if num_images is None or num_images >= len(ds.train_indices):
        return ds
    ds.train_indices = ds.train_indices[:num_images]
    return ds


@main.command()
@config_opt
@click.option("--data", type=click.Path(), default=None,
              help="Scene directory or manifest path.")
@click.option("--out", type=click.Path(), default=None, help="Run directory.")
@click.option("--iters", type=int, default=None)
@click.option("--batch", type=int, default=None)
@click.option("--n-coarse", type=int, default=None)
@click.option("--n-fine", type=int, default=None)
@click.option("--lr-init", type=float, default=None)
@click.option("--lr-final", type=float, default=None)
@click.option("--sigma-noise", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--L", "l_position", type=int, default=None,
              help="Position frequency count (direction count scales along).")
@click.option("--num-images", type=int, default=None,
              help="Use only the first N training images.")
@click.option("--width", type=int, default=None, help="Trunk width.")
@click.option("--no-posenc", is_flag=True, default=False)
@click.option("--no-viewdirs", is_flag=True, default=False)
@click.option("--no-hierarchical", is_flag=True, default=False)
@click.option("--resume", type=click.Path(exists=True), default=None,
              help="Checkpoint to resume from.")
@threads_opt
@runtime_errors
def train(config, data, out, iters, batch, n_coarse, n_fine, lr_init,
          lr_final, sigma_noise, seed, l_position, num_images, width,
          no_posenc, no_viewdirs, no_hierarchical, resume, threads):
    """Optimize a coarse/fine network pair on a dataset."""
    table = load_config_section(config, "train")
    data = pick(data, table, "data", None)
    out = pick(out, table, "out", None)
    if data is None:
        raise click.UsageError("a dataset is required (--data)")
    if out is None:
        raise click.UsageError("an output directory is required (--out)")

    abl_table = table.get("ablations", {})
    ablations = trainer.Ablations(
        positional_encoding=not no_posenc and abl_table.get("positional_encoding", True),
        view_dependence=not no_viewdirs and abl_table.get("view_dependence", True),
        hierarchical=not no_hierarchical and abl_table.get("hierarchical", True),
    )
    n_coarse = pick(n_coarse, table, "n_coarse", 64)
    n_fine = pick(n_fine, table, "n_fine", 128)
    if not ablations.hierarchical:
        # Single network at the full model's per-ray query budget: (2Nc+Nf, -).
        n_coarse = 2 * n_coarse + n_fine
        n_fine = 0

    cfg = trainer.TrainConfig(
        batch_rays=pick(batch, table, "batch", 4096),
        n_coarse=n_coarse,
        n_fine=max(1, n_fine) if ablations.hierarchical else 0,
        lr_init=pick(lr_init, table, "lr_init", 5e-4),
        lr_final=pick(lr_final, table, "lr_final", 5e-5),
        decay_iters=pick(None, table, "decay_iters", None),
        max_iters=pick(iters, table, "iters", 20000),
        sigma_noise_std=pick(sigma_noise, table, "sigma_noise", 0.0),
        seed=pick(seed, table, "seed", 0),
        ablations=ablations,
        L_position=pick(l_position, table, "L", 10),
        width=pick(width, table, "width", 256),
        depth=pick(None, table, "depth", 8),
        checkpoint_every=pick(None, table, "checkpoint_every", 1000),
    )
    ds = _load_scene(data, cfg.background)
    ds = _limit_train_images(ds, pick(num_images, table, "num_images", None))
    final = trainer.train(ds, cfg, out, resume_from=resume, progress=True)
    click.echo(f"final checkpoint: {final}")


def _interpolate_poses(a: Pose, b: Pose, n: int) -> list[Pose]:
    from scipy.spatial.transform import Rotation, Slerp

    slerp = Slerp([0.0, 1.0], Rotation.from_matrix([a.rotation, b.rotation]))
    out = []
    for s in np.linspace(0.0, 1.0, n):
        r = slerp(s).as_matrix()
        t = (1.0 - s) * a.translation + s * b.translation
        out.append(Pose(r, t))
    return out


@main.command()
@config_opt
@click.option("--checkpoint", type=click.Path(), default=None)
@click.option("--data", type=click.Path(), default=None,
              help="Dataset supplying intrinsics, bounds, and poses.")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
@click.option("--pose-index", type=int, multiple=True,
              help="Dataset pose(s) to render; repeatable.  Default: pose 0. "
                   "Exactly two indices plus --frames renders an interpolated path.")
@click.option("--frames", type=int, default=None,
              help="Interpolate this many frames between two --pose-index poses.")
@threads_opt
@runtime_errors
def render(config, checkpoint, data, out, pose_index, frames, threads):
    """Render novel views from a trained checkpoint."""
    from PIL import Image

    table = load_config_section(config, "render")
    checkpoint = pick(checkpoint, table, "checkpoint", None)
    data = pick(data, table, "data", None)
    out = pick(out, table, "out", None)
    frames = pick(frames, table, "frames", None)
    if checkpoint is None or not Path(checkpoint).exists():
        raise click.UsageError(f"checkpoint not found: {checkpoint}")
    if data is None or out is None:
        raise click.UsageError("--data and --out are required")
    n_threads = resolve_threads(threads, table)

    ckpt = load_checkpoint(checkpoint)
    cfg = trainer.config_from_checkpoint(ckpt)
    ds = _load_scene(data, cfg.background)
    idx = list(pose_index) or list(table.get("pose_index", [])) or [0]
    for i in idx:
        if not 0 <= i < len(ds.poses):
            raise click.UsageError(f"pose index {i} out of range 0..{len(ds.poses) - 1}")

    if frames is not None:
        if len(idx) != 2:
            raise click.UsageError("--frames needs exactly two --pose-index values")
        poses = _interpolate_poses(ds.poses[idx[0]], ds.poses[idx[1]], frames)
    else:
        poses = [ds.poses[i] for i in idx]

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for i, pose in enumerate(poses):
        img = trainer.render_image(ckpt, ds, pose, cfg, eval_seed_index=i,
                                   threads=n_threads)
        arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(arr).save(out / f"render_{i:03d}.png")
    click.echo(f"wrote {len(poses)} frame(s) to {out}")


@main.command("eval")
@config_opt
@click.option("--checkpoint", type=click.Path(), default=None)
@click.option("--data", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None, help="Metrics CSV path.")
@click.option("--split", type=click.Choice(["train", "test"]), default=None)
@threads_opt
@runtime_errors
def eval_cmd(config, checkpoint, data, out, split, threads):
    """Score a checkpoint against a dataset split (PSNR/SSIM/MSE CSV)."""
    table = load_config_section(config, "eval")
    checkpoint = pick(checkpoint, table, "checkpoint", None)
    data = pick(data, table, "data", None)
    out = pick(out, table, "out", None)
    split = pick(split, table, "split", "test")
    if checkpoint is None or not Path(checkpoint).exists():
        raise click.UsageError(f"checkpoint not found: {checkpoint}")
    if data is None or out is None:
        raise click.UsageError("--data and --out are required")
    n_threads = resolve_threads(threads, table)

    ckpt = load_checkpoint(checkpoint)
    cfg = trainer.config_from_checkpoint(ckpt)
    ds = _load_scene(data, cfg.background)
    indices = ds.train_indices if split == "train" else ds.test_indices
    if not indices:
        raise click.UsageError(f"dataset has no {split} frames")
    rows = trainer.evaluate_split(ckpt, ds, cfg, indices, out_csv=out,
                                  threads=n_threads)
    mean_psnr = float(np.mean([r["psnr"] for r in rows
                               if math.isfinite(r["psnr"])] or [math.inf]))
    click.echo(f"{split} mean PSNR: {mean_psnr:.2f} dB over {len(rows)} frames")


if __name__ == "__main__":
    main()
