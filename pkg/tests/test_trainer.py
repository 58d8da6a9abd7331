import csv

import numpy as np
import pytest

from nerfkit.checkpoint import load_checkpoint
from nerfkit.fields import make_preset
from nerfkit.scene import generate_synthetic_dataset
from nerfkit.trainer import (
    Ablations,
    TrainConfig,
    dataset_rays,
    evaluate_split,
    init_train_state,
    loss_report,
    lr_at,
    render_image,
    sample_ray_batch,
    substream,
    train,
    train_step,
)

# A deliberately tiny setup: every trainer test must run in seconds on one
# core.  At width 16 some seeds start with a dead (all-negative pre-ReLU)
# sigma head; this seed does not.
TINY = TrainConfig(batch_rays=32, n_coarse=8, n_fine=16, max_iters=10,
                   L_position=2, width=16, depth=8, checkpoint_every=0,
                   seed=1)


@pytest.fixture(scope="module")
def tiny_dataset():
    return generate_synthetic_dataset(make_preset("blob"), n_views=3,
                                      resolution=8, seed=1, n_dense=128)


@pytest.fixture(scope="module")
def ssim_sized_dataset():
    # SSIM needs at least an 11x11 image.
    return generate_synthetic_dataset(make_preset("blob"), n_views=3,
                                      resolution=12, seed=1, n_dense=128)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_rays=0)
        with pytest.raises(ValueError):
            TrainConfig(lr_init=1e-5, lr_final=1e-4)

    def test_mlp_dims_follow_encoding(self):
        cfg = TrainConfig()
        mlp = cfg.mlp_config()
        assert (mlp.in_x, mlp.in_d) == (60, 24)
        assert mlp.view_width == 128

    def test_no_posenc_uses_raw_coordinates(self):
        cfg = TrainConfig(ablations=Ablations(positional_encoding=False))
        mlp = cfg.mlp_config()
        assert (mlp.in_x, mlp.in_d) == (3, 3)

    def test_no_viewdirs_drops_direction_input(self):
        cfg = TrainConfig(ablations=Ablations(view_dependence=False))
        assert cfg.mlp_config().in_d == 0

    def test_frequency_sweep_encoding(self):
        assert TrainConfig(L_position=5).encoding().L_direction == 2


class TestLrSchedule:
    CFG = TrainConfig(lr_init=5e-4, lr_final=5e-5, max_iters=1000)

    def test_endpoints(self):
        assert lr_at(0, self.CFG) == 5e-4
        assert lr_at(1000, self.CFG) == pytest.approx(5e-5, rel=1e-12)

    def test_geometric_midpoint(self):
        # Exponential decay: halfway through, lr is the geometric mean.
        assert lr_at(500, self.CFG) == pytest.approx(
            np.sqrt(5e-4 * 5e-5), rel=1e-12)

    def test_flat_after_decay(self):
        assert lr_at(5000, self.CFG) == lr_at(1000, self.CFG)

    def test_decay_iters_override(self):
        cfg = TrainConfig(lr_init=5e-4, lr_final=5e-5, max_iters=1000,
                          decay_iters=100)
        assert lr_at(100, cfg) == pytest.approx(5e-5, rel=1e-12)

    def test_negative_iteration(self):
        with pytest.raises(ValueError):
            lr_at(-1, self.CFG)


class TestLossReport:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        cc = rng.uniform(0, 1, size=(5, 3))
        cf = rng.uniform(0, 1, size=(5, 3))
        t = rng.uniform(0, 1, size=(5, 3))
        report = loss_report(cc, cf, t, iteration=7)
        acc_c = acc_f = 0.0
        for r in range(5):
            for ch in range(3):
                acc_c += (cc[r, ch] - t[r, ch]) ** 2
                acc_f += (cf[r, ch] - t[r, ch]) ** 2
        assert report.coarse_term == pytest.approx(acc_c / 5, rel=1e-14)
        assert report.fine_term == pytest.approx(acc_f / 5, rel=1e-14)
        assert report.total == pytest.approx((acc_c + acc_f) / 5, rel=1e-14)
        assert report.iteration == 7

    def test_rejects_non_finite(self):
        bad = np.full((2, 3), np.nan)
        with pytest.raises(FloatingPointError):
            loss_report(bad, bad, np.zeros((2, 3)), 0)


class TestRaySampling:
    def test_targets_match_pixels(self, tiny_dataset):
        rng = substream(0, 2, 0)
        batch, targets = sample_ray_batch(tiny_dataset, 64, rng)
        assert batch.origins.shape == (64, 3)
        assert targets.shape == (64, 3)
        assert np.all((targets >= 0) & (targets <= 1))

    def test_uniform_over_train_images(self, tiny_dataset):
        # With train images {0, 1, 2}, counts should be near-uniform.
        rng = substream(0, 2, 1)
        counts = np.zeros(3)
        for _ in range(50):
            batch, _ = sample_ray_batch(tiny_dataset, 128, rng)
            # Recover the image index from the ray origin.
            for i in range(len(tiny_dataset)):
                t = tiny_dataset.poses[i].translation
                counts[i] += np.sum(np.all(batch.origins == t, axis=1))
        assert counts.sum() == 50 * 128
        freq = counts / counts.sum()
        np.testing.assert_allclose(freq, 1 / 3, atol=0.03)

    def test_ray_directions_match_geometry(self, tiny_dataset):
        from nerfkit.geometry import generate_ray
        batch = dataset_rays(tiny_dataset, np.array([1, 2]),
                             np.array([3.0, 0.0]), np.array([5.0, 7.0]))
        for k, (i, x, y) in enumerate([(1, 3, 5), (2, 0, 7)]):
            ray = generate_ray(tiny_dataset.intrinsics, tiny_dataset.poses[i],
                               x, y)
            np.testing.assert_allclose(batch.directions[k], ray.direction,
                                       atol=1e-12)

    def test_empty_train_split_rejected(self, tiny_dataset):
        from dataclasses import replace
        import copy
        ds = copy.copy(tiny_dataset)
        ds = type(ds)(images=ds.images, intrinsics=ds.intrinsics,
                      poses=ds.poses, near=ds.near, far=ds.far, mode=ds.mode,
                      train_indices=[], test_indices=list(range(len(ds))))
        with pytest.raises(ValueError, match="no training images"):
            sample_ray_batch(ds, 4, substream(0, 2, 0))


class TestTrainStep:
    def test_updates_both_networks(self, tiny_dataset):
        state = init_train_state(TINY, dtype=np.float64)
        before_c = state.coarse.copy()
        before_f = state.fine.copy()
        report = train_step(state, tiny_dataset, TINY)
        assert state.iteration == 1
        assert np.isfinite(report.total)
        assert any(np.any(state.coarse.arrays[k] != before_c.arrays[k])
                   for k in before_c.arrays)
        assert any(np.any(state.fine.arrays[k] != before_f.arrays[k])
                   for k in before_f.arrays)

    def test_fine_net_untouched_without_hierarchy(self, tiny_dataset):
        from dataclasses import replace
        cfg = replace(TINY, ablations=Ablations(hierarchical=False))
        state = init_train_state(cfg, dtype=np.float64)
        before_f = state.fine.copy()
        train_step(state, tiny_dataset, cfg)
        for k in before_f.arrays:
            np.testing.assert_array_equal(state.fine.arrays[k],
                                          before_f.arrays[k])
        assert state.fine_adam.step_count == 0

    def test_deterministic(self, tiny_dataset):
        reports = []
        states = []
        for _ in range(2):
            state = init_train_state(TINY, dtype=np.float64)
            r = [train_step(state, tiny_dataset, TINY) for _ in range(3)]
            reports.append([x.total for x in r])
            states.append(state)
        assert reports[0] == reports[1]
        for k in states[0].coarse.arrays:
            np.testing.assert_array_equal(states[0].coarse.arrays[k],
                                          states[1].coarse.arrays[k])

    def test_overfits_tiny_scene(self, tiny_dataset):
        # 1000 steps on a tiny model must cut the (batch-noise-smoothed)
        # loss by >= 20x: the gradient path end-to-end actually descends.
        cfg = TrainConfig(batch_rays=64, n_coarse=8, n_fine=16, max_iters=1000,
                          L_position=4, width=24, depth=8, seed=0,
                          lr_init=1e-2, lr_final=1e-3, checkpoint_every=0)
        state = init_train_state(cfg, dtype=np.float64)
        losses = [train_step(state, tiny_dataset, cfg).total
                  for _ in range(cfg.max_iters)]
        first = float(np.mean(losses[:10]))
        last = float(np.mean(losses[-10:]))
        assert last < first / 20.0


class TestTrainLoop:
    def test_writes_log_and_final_checkpoint(self, tiny_dataset, tmp_path):
        final = train(tiny_dataset, TINY, tmp_path / "run", log_every=5)
        assert final.exists()
        ck = load_checkpoint(final)
        assert ck.iteration == TINY.max_iters
        assert ck.metadata["train_config"]["seed"] == TINY.seed
        with open(tmp_path / "run" / "train_log.csv") as f:
            rows = list(csv.DictReader(f))
        assert rows and int(rows[-1]["iter"]) == TINY.max_iters - 1
        assert all(float(r["loss"]) > 0 for r in rows)

    def test_resume_is_bit_identical(self, tiny_dataset, tmp_path):
        from dataclasses import replace
        # Pin decay_iters so the interrupted run's shorter max_iters does not
        # change the learning-rate schedule.
        cfg = replace(TINY, max_iters=6, checkpoint_every=3, decay_iters=6)
        uninterrupted = train(tiny_dataset, cfg, tmp_path / "a")
        train(tiny_dataset, replace(cfg, max_iters=3), tmp_path / "b")
        resumed = train(tiny_dataset, cfg, tmp_path / "b",
                        resume_from=tmp_path / "b" / "checkpoint_final.nrfk")
        a, b = load_checkpoint(uninterrupted), load_checkpoint(resumed)
        assert a.iteration == b.iteration == 6
        for k in a.coarse.arrays:
            np.testing.assert_array_equal(a.coarse.arrays[k], b.coarse.arrays[k])
            np.testing.assert_array_equal(a.fine.arrays[k], b.fine.arrays[k])
            np.testing.assert_array_equal(a.coarse_adam.m[k], b.coarse_adam.m[k])

    def test_zero_iterations(self, tiny_dataset, tmp_path):
        from dataclasses import replace
        final = train(tiny_dataset, replace(TINY, max_iters=0), tmp_path / "z")
        assert load_checkpoint(final).iteration == 0


class TestRenderAndEvaluate:
    def test_render_image_shape_and_range(self, tiny_dataset):
        state = init_train_state(TINY)
        img = render_image(state, tiny_dataset, tiny_dataset.poses[0], TINY)
        assert img.shape == (8, 8, 3)
        assert np.all((img >= 0) & (img <= 1))

    def test_chunking_does_not_change_pixels(self, tiny_dataset):
        state = init_train_state(TINY)
        a = render_image(state, tiny_dataset, tiny_dataset.poses[0], TINY,
                         chunk=64)
        b = render_image(state, tiny_dataset, tiny_dataset.poses[0], TINY,
                         chunk=64, threads=2)
        np.testing.assert_array_equal(a, b)

    def test_evaluate_split_rows_and_csv(self, ssim_sized_dataset, tmp_path):
        state = init_train_state(TINY)
        out = tmp_path / "metrics.csv"
        rows = evaluate_split(state, ssim_sized_dataset, TINY, [0, 2],
                              out_csv=out)
        assert [r["image_id"] for r in rows] == [0, 2]
        assert all(np.isfinite(r["psnr"]) for r in rows)
        with open(out) as f:
            parsed = list(csv.DictReader(f))
        assert parsed[-1]["image_id"] == "mean"
