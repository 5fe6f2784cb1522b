import math
import warnings

import numpy as np
import pytest
import torch
import torch.nn as nn

from conftest import mbb_spec
from topoforge.core import DensityField, encode_field
from topoforge.diffusion import (
    Denoiser,
    NoiseSchedule,
    TrainConfig,
    ddim_step,
    denoise,
    guidance_step,
    load_checkpoint,
    make_schedule,
    noise,
    predict_eps,
    predict_eps_from_v,
    predict_z0,
    predict_z0_from_v,
    save_checkpoint,
    train,
    velocity_target,
)
from topoforge.diffusion.checkpoint import CheckpointError
from topoforge.diffusion.conditioning import BLOCKS
from topoforge.diffusion.sampling import guidance_loss
from topoforge.diffusion.schedule import ddim_step_values, velocity_target as v_target


def abar_ref(t: int, total: int) -> float:
    # independent scalar evaluation of the retention profile
    f = lambda s: math.cos((s / total + 0.008) / 1.008 * math.pi / 2.0) ** 2
    return min(1.0, max(1e-5, f(t) / f(0)))


class TrueVelocity(nn.Module):
    """Closure over a fixed (z0, eps) pair returning the exact velocity."""

    def __init__(self, z0: np.ndarray, eps: np.ndarray, schedule: NoiseSchedule):
        super().__init__()
        self.z0 = torch.from_numpy(np.asarray(z0, dtype=np.float64))
        self.eps = torch.from_numpy(np.asarray(eps, dtype=np.float64))
        self.schedule = schedule
        self.calls = 0

    @property
    def dtype(self):
        return torch.float64

    def forward(self, z, t, cond):
        self.calls += 1
        ti = int(t[0])
        sa = float(self.schedule.sqrt_ab(ti))
        sb = float(self.schedule.sqrt_1mab(ti))
        v = sa * self.eps - sb * self.z0
        return v[None, None].expand(z.shape[0], 1, -1, -1).to(z.dtype)


class FixedVelocity(nn.Module):
    """Always predicts the given constant velocity field."""

    def __init__(self, v: np.ndarray):
        super().__init__()
        self.v = torch.from_numpy(np.asarray(v, dtype=np.float64))

    @property
    def dtype(self):
        return torch.float64

    def forward(self, z, t, cond):
        return self.v[None, None].expand(z.shape[0], 1, -1, -1).to(z.dtype) + 0.0 * z


class TestSchedule:
    def test_starts_at_one_exactly(self):
        assert make_schedule(100).alpha_bar[0] == 1.0

    def test_strictly_decreasing(self):
        ab = make_schedule(100).alpha_bar
        assert np.all(np.diff(ab) < 0)

    def test_floor_respected(self):
        ab = make_schedule(200).alpha_bar
        assert ab[-1] >= 1e-5 - 1e-18

    def test_floor_caps_usable_length(self):
        # profile goes flat at the floor before the end for very long schedules
        with pytest.raises(ValueError, match="too large"):
            make_schedule(1000)

    @pytest.mark.parametrize("total", [100, 200])
    def test_matches_reference_formula(self, total):
        ab = make_schedule(total).alpha_bar
        ref = np.array([abar_ref(t, total) for t in range(total + 1)])
        assert np.allclose(ab, ref, rtol=0, atol=1e-15)

    def test_rejects_bad_start(self):
        ab = make_schedule(10).alpha_bar.copy()
        ab[0] = 0.999
        with pytest.raises(ValueError, match="exactly 1"):
            NoiseSchedule(total_steps=10, alpha_bar=ab)

    def test_rejects_non_monotone(self):
        ab = make_schedule(10).alpha_bar.copy()
        ab[5] = ab[4]
        with pytest.raises(ValueError, match="decreasing"):
            NoiseSchedule(total_steps=10, alpha_bar=ab)

    def test_rejects_wrong_length(self):
        ab = make_schedule(10).alpha_bar
        with pytest.raises(ValueError, match="entries"):
            NoiseSchedule(total_steps=11, alpha_bar=ab)

    def test_too_few_steps(self):
        with pytest.raises(ValueError):
            make_schedule(1)

    def test_noise_at_zero_is_input(self, rng):
        sched = make_schedule(100)
        z0 = rng.standard_normal((16, 16))
        eps = rng.standard_normal((16, 16))
        assert np.array_equal(noise(z0, 0, eps, sched), z0)

    def test_noise_time_bounds(self, rng):
        sched = make_schedule(10)
        z = rng.standard_normal((16, 16))
        with pytest.raises(ValueError):
            noise(z, 11, z, sched)
        with pytest.raises(ValueError):
            ddim_step_values(z, z, 0, sched)


class TestExactAlgebra:
    """Noising then inverting through the velocity must be lossless."""

    @pytest.mark.parametrize("t", [1, 7, 50, 100])
    def test_round_trip_recovers_components(self, rng, t):
        sched = make_schedule(100)
        z0 = rng.standard_normal((32, 32))
        eps = rng.standard_normal((32, 32))
        zt = noise(z0, t, eps, sched)
        v = velocity_target(z0, eps, t, sched)
        assert np.max(np.abs(predict_z0_from_v(zt, v, t, sched) - z0)) <= 1e-6
        assert np.max(np.abs(predict_eps_from_v(zt, v, t, sched) - eps)) <= 1e-6

    def test_round_trip_is_near_machine_precision(self, rng):
        sched = make_schedule(100)
        z0 = rng.standard_normal((32, 32))
        eps = rng.standard_normal((32, 32))
        worst = 0.0
        for t in range(1, 101):
            zt = noise(z0, t, eps, sched)
            v = velocity_target(z0, eps, t, sched)
            worst = max(worst, np.max(np.abs(predict_z0_from_v(zt, v, t, sched) - z0)))
        assert worst <= 1e-12

    def test_reverse_step_lands_on_true_trajectory(self, rng):
        sched = make_schedule(100)
        z0 = rng.standard_normal((16, 16))
        eps = rng.standard_normal((16, 16))
        for t in [1, 33, 100]:
            zt = noise(z0, t, eps, sched)
            v = velocity_target(z0, eps, t, sched)
            stepped = ddim_step_values(
                predict_z0_from_v(zt, v, t, sched),
                predict_eps_from_v(zt, v, t, sched),
                t,
                sched,
            )
            assert np.max(np.abs(stepped - noise(z0, t - 1, eps, sched))) <= 1e-12


class TestSamplingWithOracleModel:
    """A model that emits the exact velocity makes the whole reverse chain an
    identity back to z0."""

    def test_predictors_recover_components(self, rng):
        sched = make_schedule(100)
        z0 = rng.standard_normal((16, 16))
        eps = rng.standard_normal((16, 16))
        model = TrueVelocity(z0, eps, sched)
        cond = np.zeros(128)
        for t in [1, 40, 100]:
            zt = noise(z0, t, eps, sched)
            assert np.max(np.abs(predict_z0(model, sched, zt, t, cond) - z0)) <= 1e-10
            assert np.max(np.abs(predict_eps(model, sched, zt, t, cond) - eps)) <= 1e-10

    def test_single_step_exact(self, rng):
        sched = make_schedule(100)
        z0 = rng.standard_normal((16, 16))
        eps = rng.standard_normal((16, 16))
        model = TrueVelocity(z0, eps, sched)
        zt = noise(z0, 60, eps, sched)
        out = ddim_step(model, sched, zt, 60, np.zeros(128))
        assert np.max(np.abs(out - noise(z0, 59, eps, sched))) <= 1e-12

    def test_full_chain_recovers_z0(self, rng):
        sched = make_schedule(100)
        z0 = rng.standard_normal((16, 16))
        eps = rng.standard_normal((16, 16))
        model = TrueVelocity(z0, eps, sched)
        zT = noise(z0, 100, eps, sched)
        out = denoise(model, sched, zT, 100, np.zeros(128))
        assert np.max(np.abs(out - z0)) <= 1e-5
        assert model.calls == 100

    def test_partial_chain_recovers_z0(self, rng):
        sched = make_schedule(100)
        z0 = rng.standard_normal((16, 16))
        eps = rng.standard_normal((16, 16))
        model = TrueVelocity(z0, eps, sched)
        z20 = noise(z0, 20, eps, sched)
        out = denoise(model, sched, z20, 20, np.zeros(128))
        assert np.max(np.abs(out - z0)) <= 1e-5

    def test_guidance_stride_placement(self, rng):
        # guided on k = 0, 3, 6 when stride=3 from t_start=7
        sched = make_schedule(100)
        z0 = rng.standard_normal((16, 16))
        eps = rng.standard_normal((16, 16))
        model = TrueVelocity(z0, eps, sched)
        zt = noise(z0, 7, eps, sched)
        denoise(model, sched, zt, 7, np.zeros(128), z_ref=z0, stride=3, scale=0.0)
        assert model.calls == 7 + 3

    def test_no_reference_means_no_guidance_calls(self, rng):
        sched = make_schedule(100)
        z0 = rng.standard_normal((16, 16))
        eps = rng.standard_normal((16, 16))
        model = TrueVelocity(z0, eps, sched)
        denoise(model, sched, noise(z0, 10, eps, sched), 10, np.zeros(128))
        assert model.calls == 10

    def test_on_step_sees_every_level(self, rng):
        sched = make_schedule(100)
        z0 = rng.standard_normal((16, 16))
        eps = rng.standard_normal((16, 16))
        model = TrueVelocity(z0, eps, sched)
        seen = []
        out = denoise(
            model, sched, noise(z0, 5, eps, sched), 5, np.zeros(128),
            on_step=lambda t, z: seen.append((t, z.copy())),
        )
        assert [t for t, _ in seen] == [4, 3, 2, 1, 0]
        assert np.array_equal(seen[-1][1], out)

    def test_start_time_validated(self, rng):
        sched = make_schedule(100)
        z = rng.standard_normal((16, 16))
        model = TrueVelocity(z, z, sched)
        with pytest.raises(ValueError, match="t_start"):
            denoise(model, sched, z, 101, np.zeros(128))
        with pytest.raises(ValueError, match="stride"):
            denoise(model, sched, z, 10, np.zeros(128), stride=0)


class TestGuidance:
    def test_gradient_matches_finite_differences(self, rng):
        torch.manual_seed(0)
        sched = make_schedule(50)
        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=3).double().eval()
        z = rng.standard_normal((16, 16))
        ref = rng.standard_normal((16, 16))
        cond = rng.standard_normal(128)
        t = 25

        stepped = guidance_step(model, sched, z, t, cond, ref, scale=1.0)
        grad = z - stepped

        ct = torch.from_numpy(cond)
        rt = torch.from_numpy(ref)
        h = 1e-6
        worst = 0.0
        for (i, j) in [(0, 0), (3, 5), (7, 7), (4, 2), (1, 6)]:
            zp, zm = z.copy(), z.copy()
            zp[i, j] += h
            zm[i, j] -= h
            lp = float(guidance_loss(model, torch.from_numpy(zp), t, ct, rt, sched))
            lm = float(guidance_loss(model, torch.from_numpy(zm), t, ct, rt, sched))
            fd = (lp - lm) / (2 * h)
            worst = max(worst, abs(fd - grad[i, j]) / max(abs(fd), 1e-12))
        assert worst <= 1e-3

    def test_masked_gradient_matches_finite_differences(self, rng):
        sched = make_schedule(50)
        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=3).double().eval()
        z = rng.standard_normal((16, 16))
        ref = rng.standard_normal((16, 16))
        cond = rng.standard_normal(128)
        w = (rng.random((16, 16)) > 0.4).astype(np.float64)
        t = 10

        stepped = guidance_step(model, sched, z, t, cond, ref, weight=w, scale=1.0)
        grad = z - stepped

        ct, rt, wt = map(torch.from_numpy, (cond, ref, w))
        h = 1e-6
        for (i, j) in [(2, 2), (6, 1), (5, 5)]:
            zp, zm = z.copy(), z.copy()
            zp[i, j] += h
            zm[i, j] -= h
            lp = float(guidance_loss(model, torch.from_numpy(zp), t, ct, rt, sched, wt))
            lm = float(guidance_loss(model, torch.from_numpy(zm), t, ct, rt, sched, wt))
            fd = (lp - lm) / (2 * h)
            assert abs(fd - grad[i, j]) / max(abs(fd), 1e-12) <= 1e-3

    def test_loss_scale_independent_of_mask_coverage(self):
        # constant mismatch d: loss ~ d^2 regardless of how much is masked in
        sched = make_schedule(100)
        t = 50
        sa = float(sched.sqrt_ab(t))
        zt = np.ones((16, 16))
        model = FixedVelocity(np.zeros((16, 16)))
        d = 0.37
        ref = torch.from_numpy(sa * zt - d)
        losses = []
        for cover in [64, 192]:
            w = np.zeros(256)
            w[:cover] = 1.0
            wt = torch.from_numpy(w.reshape(16, 16))
            losses.append(
                float(guidance_loss(model, torch.from_numpy(zt), t, torch.zeros(128), ref, sched, wt))
            )
        assert losses[0] == pytest.approx(d * d, rel=1e-6)
        assert losses[0] == pytest.approx(losses[1], rel=1e-6)

    def test_full_mask_matches_unmasked(self, rng):
        sched = make_schedule(100)
        model = FixedVelocity(rng.standard_normal((16, 16)))
        zt = torch.from_numpy(rng.standard_normal((16, 16)))
        ref = torch.from_numpy(rng.standard_normal((16, 16)))
        plain = float(guidance_loss(model, zt, 30, torch.zeros(128), ref, sched))
        full = float(
            guidance_loss(model, zt, 30, torch.zeros(128), ref, sched, torch.ones(16, 16))
        )
        assert full == pytest.approx(plain, rel=1e-6)

    def test_step_reduces_mismatch(self, rng):
        sched = make_schedule(100)
        model = FixedVelocity(np.zeros((16, 16)))
        z = rng.standard_normal((16, 16))
        ref = np.zeros((16, 16))
        t = 50
        before = float(
            guidance_loss(
                model, torch.from_numpy(z), t, torch.zeros(128), torch.from_numpy(ref), sched
            )
        )
        z2 = guidance_step(model, sched, z, t, np.zeros(128), ref, scale=10.0)
        after = float(
            guidance_loss(
                model, torch.from_numpy(z2), t, torch.zeros(128), torch.from_numpy(ref), sched
            )
        )
        assert after < before

    def test_non_finite_gradient_skipped(self, rng):
        class NanModel(nn.Module):
            @property
            def dtype(self):
                return torch.float64

            def forward(self, z, t, cond):
                return z * float("nan")

        sched = make_schedule(100)
        z = rng.standard_normal((16, 16))
        with pytest.warns(UserWarning, match="non-finite"):
            out = guidance_step(NanModel(), sched, z, 10, np.zeros(128), z)
        assert np.array_equal(out, z)


class TestConditioning:
    def test_embedding_permutation_invariant(self):
        from topoforge.core import LoadPoint, ProblemSpec, SupportPoint

        spec = mbb_spec(12, 4)
        shuffled = ProblemSpec(
            supports=tuple(reversed(spec.supports)),
            loads=tuple(reversed(spec.loads)),
            volume_fraction=spec.volume_fraction,
            aspect=spec.aspect,
            cell_size=spec.cell_size,
        )
        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=0)
        a = model.embed(spec).vector
        b = model.embed(shuffled).vector
        assert np.array_equal(a, b)

    def test_embedding_deterministic(self):
        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=0)
        spec = mbb_spec(12, 4)
        assert np.array_equal(model.embed(spec).vector, model.embed(spec).vector)

    def test_volume_fraction_touches_only_its_block(self):
        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=0)
        a = model.embed(mbb_spec(12, 4, volfrac=0.3)).vector
        b = model.embed(mbb_spec(12, 4, volfrac=0.6)).vector
        lo, hi = BLOCKS["volume_fraction"]
        assert not np.array_equal(a[lo:hi], b[lo:hi])
        outside = np.r_[a[:lo], a[hi:]]
        outside_b = np.r_[b[:lo], b[hi:]]
        assert np.array_equal(outside, outside_b)

    def test_load_change_touches_only_load_block(self):
        from topoforge.core import LoadPoint, ProblemSpec

        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=0)
        spec = mbb_spec(12, 4)
        moved = ProblemSpec(
            supports=spec.supports,
            loads=(LoadPoint(x=0.5, y=0.5, fx=0.0, fy=-1.0),),
            volume_fraction=spec.volume_fraction,
            aspect=spec.aspect,
            cell_size=spec.cell_size,
        )
        a = model.embed(spec).vector
        b = model.embed(moved).vector
        lo, hi = BLOCKS["loads"]
        assert not np.array_equal(a[lo:hi], b[lo:hi])
        assert np.array_equal(np.r_[a[:lo], a[hi:]], np.r_[b[:lo], b[hi:]])

    def test_block_layout_covers_vector(self):
        spans = sorted(BLOCKS.values())
        assert spans[0][0] == 0 and spans[-1][1] == 128
        for (a, b), (c, d) in zip(spans, spans[1:]):
            assert b == c


class TestDenoiser:
    def test_output_shape(self):
        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=0)
        z = torch.randn(2, 1, 16, 16)
        out = model(z, torch.tensor([3, 7]), torch.randn(2, 128))
        assert out.shape == (2, 1, 16, 16)

    def test_seeded_init_reproducible(self):
        a = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=5)
        b = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=5)
        for (ka, pa), (kb, pb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert ka == kb
            assert torch.equal(pa, pb)

    def test_different_seed_differs(self):
        a = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=0)
        b = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=1)
        assert not torch.equal(a.out.weight, b.out.weight)

    def test_forward_deterministic(self):
        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=0).eval()
        z = torch.randn(1, 1, 16, 16)
        t = torch.tensor([4])
        c = torch.randn(1, 128)
        with torch.no_grad():
            assert torch.equal(model(z, t, c), model(z, t, c))

    def test_resolution_must_divide(self):
        with pytest.raises(ValueError, match="multiple of 8"):
            Denoiser(resolution=12)

    def test_wrong_latent_size_rejected(self):
        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=0)
        with pytest.raises(ValueError, match="expects"):
            model(torch.randn(1, 1, 8, 8), torch.tensor([1]), torch.randn(1, 128))

    def test_default_architecture_reported(self):
        model = Denoiser()
        arch = model.architecture()
        assert arch["widths"] == [32, 64, 128, 128]
        assert arch["resolution"] == 64
        assert len(model.arch_hash()) == 64
        assert model.parameter_count() > 100_000


def tiny_corpus(rng, n=6):
    specs = [mbb_spec(12, 4, volfrac=0.3 + 0.05 * (i % 3)) for i in range(n)]
    fields = [
        DensityField.from_array(np.clip(rng.random((16, 16)), 0.0, 1.0)) for _ in range(n)
    ]
    return list(zip(fields, specs))


class TestTraining:
    def test_corpus_size_enforced(self, rng):
        sched = make_schedule(10)
        with pytest.raises(ValueError, match="at least"):
            train(tiny_corpus(rng, 3), sched, TrainConfig(min_corpus=5))

    def test_loss_drops_when_overfitting(self, rng):
        sched = make_schedule(20)
        corpus = tiny_corpus(rng, 4)
        cfg = TrainConfig(
            steps=500, batch_size=4, lr=2e-3, ema_decay=0.95, seed=0,
            log_every=1, min_corpus=1,
        )
        losses = []
        model = Denoiser(widths=(8, 16, 16, 16), resolution=16, seed=2)
        out = train(corpus, sched, cfg, model=model, log_fn=lambda s, l, r: losses.append(l))
        head = float(np.mean(losses[:20]))
        tail = float(np.mean(losses[-20:]))
        assert tail < head / 2
        z = torch.randn(1, 1, 16, 16)
        with torch.no_grad():
            pred = out(z, torch.tensor([5]), torch.randn(1, 128))
        assert torch.all(torch.isfinite(pred))

    def test_training_is_reproducible(self, rng):
        sched = make_schedule(20)
        corpus = tiny_corpus(rng, 4)
        cfg = TrainConfig(steps=8, batch_size=2, seed=7, min_corpus=1)
        a = train(corpus, sched, cfg, model=Denoiser(widths=(8, 16, 16, 16), resolution=16, seed=2))
        b = train(corpus, sched, cfg, model=Denoiser(widths=(8, 16, 16, 16), resolution=16, seed=2))
        for pa, pb in zip(a.state_dict().values(), b.state_dict().values()):
            assert torch.equal(pa, pb)

    def test_divergence_raises(self, rng):
        sched = make_schedule(20)
        corpus = tiny_corpus(rng, 4)
        cfg = TrainConfig(steps=30, batch_size=4, lr=1e12, min_corpus=1)
        model = Denoiser(widths=(8, 16, 16, 16), resolution=16, seed=2)
        with pytest.raises(RuntimeError, match="non-finite"):
            train(corpus, sched, cfg, model=model)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(steps=0)
        with pytest.raises(ValueError):
            TrainConfig(ema_decay=1.0)


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=9)
        sched = make_schedule(100)
        p = tmp_path / "model.ckpt"
        save_checkpoint(p, model, sched)
        loaded, sched2 = load_checkpoint(p)
        assert loaded.architecture() == model.architecture()
        assert np.array_equal(sched2.alpha_bar, sched.alpha_bar)
        sa, sb = model.state_dict(), loaded.state_dict()
        assert set(sa) == set(sb)
        for k in sa:
            assert torch.equal(sa[k], sb[k]), k

    def test_loaded_model_same_outputs(self, tmp_path):
        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=9).eval()
        sched = make_schedule(50)
        p = tmp_path / "model.ckpt"
        save_checkpoint(p, model, sched)
        loaded, _ = load_checkpoint(p)
        z = torch.randn(1, 1, 16, 16)
        t = torch.tensor([3])
        c = torch.randn(1, 128)
        with torch.no_grad():
            assert torch.equal(model(z, t, c), loaded(z, t, c))

    def test_corruption_detected(self, tmp_path):
        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=9)
        p = tmp_path / "model.ckpt"
        save_checkpoint(p, model, make_schedule(50))
        raw = bytearray(p.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="integrity"):
            load_checkpoint(p)

    def test_truncation_detected(self, tmp_path):
        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=9)
        p = tmp_path / "model.ckpt"
        save_checkpoint(p, model, make_schedule(50))
        p.write_bytes(p.read_bytes()[:40])
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_bad_magic_detected(self, tmp_path):
        import hashlib

        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=9)
        p = tmp_path / "model.ckpt"
        save_checkpoint(p, model, make_schedule(50))
        body = bytearray(p.read_bytes()[:-32])
        body[0] = ord(b"X")
        p.write_bytes(bytes(body) + hashlib.sha256(bytes(body)).digest())
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(p)

    def test_shape_mismatch_names_tensor(self, tmp_path):
        import hashlib
        import json

        model = Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=9)
        p = tmp_path / "model.ckpt"
        save_checkpoint(p, model, make_schedule(50))
        raw = p.read_bytes()
        body = raw[:-32]
        head_len = int.from_bytes(body[8:16], "little")
        header = json.loads(body[16 : 16 + head_len].decode())
        header["architecture"]["widths"] = [8, 8, 8, 8]
        new_head = json.dumps(header, sort_keys=True).encode()
        new_body = body[:8] + len(new_head).to_bytes(8, "little") + new_head + body[16 + head_len :]
        p.write_bytes(new_body + hashlib.sha256(new_body).digest())
        with pytest.raises(CheckpointError, match="enc0"):
            load_checkpoint(p)
