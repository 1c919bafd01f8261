import numpy as np
import pytest

from fgslab.arrays import SeededRng
from fgslab.denoiser import TrainConfig, train
from fgslab.diffusion import make_schedule
from fgslab.guidance import GuidanceConfig
from fgslab.mixture import MixtureModel
from fgslab.pipeline import (
    AnalyticDenoiser,
    EditRequest,
    LearnedDenoiser,
    reconstruct_only,
    run_baseline,
    run_fgs,
    transport_responsibilities,
)
from fgslab.transfer import PerturbKind
from fgslab import bench, scenes
from fgslab.config import Config


@pytest.fixture(scope="module")
def sched():
    return make_schedule("linear-beta", 40)


@pytest.fixture(scope="module")
def denoiser(sched):
    return AnalyticDenoiser(bench.benchmark_mixture(), sched,
                            injection_strength=0.5, source_retention=0.35)


@pytest.fixture(scope="module")
def scene():
    return scenes.gen_dataset(2024, 4)[0]


def make_request(scene, denoiser, guidance, **kw):
    tgt = bench.target_class(scene.cond_id)
    defaults = dict(
        z0=scene.image.ravel(),
        source_cond=bench.analytic_condition(scene.cond_id),
        target_cond=bench.analytic_condition(tgt),
        guidance=guidance,
        denoiser=denoiser,
        sched=denoiser.sched,
        recon_mode="replay",
        seed=99,
    )
    defaults.update(kw)
    return EditRequest(**defaults)


def results_equal(a, b):
    ta, tb = a.to_tensors(), b.to_tensors()
    return all(np.array_equal(ta[k], tb[k]) for k in ta)


class TestTransport:
    def test_mass_conserved(self, rng):
        vec = np.array([0.2, 0.5, 0.1, 0.2])
        out = transport_responsibilities(vec, [(1, 2)], 0.25)
        np.testing.assert_allclose(out.sum(), 1.0, atol=1e-12)
        np.testing.assert_allclose(out, [0.2, 0.125, 0.475, 0.2], rtol=1e-12)

    def test_full_retention_is_identity(self):
        vec = np.array([0.3, 0.7])
        np.testing.assert_array_equal(transport_responsibilities(vec, [(0, 1)], 1.0), vec)

    def test_bad_retention(self):
        with pytest.raises(ValueError):
            transport_responsibilities(np.array([1.0]), [], 1.5)


class TestReductions:
    def test_noop_w_fg_zero(self, scene, denoiser):
        g = GuidanceConfig(w_fg=10.0)
        full = run_fgs(make_request(scene, denoiser, g.with_(w_fg=0.0)))
        base = run_baseline(make_request(scene, denoiser, g))
        assert results_equal(full, base)

    def test_delta_blur_equals_baseline(self, scene, denoiser):
        g = GuidanceConfig(w_fg=10.0, perturb=PerturbKind.blur(1e-6))
        full = run_fgs(make_request(scene, denoiser, g))
        base = run_baseline(make_request(scene, denoiser, g))
        assert np.array_equal(full.edited, base.edited)
        assert np.array_equal(full.traj_edit, base.traj_edit)
        assert np.array_equal(full.d_fg, np.zeros_like(full.d_fg))

    def test_path_start_identity(self, scene, denoiser):
        result = run_fgs(make_request(scene, denoiser, GuidanceConfig()))
        np.testing.assert_array_equal(result.traj_recon[-1], result.traj_edit[-1])

    def test_self_edit_matches_reconstruction(self, scene, denoiser):
        g = GuidanceConfig(w_fg=0.0, tau=0.0, schedule_cfg=False, schedule_fg=False)
        request = make_request(
            scene, denoiser, g,
            target_cond=bench.analytic_condition(scene.cond_id),
            recon_mode="resample",
        )
        result = run_fgs(request)
        np.testing.assert_array_equal(result.edited, result.recon)
        np.testing.assert_array_equal(result.traj_edit, result.traj_recon)


class TestBookkeeping:
    def test_directions_recombine(self, scene, denoiser):
        result = run_fgs(make_request(scene, denoiser, GuidanceConfig()))
        recombined = (
            result.eps_base
            + result.w_cfg_t[:, None] * result.d_cfg
            + result.w_fg_t[:, None] * result.d_fg
        )
        np.testing.assert_allclose(recombined, result.eps_applied, atol=1e-12)

    def test_trajectory_consistency(self, scene, denoiser, sched):
        # the stored trajectory must satisfy the DDIM recurrence for the
        # stored applied eps
        result = run_fgs(make_request(scene, denoiser, GuidanceConfig()))
        for i, t in enumerate(result.steps_t):
            a_prev, a_cur = sched.alpha[t - 1], sched.alpha[t]
            scale = np.sqrt(a_prev / a_cur)
            drift = np.sqrt(a_prev) * (
                np.sqrt(1 / a_prev - 1) - np.sqrt(1 / a_cur - 1)
            )
            step = scale * result.traj_edit[t] + drift * result.eps_applied[i]
            np.testing.assert_allclose(step, result.traj_edit[t - 1], atol=1e-10)

    def test_determinism(self, scene, denoiser):
        g = GuidanceConfig(perturb=PerturbKind.noise(0.1))
        a = run_fgs(make_request(scene, denoiser, g))
        b = run_fgs(make_request(scene, denoiser, g))
        assert results_equal(a, b)

    def test_injection_window(self, scene, denoiser, sched):
        result = run_fgs(make_request(scene, denoiser, GuidanceConfig(tau=0.5)))
        expected = result.steps_t > 0.5 * sched.T
        np.testing.assert_array_equal(result.injected, expected)
        all_on = run_fgs(make_request(scene, denoiser, GuidanceConfig(tau=1.0)))
        assert all_on.injected.all()
        all_off = run_fgs(make_request(scene, denoiser, GuidanceConfig(tau=0.0)))
        assert not all_off.injected.any()

    def test_shapes(self, scene, denoiser, sched):
        result = run_fgs(make_request(scene, denoiser, GuidanceConfig()))
        T, dim = sched.T, scene.image.size
        assert result.traj_recon.shape == (T + 1, dim)
        assert result.traj_edit.shape == (T + 1, dim)
        assert result.d_cfg.shape == (T, dim)
        assert len(result.packet) == T

    def test_nan_aborts_with_step_index(self, scene, sched):
        class PoisonAdapter:
            payload_kind = "vector"
            sched_ = sched

            def validate_condition(self, cond):
                return cond

            def injection_context(self, s, t):
                return ((), ())

            def eval(self, value, t, cond):
                return np.full_like(value, np.nan)

            def eval_record(self, value, t, cond):
                return np.full_like(value, np.nan), np.array([1.0])

            def eval_injected(self, value, t, cond, payload, context):
                return np.full_like(value, np.nan)

        request = EditRequest(
            z0=scene.image.ravel(), source_cond=None, target_cond=None,
            guidance=GuidanceConfig(), denoiser=PoisonAdapter(), sched=sched, seed=0,
        )
        with pytest.raises(RuntimeError, match="t=39"):
            run_fgs(request)


class TestReconstructOnly:
    def test_replay_returns_input(self, scene, denoiser, sched):
        recon, traj, packet = reconstruct_only(
            scene.image.ravel(), bench.analytic_condition(scene.cond_id),
            denoiser, sched, mode="replay",
        )
        np.testing.assert_array_equal(recon, scene.image.ravel())
        assert traj.shape == (sched.T + 1, scene.image.size)
        assert len(packet) == sched.T

    def test_resample_roundtrip_unit_gaussian(self, unit_gaussian):
        sched = make_schedule("linear-beta", 1000)
        denoiser = AnalyticDenoiser(unit_gaussian, sched)
        z0 = SeededRng(12).standard_normal(2)
        recon, _, packets = reconstruct_only(z0, None, denoiser, sched,
                                             mode="resample", w_cfg=0.0)
        assert np.linalg.norm(recon - z0) / np.linalg.norm(z0) < 1e-2
        assert len(packets) == sched.T

    def test_mode_validation(self, scene, denoiser, sched):
        with pytest.raises(ValueError):
            reconstruct_only(scene.image.ravel(), (0,), denoiser, sched, mode="loop")


class TestLearnedPipeline:
    @pytest.fixture(scope="class")
    def learned(self):
        sched = make_schedule("linear-beta", 20)
        pairs = [(s.image, s.cond_id) for s in scenes.gen_dataset(7, 60)]
        params = train(pairs, TrainConfig(steps=80, batch=4, seed=2), sched)
        return LearnedDenoiser(params), sched

    def test_edit_runs_and_is_deterministic(self, learned, scene):
        denoiser, sched = learned
        tgt = bench.target_class(scene.cond_id)
        request = EditRequest(
            z0=scene.image.ravel(), source_cond=scene.cond_id, target_cond=tgt,
            guidance=GuidanceConfig(w_cfg=2.0, w_fg=2.0),
            denoiser=denoiser, sched=sched, seed=5,
        )
        a = run_fgs(request)
        b = run_fgs(request)
        assert results_equal(a, b)
        assert a.packet.get(sched.T).shape == (256, 256)
        assert np.all(np.isfinite(a.edited))

    def test_noop_reduction_learned(self, learned, scene):
        denoiser, sched = learned
        tgt = bench.target_class(scene.cond_id)
        request = EditRequest(
            z0=scene.image.ravel(), source_cond=scene.cond_id, target_cond=tgt,
            guidance=GuidanceConfig(w_cfg=2.0, w_fg=0.0),
            denoiser=denoiser, sched=sched, seed=5,
        )
        assert results_equal(run_fgs(request), run_baseline(request))

    def test_condition_validation(self, learned, scene):
        denoiser, sched = learned
        with pytest.raises(ValueError):
            EditRequest(
                z0=scene.image.ravel(), source_cond=17, target_cond=0,
                guidance=GuidanceConfig(), denoiser=denoiser, sched=sched,
            )
