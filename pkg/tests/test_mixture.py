import numpy as np
import pytest

from fgslab.arrays import SeededRng
from fgslab.diffusion import NoiseSchedule, make_schedule
from fgslab.mixture import MixtureModel, normalize_condition

from oracles import mc_conditional_eps, random_mixture


@pytest.fixture(scope="module")
def sched():
    return make_schedule("linear-beta", 1000)


class TestConditions:
    def test_none_is_unconditional(self):
        assert normalize_condition(None, 3) is None

    def test_validation(self):
        assert normalize_condition((1, 2), 3) == (1, 2)
        with pytest.raises(ValueError):
            normalize_condition((), 3)
        with pytest.raises(ValueError):
            normalize_condition((3,), 3)
        with pytest.raises(ValueError):
            normalize_condition((1, 1), 3)

    def test_model_validation(self):
        with pytest.raises(ValueError):
            MixtureModel(weights=[0.5, 0.6], means=[[0.0], [1.0]], variances=[1.0, 1.0])
        with pytest.raises(ValueError):
            MixtureModel(weights=[1.0], means=[[0.0]], variances=[-1.0])


class TestResponsibilities:
    def test_symmetric_midpoint(self, two_wells, sched):
        r = two_wells.responsibilities(np.array([0.0]), 500, sched)
        np.testing.assert_allclose(r, [0.5, 0.5], atol=1e-12)

    def test_single_condition_one_hot(self, two_wells, sched):
        r = two_wells.responsibilities(np.array([0.3]), 200, sched, cond=(1,))
        np.testing.assert_array_equal(r, [0.0, 1.0])

    def test_sharp_separation_near_clean(self, two_wells):
        # density ratio exp(-(4^2 - 0)/(2*0.01)) at alpha ~ 1
        sched = NoiseSchedule("manual", 2, np.array([1.0, 1.0 - 1e-13, 0.04]))
        r = two_wells.responsibilities(np.array([2.0]), 1, sched)
        assert r[1] > 1.0 - 1e-9

    def test_null_equals_full_subset(self, sched, rng):
        mix = random_mixture(rng, 2)
        z = rng.standard_normal(2)
        a = mix.responsibilities(z, 300, sched, cond=None)
        b = mix.responsibilities(z, 300, sched, cond=tuple(range(mix.n_components)))
        np.testing.assert_array_equal(a, b)

    def test_permutation_invariance(self, sched, rng):
        mix = random_mixture(rng, 1, max_components=3)
        perm = list(range(mix.n_components))[::-1]
        permuted = MixtureModel(
            weights=mix.weights[perm], means=mix.means[perm], variances=mix.variances[perm]
        )
        z = rng.standard_normal(1)
        r = mix.responsibilities(z, 400, sched)
        rp = permuted.responsibilities(z, 400, sched)
        np.testing.assert_allclose(rp, r[perm], rtol=1e-12)

    def test_underflow_degenerate_uniform(self):
        # two point masses evaluated at alpha=1 away from both means
        sched = NoiseSchedule("manual", 2, np.array([1.0, 0.5, 0.04]))
        mix = MixtureModel(weights=[0.5, 0.5], means=[[-1.0], [1.0]], variances=[0.0, 0.0])
        r, flag = mix.responsibilities(np.array([0.25]), 0, sched, with_flag=True)
        assert flag
        np.testing.assert_allclose(r, [0.5, 0.5])

    def test_rows_normalized_batched(self, sched, rng):
        mix = random_mixture(rng, 2)
        z = rng.standard_normal((7, 2))
        r = mix.responsibilities(z, 250, sched)
        np.testing.assert_allclose(r.sum(axis=-1), 1.0, atol=1e-12)


class TestAnalyticEps:
    def test_unit_gaussian_closed_form(self, unit_gaussian):
        # E[eps | z] = sqrt(1 - alpha) z for N(0,1) data; alpha=0.36, z=2 -> 1.6
        sched = NoiseSchedule("manual", 2, np.array([1.0, 0.36, 0.04]))
        out = unit_gaussian.eps(np.array([2.0]), 1, sched)
        np.testing.assert_allclose(out, [1.6], rtol=1e-12)

    def test_point_mass_exact(self, sched):
        mu = np.array([0.7, -1.2])
        mix = MixtureModel(weights=[0.3, 0.7], means=[mu, [5.0, 5.0]], variances=[0.0, 0.5])
        z = np.array([0.1, 0.2])
        t = 400
        a = sched.alpha[t]
        out = mix.eps(z, t, sched, cond=(0,))
        np.testing.assert_allclose(out, (z - np.sqrt(a) * mu) / np.sqrt(1 - a), rtol=1e-12)

    def test_alpha_one_guard(self, unit_gaussian):
        sched = NoiseSchedule("manual", 2, np.array([1.0, 0.5, 0.04]))
        out, flag = unit_gaussian.eps(np.array([2.0]), 0, sched, with_flag=True)
        assert flag
        np.testing.assert_array_equal(out, [0.0])

    @pytest.mark.parametrize("dim", [1, 2])
    def test_matches_monte_carlo(self, sched, dim):
        rng = SeededRng(99, dim)
        for trial in range(3):
            mix = random_mixture(rng, dim)
            t = int(rng.integers(50, sched.T, None))
            z = rng.standard_normal(dim) * 1.5
            exact = mix.eps(z, t, sched)
            est, se = mc_conditional_eps(mix, z, t, sched, None, rng, n=200_000, batches=50)
            np.testing.assert_array_less(np.abs(exact - est), 3.0 * se + 1e-12)


class TestOverrideEps:
    def test_own_responsibilities_identity(self, sched, rng):
        mix = random_mixture(rng, 2)
        z = rng.standard_normal(2)
        r = mix.responsibilities(z, 350, sched)
        np.testing.assert_array_equal(
            mix.eps_injected(z, 350, sched, r), mix.eps(z, 350, sched)
        )

    def test_one_hot_matches_single_condition(self, sched, rng):
        mix = random_mixture(rng, 1, max_components=3)
        z = rng.standard_normal(1)
        one_hot = np.zeros(mix.n_components)
        one_hot[1] = 1.0
        np.testing.assert_allclose(
            mix.eps_injected(z, 600, sched, one_hot),
            mix.eps(z, 600, sched, cond=(1,)),
            rtol=1e-12,
        )

    def test_blend_linearity(self, sched, rng):
        mix = random_mixture(rng, 2, max_components=3)
        z = rng.standard_normal(2)
        r_a = mix.responsibilities(z, 500, sched, cond=(0,))
        r_b = mix.responsibilities(z, 500, sched)
        mid = 0.5 * (r_a + r_b)
        lhs = mix.eps_injected(z, 500, sched, mid)
        rhs = 0.5 * (mix.eps_injected(z, 500, sched, r_a) + mix.eps_injected(z, 500, sched, r_b))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_rejects_unnormalized(self, sched, rng):
        mix = random_mixture(rng, 1)
        bad = np.full(mix.n_components, 0.9)
        with pytest.raises(ValueError):
            mix.eps_injected(rng.standard_normal(1), 100, sched, bad)
