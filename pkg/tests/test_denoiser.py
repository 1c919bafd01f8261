import numpy as np
import pytest

from fgslab.arrays import SeededRng
from fgslab.denoiser import (
    N_TOKENS,
    TrainConfig,
    classifier_train,
    classify,
    forward,
    init_params,
    loss_and_grads,
    time_embedding,
    train,
)
from fgslab.diffusion import make_schedule
from fgslab import scenes


@pytest.fixture(scope="module")
def sched():
    return make_schedule("linear-beta", 100)


@pytest.fixture(scope="module")
def params():
    return init_params(SeededRng(3), scenes.N_CLASSES)


@pytest.fixture(scope="module")
def small_batch():
    data = scenes.gen_dataset(5, 8)
    return np.stack([s.image.ravel() for s in data]), [s.cond_id for s in data]


class TestForward:
    def test_deterministic(self, params, rng):
        z = rng.standard_normal(N_TOKENS)
        e1, a1 = forward(params, z, 17, 3)
        e2, a2 = forward(params, z, 17, 3)
        np.testing.assert_array_equal(e1, e2)
        np.testing.assert_array_equal(a1, a2)

    def test_attention_rows_stochastic(self, params, rng):
        _, att = forward(params, rng.standard_normal(N_TOKENS), 40, None)
        assert att.shape == (N_TOKENS, N_TOKENS)
        np.testing.assert_allclose(att.sum(axis=1), 1.0, atol=1e-9)
        assert att.min() >= 0.0

    def test_self_injection_identity(self, params, rng):
        z = rng.standard_normal(N_TOKENS)
        eps_rec, att = forward(params, z, 60, 1)
        eps_inj, att_inj = forward(params, z, 60, 1, inject=att)
        np.testing.assert_array_equal(eps_rec, eps_inj)
        np.testing.assert_array_equal(att, att_inj)

    def test_injection_changes_output(self, params, rng):
        z = rng.standard_normal(N_TOKENS)
        eps_rec, _ = forward(params, z, 60, 1)
        eps_eye, _ = forward(params, z, 60, 1, inject=np.eye(N_TOKENS))
        assert not np.allclose(eps_rec, eps_eye)

    def test_condition_matters(self, params, rng):
        z = rng.standard_normal(N_TOKENS)
        a, _ = forward(params, z, 60, 0)
        b, _ = forward(params, z, 60, 1)
        c, _ = forward(params, z, 60, None)
        assert not np.allclose(a, b)
        assert not np.allclose(a, c)

    def test_rejects_bad_injection(self, params, rng):
        z = rng.standard_normal(N_TOKENS)
        with pytest.raises(ValueError):
            forward(params, z, 10, 0, inject=np.ones((N_TOKENS, N_TOKENS)))
        with pytest.raises(ValueError):
            forward(params, z, 10, 0, inject=np.eye(4))

    def test_rejects_bad_shapes(self, params):
        with pytest.raises(ValueError):
            forward(params, np.zeros(100), 10, 0)
        with pytest.raises(ValueError):
            forward(params, np.zeros(N_TOKENS), 10, 99)

    def test_time_embedding_shape(self):
        emb = time_embedding(np.array([0.0, 10.0, 500.0]))
        assert emb.shape == (3, 32)
        assert np.all(np.abs(emb) <= 1.0)


class TestLossAndGrads:
    def test_loss_nonnegative_and_consistent(self, params, sched, small_batch):
        batch, conds = small_batch
        loss, _ = loss_and_grads(params, batch, conds, SeededRng(4), sched)
        assert loss >= 0.0
        # replaying the same rng draws reproduces the loss from raw pieces,
        # and a model that emitted the drawn eps exactly would score 0
        replay = SeededRng(4)
        t = replay.integers(1, sched.T + 1, batch.shape[0])
        eps = replay.standard_normal(batch.shape)
        a = sched.alpha[t][:, None]
        zt = np.sqrt(a) * batch + np.sqrt(1.0 - a) * eps
        preds = np.stack([
            forward(params, zt[i], int(t[i]), conds[i])[0] for i in range(batch.shape[0])
        ])
        np.testing.assert_allclose(loss, np.mean((preds - eps) ** 2), rtol=1e-12)
        np.testing.assert_allclose(np.mean((eps - eps) ** 2), 0.0)

    def test_empty_batch_rejected(self, params, sched):
        with pytest.raises(ValueError):
            loss_and_grads(params, np.zeros((0, N_TOKENS)), [], SeededRng(1), sched)

    def test_gradients_match_finite_differences(self, params, sched, small_batch):
        batch, conds = small_batch
        batch, conds = batch[:3], conds[:3]
        vec = params.to_vector()
        _, grads = loss_and_grads(params, batch, conds, SeededRng(9), sched)
        gvec = grads.to_vector()

        def loss_at(v):
            l, _ = loss_and_grads(params.from_vector(v), batch, conds, SeededRng(9), sched)
            return l

        h = 1e-5
        picks = SeededRng(2).integers(0, vec.size, 25)
        for i in picks:
            vp = vec.copy()
            vp[i] += h
            vm = vec.copy()
            vm[i] -= h
            fd = (loss_at(vp) - loss_at(vm)) / (2.0 * h)
            assert abs(gvec[i] - fd) / max(1e-8, abs(fd)) < 1e-3


class TestTrain:
    def test_zero_learning_rate_keeps_params(self, sched):
        pairs = [(s.image, s.cond_id) for s in scenes.gen_dataset(7, 12)]
        before = train(pairs, TrainConfig(steps=0, batch=4, seed=5), sched)
        after = train(pairs, TrainConfig(steps=5, batch=4, learning_rate=0.0, seed=5), sched)
        for name in before.names():
            np.testing.assert_array_equal(getattr(before, name), getattr(after, name))

    def test_seed_fixed_training_reproducible(self, sched):
        pairs = [(s.image, s.cond_id) for s in scenes.gen_dataset(7, 12)]
        a = train(pairs, TrainConfig(steps=20, batch=4, seed=5), sched)
        b = train(pairs, TrainConfig(steps=20, batch=4, seed=5), sched)
        for name in a.names():
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_divergence_aborts(self, sched):
        pairs = [(s.image, s.cond_id) for s in scenes.gen_dataset(7, 12)]
        with pytest.raises(RuntimeError, match="diverged"):
            train(pairs, TrainConfig(steps=200, batch=4, learning_rate=1e6, seed=0), sched)

    def test_empty_dataset_rejected(self, sched):
        with pytest.raises(ValueError):
            train([], TrainConfig(steps=1), sched)

    def test_loss_drops_by_step_2000(self, sched):
        pairs = [(s.image, s.cond_id) for s in scenes.gen_dataset(7, 120)]
        data = np.stack([p[0].ravel() for p in pairs[:32]])
        conds = [p[1] for p in pairs[:32]]
        fresh = train(pairs, TrainConfig(steps=0, batch=4, seed=0), sched)
        loss0, _ = loss_and_grads(fresh, data, conds, SeededRng(123), sched)
        trained = train(pairs, TrainConfig(steps=2000, batch=4, seed=0), sched)
        loss1, _ = loss_and_grads(trained, data, conds, SeededRng(123), sched)
        assert loss1 < loss0


class TestClassifier:
    def test_probabilities_normalized(self, rng):
        pairs = [(s.image, s.cond_id) for s in scenes.gen_dataset(7, 60)]
        clf = classifier_train(pairs)
        probs = classify(clf, rng.uniform(0.0, 1.0, (16, 16)))
        np.testing.assert_allclose(probs.sum(), 1.0, atol=1e-9)
        assert probs.shape == (scenes.N_CLASSES,)

    def test_held_out_accuracy(self):
        train_pairs = [(s.image, s.cond_id) for s in scenes.gen_dataset(7, 300)]
        clf = classifier_train(train_pairs)
        held_out = scenes.gen_dataset(1001, 120)
        acc = np.mean([np.argmax(classify(clf, s.image)) == s.cond_id for s in held_out])
        assert acc >= 0.95

    def test_size_mismatch_rejected(self):
        pairs = [(s.image, s.cond_id) for s in scenes.gen_dataset(7, 12)]
        clf = classifier_train(pairs)
        with pytest.raises(ValueError):
            classify(clf, np.zeros((8, 8)))
