import math

import numpy as np
import pytest

from ciac.gestures import GestureClass
from ciac.model import (
    ModelConfig,
    ModelParams,
    TrainConfig,
    accuracy_from_confusion,
    cross_entropy,
    forward,
    init_params,
    kfold_evaluate,
    load_model,
    loss_and_gradients,
    param_shapes,
    save_model,
    sinusoidal_positions,
    train,
)

TINY = ModelConfig(window=8, features=5, d_model=8, n_heads=2, d_ff=16,
                   dense_units=8, n_classes=5)


def tiny_params(seed=0):
    return init_params(TINY, np.random.default_rng(seed))


def reference_forward(params, x):
    """Straight-line reimplementation with explicit loops (independent oracle)."""
    a = params.arrays
    cfg = params.config
    T, d, H = cfg.window, cfg.d_model, cfg.n_heads
    dk = d // H
    eps = 1e-6

    def ln(v, g, b):
        out = np.zeros_like(v)
        for t in range(v.shape[0]):
            mu = v[t].mean()
            var = v[t].var()
            out[t] = g * (v[t] - mu) / math.sqrt(var + eps) + b
        return out

    def softmax_rows(m):
        out = np.zeros_like(m)
        for i in range(m.shape[0]):
            e = np.exp(m[i] - m[i].max())
            out[i] = e / e.sum()
        return out

    h = x @ a["embed.w"] + a["embed.b"] + params.pos_enc
    for bi in range(cfg.n_blocks):
        p = f"block{bi}."
        q = h @ a[p + "attn.wq"] + a[p + "attn.bq"]
        k = h @ a[p + "attn.wk"] + a[p + "attn.bk"]
        v = h @ a[p + "attn.wv"] + a[p + "attn.bv"]
        ctx = np.zeros((T, d))
        for head in range(H):
            sl = slice(head * dk, (head + 1) * dk)
            scores = q[:, sl] @ k[:, sl].T / math.sqrt(dk)
            attn = softmax_rows(scores)
            ctx[:, sl] = attn @ v[:, sl]
        out = ctx @ a[p + "attn.wo"] + a[p + "attn.bo"]
        h = ln(h + out, a[p + "ln1.g"], a[p + "ln1.b"])
        f = np.maximum(h @ a[p + "ffn.w1"] + a[p + "ffn.b1"], 0) @ a[p + "ffn.w2"] + a[p + "ffn.b2"]
        h = ln(h + f, a[p + "ln2.g"], a[p + "ln2.b"])
    pooled = h.mean(axis=0)
    d1 = np.maximum(pooled @ a["dense1.w"] + a["dense1.b"], 0)
    d2 = np.maximum(d1 @ a["dense2.w"] + a["dense2.b"], 0)
    logits = d2 @ a["head.w"] + a["head.b"]
    e = np.exp(logits - logits.max())
    return e / e.sum()


class TestForward:
    def test_output_sums_to_one(self):
        params = tiny_params()
        rng = np.random.default_rng(1)
        x = rng.normal(size=(7, TINY.window, TINY.features))
        probs = forward(params, x)
        assert probs.shape == (7, 5)
        assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-6
        assert np.all(probs > 0) and np.all(probs < 1)

    def test_zero_head_gives_uniform(self):
        params = tiny_params()
        params.arrays["head.w"][:] = 0.0
        params.arrays["head.b"][:] = 0.0
        x = np.random.default_rng(2).normal(size=(TINY.window, TINY.features))
        probs = forward(params, x)
        assert np.allclose(probs, 0.2, atol=1e-12)

    def test_matches_straight_line_reimplementation(self):
        params = tiny_params(seed=3)
        rng = np.random.default_rng(4)
        for _ in range(5):
            x = rng.normal(size=(TINY.window, TINY.features))
            expected = reference_forward(params, x)
            got = forward(params, x)
            assert np.abs(got - expected).max() < 1e-9

    def test_deterministic(self):
        params = tiny_params()
        x = np.random.default_rng(5).normal(size=(TINY.window, TINY.features))
        assert np.array_equal(forward(params, x), forward(params, x))

    def test_shape_mismatch_rejected(self):
        params = tiny_params()
        with pytest.raises(ValueError):
            forward(params, np.zeros((4, 9, TINY.features)))

    def test_param_shape_validation(self):
        arrays = {k: np.zeros(s) for k, s in param_shapes(TINY).items()}
        arrays["head.w"] = np.zeros((3, 3))
        with pytest.raises(ValueError):
            ModelParams(TINY, arrays, sinusoidal_positions(TINY.window, TINY.d_model))


class TestLoss:
    def test_uniform_output_loss_is_ln5(self):
        params = tiny_params()
        params.arrays["head.w"][:] = 0.0
        params.arrays["head.b"][:] = 0.0
        x = np.random.default_rng(6).normal(size=(3, TINY.window, TINY.features))
        loss, _ = loss_and_gradients(params, x, np.array([0, 2, 4]))
        assert loss == pytest.approx(math.log(5), abs=1e-9)

    def test_saturated_correct_label_near_zero(self):
        params = tiny_params()
        params.arrays["head.w"][:] = 0.0
        params.arrays["head.b"][:] = 0.0
        params.arrays["head.b"][1] = 50.0
        x = np.random.default_rng(7).normal(size=(1, TINY.window, TINY.features))
        loss, _ = loss_and_gradients(params, x, np.array([1]))
        assert loss < 1e-6

    def test_permuting_batch_preserves_loss(self):
        params = tiny_params()
        rng = np.random.default_rng(8)
        x = rng.normal(size=(8, TINY.window, TINY.features))
        y = rng.integers(0, 5, 8)
        loss_a, _ = loss_and_gradients(params, x, y)
        perm = rng.permutation(8)
        loss_b, _ = loss_and_gradients(params, x[perm], y[perm])
        assert abs(loss_a * 8 - loss_b * 8) < 1e-9

    def test_nonfinite_loss_raises(self):
        with pytest.raises(FloatingPointError):
            cross_entropy(np.array([[1.0, 0.0, 0.0, 0.0, 0.0]]), np.array([1]))


class TestGradients:
    def test_finite_difference_every_parameter_group(self):
        params = tiny_params(seed=9)
        rng = np.random.default_rng(10)
        x = rng.normal(size=(3, TINY.window, TINY.features))
        y = np.array([0, 3, 1])
        _, grads = loss_and_gradients(params, x, y)
        h = 1e-5
        coord_rng = np.random.default_rng(11)
        for name in params.names():
            arr = params.arrays[name]
            flat = arr.reshape(-1)
            n_probe = min(6, flat.size)
            idxs = coord_rng.choice(flat.size, size=n_probe, replace=False)
            for i in idxs:
                orig = flat[i]
                flat[i] = orig + h
                lp, _ = loss_and_gradients(params, x, y)
                flat[i] = orig - h
                lm, _ = loss_and_gradients(params, x, y)
                flat[i] = orig
                fd = (lp - lm) / (2 * h)
                an = grads[name].reshape(-1)[i]
                rel = abs(an - fd) / max(1e-8, abs(an) + abs(fd))
                assert rel <= 1e-4, f"{name}[{i}]: analytic {an}, fd {fd}, rel {rel}"


class TestTraining:
    def make_toy(self, n=60, seed=12):
        # Two linearly separable classes: feature 0 carries the sign.
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 0.1, size=(n, TINY.window, TINY.features))
        y = rng.integers(0, 2, n)
        x[:, :, 0] += np.where(y == 1, 1.0, -1.0)[:, None]
        return x, y

    def test_separable_toy_reaches_99(self):
        x, y = self.make_toy()
        cfg = TrainConfig(epochs=50, batch_size=16, seed=0, dropout=0.0,
                          d_model=8, n_heads=2, dense_units=8)
        model = train(cfg, x, y, model_config=TINY)
        best = max(h.accuracy for h in model.history)
        assert best >= 0.99
        assert len(model.history) <= 50

    def test_zero_epochs_returns_initialization(self):
        x, y = self.make_toy(n=10)
        cfg = TrainConfig(epochs=0, seed=5, d_model=8, n_heads=2, dense_units=8)
        model = train(cfg, x, y, model_config=TINY)
        expected = init_params(TINY, np.random.default_rng(5))
        for name in expected.names():
            assert np.array_equal(model.params.arrays[name], expected.arrays[name])
        assert model.history == []

    def test_seed_reproducibility_bit_identical(self):
        x, y = self.make_toy(n=24)
        cfg = TrainConfig(epochs=3, batch_size=8, seed=7, dropout=0.2,
                          d_model=8, n_heads=2, dense_units=8)
        a = train(cfg, x, y, model_config=TINY)
        b = train(cfg, x, y, model_config=TINY)
        assert [(h.loss, h.accuracy) for h in a.history] == \
               [(h.loss, h.accuracy) for h in b.history]
        for name in a.params.names():
            assert np.array_equal(a.params.arrays[name], b.params.arrays[name])

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train(TrainConfig(), np.zeros((0, 8, 5)), np.zeros(0, dtype=int))

    def test_single_class_rejected(self):
        x = np.zeros((4, 8, 5))
        with pytest.raises(ValueError):
            train(TrainConfig(), x, np.zeros(4, dtype=int))


class TestKFold:
    def make_dataset(self, n_rec=5, per_rec=20, seed=13):
        rng = np.random.default_rng(seed)
        windows, labels, recs = [], [], []
        for r in range(n_rec):
            for _ in range(per_rec):
                y = int(rng.integers(0, 5))
                w = np.full((TINY.window, TINY.features), float(y))
                windows.append(w)
                labels.append(y)
                recs.append(f"rec{r}")
        return np.array(windows), np.array(labels), np.array(recs)

    def test_perfect_stub_identity_confusion(self):
        w, y, recs = self.make_dataset()

        def perfect(cfg, xw, xy):
            return lambda batch: batch[:, 0, 0].astype(int)

        per_fold, agg = kfold_evaluate(TrainConfig(), w, y, recs, k=5, train_fn=perfect)
        assert len(per_fold) == 5
        assert np.all(agg == np.diag(np.diag(agg)))
        assert accuracy_from_confusion(agg) == 1.0

    def test_constant_stub_single_column(self):
        w, y, recs = self.make_dataset()

        def constant(cfg, xw, xy):
            return lambda batch: np.full(len(batch), GestureClass.PUSH.value)

        _, agg = kfold_evaluate(TrainConfig(), w, y, recs, k=5, train_fn=constant)
        nonzero_cols = np.nonzero(agg.sum(axis=0))[0]
        assert list(nonzero_cols) == [GestureClass.PUSH.value]

    def test_row_sums_match_class_counts(self):
        w, y, recs = self.make_dataset()

        def constant(cfg, xw, xy):
            return lambda batch: np.zeros(len(batch), dtype=int)

        _, agg = kfold_evaluate(TrainConfig(), w, y, recs, k=5, train_fn=constant)
        for c in range(5):
            assert agg[c].sum() == int((y == c).sum())

    def test_fewer_recordings_than_folds_rejected(self):
        w, y, recs = self.make_dataset(n_rec=3)
        with pytest.raises(ValueError):
            kfold_evaluate(TrainConfig(), w, y, recs, k=5)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        x = np.random.default_rng(14).normal(size=(12, TINY.window, TINY.features))
        y = np.random.default_rng(15).integers(0, 5, 12)
        y[:5] = 0
        y[5:] = 1
        cfg = TrainConfig(epochs=1, seed=3, d_model=8, n_heads=2, dense_units=8)
        model = train(cfg, x, y, model_config=TINY)
        path = tmp_path / "model.json"
        save_model(path, model)
        loaded = load_model(path)
        for name in model.params.names():
            assert np.array_equal(loaded.params.arrays[name], model.params.arrays[name])
        probe = x[:3]
        assert np.array_equal(model.predict_proba(probe), loaded.predict_proba(probe))

    def test_rejects_corrupt_shapes(self, tmp_path):
        import json
        x = np.random.default_rng(16).normal(size=(8, TINY.window, TINY.features))
        y = np.array([0, 1] * 4)
        cfg = TrainConfig(epochs=0, seed=1, d_model=8, n_heads=2, dense_units=8)
        model = train(cfg, x, y, model_config=TINY)
        path = tmp_path / "model.json"
        save_model(path, model)
        doc = json.loads(path.read_text())
        doc["model_config"]["d_model"] = 16
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError):
            load_model(path)
