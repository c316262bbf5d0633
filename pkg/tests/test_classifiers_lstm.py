import numpy as np
import pytest

from wisense.classifiers.lstm import (
    LstmModel,
    TrainConfig,
    _PARAM_NAMES,
    load_lstm,
    lstm_fit,
    lstm_loss_and_grads,
    lstm_predict,
    lstm_predict_batch,
    read_lstm_header,
    save_lstm,
)
from wisense.errors import NonFiniteLoss, ShapeMismatch


def numeric_gradients(model, x, y, eps=1e-4):
    """Central finite differences over every parameter."""
    out = {}
    for name in _PARAM_NAMES:
        p = getattr(model, name)
        grad = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eps
            lp, _ = lstm_loss_and_grads(model, x, y)
            p[idx] = orig - eps
            lm, _ = lstm_loss_and_grads(model, x, y)
            p[idx] = orig
            grad[idx] = (lp - lm) / (2 * eps)
        out[name] = grad
    return out


def max_relative_error(analytic, numeric):
    worst = 0.0
    for name in _PARAM_NAMES:
        a, n = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-4)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def toy_task(rng, n=40, t=8, d=6, n_classes=2):
    """Separable sequences: class decided by the sign of a held tone."""
    x = 0.1 * rng.standard_normal((n, t, d))
    y = []
    for i in range(n):
        cls = i % n_classes
        x[i, :, 0] += (1.0 if cls == 0 else -1.0)
        y.append("pos" if cls == 0 else "neg")
    return x.astype(np.float64), y


class TestGradients:
    def test_gradcheck_single_config(self):
        rng = np.random.default_rng(0)
        model = LstmModel.initialize(["a", "b", "c"], input_dim=5, hidden=4, seed=0)
        x = rng.standard_normal((2, 3, 5))
        y = np.array([0, 2])
        _, analytic = lstm_loss_and_grads(model, x, y)
        numeric = numeric_gradients(model, x, y)
        assert max_relative_error(analytic, numeric) < 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_gradcheck_random_small_configs(self, seed):
        rng = np.random.default_rng(seed)
        hidden = int(rng.integers(2, 6))
        t_len = int(rng.integers(2, 5))
        d = int(rng.integers(2, 7))
        n_classes = int(rng.integers(2, 5))
        model = LstmModel.initialize(list(range(n_classes)), input_dim=d, hidden=hidden, seed=seed)
        x = rng.standard_normal((2, t_len, d))
        y = rng.integers(0, n_classes, size=2)
        _, analytic = lstm_loss_and_grads(model, x, y)
        numeric = numeric_gradients(model, x, y)
        assert max_relative_error(analytic, numeric) < 1e-4


class TestTraining:
    def test_untrained_balanced_loss_is_log_classes(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((60, 5, 90))
        y = [f"c{i % 6}" for i in range(60)]
        _, trace = lstm_fit(x, y, TrainConfig(batch_size=200, learning_rate=1e-4, epochs=1, seed=0))
        assert trace[0] == pytest.approx(np.log(6), abs=0.05)

    def test_same_seed_bitwise_identical_traces(self):
        rng = np.random.default_rng(2)
        x, y = toy_task(rng)
        cfg = TrainConfig(batch_size=8, learning_rate=0.05, epochs=3, seed=9)
        _, trace_a = lstm_fit(x.copy(), y, cfg, hidden=6)
        _, trace_b = lstm_fit(x.copy(), y, cfg, hidden=6)
        assert trace_a == trace_b  # bitwise, not approximately

    def test_learns_separable_task(self):
        rng = np.random.default_rng(3)
        x, y = toy_task(rng, n=80, t=6, d=5)
        cfg = TrainConfig(batch_size=16, learning_rate=0.5, epochs=30, seed=0)
        model, trace = lstm_fit(x, y, cfg, hidden=8)
        pred = lstm_predict_batch(model, x)
        accuracy = np.mean([p == t for p, t in zip(pred, y)])
        assert accuracy >= 0.99
        assert trace[-1] < trace[0]

    def test_forget_gate_bias_initialized_to_one(self):
        model = LstmModel.initialize(["a", "b"], input_dim=4, hidden=6, seed=0)
        h = model.hidden
        assert np.allclose(model.bias[h : 2 * h], 1.0)
        assert np.allclose(model.bias[:h], 0.0)

    def test_nonfinite_loss_aborts(self):
        rng = np.random.default_rng(4)
        x, y = toy_task(rng, n=16, t=4, d=3)
        model = LstmModel.initialize(["neg", "pos"], input_dim=3, hidden=4, seed=0)
        model.w_out[...] = np.inf
        with pytest.raises(NonFiniteLoss):
            lstm_fit(x, y, TrainConfig(batch_size=8, learning_rate=0.1, epochs=1, seed=0), model=model)

    def test_micro_batching_matches_full_batch_gradients(self):
        # the accumulation path must be mathematically the whole-batch mean
        rng = np.random.default_rng(5)
        model = LstmModel.initialize(["a", "b"], input_dim=4, hidden=3, seed=1)
        x = rng.standard_normal((7, 3, 4))
        y = np.array([0, 1, 0, 1, 1, 0, 1])
        full_loss, full_grads = lstm_loss_and_grads(model, x, y)
        from wisense.classifiers.lstm import _accumulated_grads
        import wisense.classifiers.lstm as lstm_mod

        old = lstm_mod._MICRO_BATCH
        try:
            lstm_mod._MICRO_BATCH = 3
            loss, grads = _accumulated_grads(model, x, y, np.arange(7))
        finally:
            lstm_mod._MICRO_BATCH = old
        assert loss == pytest.approx(full_loss, rel=1e-12)
        for name in _PARAM_NAMES:
            assert np.allclose(grads[name], full_grads[name], atol=1e-12)


class TestPredict:
    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(6)
        model = LstmModel.initialize(["a", "b", "c"], input_dim=7, hidden=5, seed=2)
        label, probs = lstm_predict(model, rng.standard_normal((9, 7)))
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert label in ("a", "b", "c")

    def test_deterministic_forward(self):
        rng = np.random.default_rng(7)
        model = LstmModel.initialize(["a", "b"], input_dim=4, hidden=5, seed=3)
        w = rng.standard_normal((6, 4))
        out1 = lstm_predict(model, w)
        out2 = lstm_predict(model, w[::-1].copy())  # reversed window may differ
        again = lstm_predict(model, w)
        assert out1[0] == again[0]
        assert np.array_equal(out1[1], again[1])
        assert out2[1].sum() == pytest.approx(1.0, abs=1e-9)

    def test_shape_mismatch(self):
        model = LstmModel.initialize(["a", "b"], input_dim=4, hidden=5, seed=0)
        with pytest.raises(ShapeMismatch):
            lstm_predict(model, np.zeros((6, 5)))


class TestSerialization:
    def test_save_load_bit_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        x, y = toy_task(rng, n=24, t=5, d=4)
        model, _ = lstm_fit(
            x, y, TrainConfig(batch_size=8, learning_rate=0.1, epochs=2, seed=1), hidden=6
        )
        path = tmp_path / "model.lstm"
        save_lstm(model, path, extra={"pipeline": {"seed": 1}})
        back = load_lstm(path)
        for name in _PARAM_NAMES:
            assert np.array_equal(getattr(back, name), getattr(model, name))
        assert back.labels == model.labels
        probe = rng.standard_normal((5, 4))
        a_label, a_probs = lstm_predict(model, probe)
        b_label, b_probs = lstm_predict(back, probe)
        assert a_label == b_label
        assert np.array_equal(a_probs, b_probs)
        header = read_lstm_header(path)
        assert header["pipeline"] == {"seed": 1}

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "bogus.lstm"
        path.write_bytes(b"not a model at all")
        with pytest.raises(ValueError):
            load_lstm(path)
