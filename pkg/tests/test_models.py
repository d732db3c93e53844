import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtsbench.dataset import TimeSeriesDataset
from mtsbench.errors import DivergenceError, SingularSystem, SpecError
from mtsbench.models import (ForecasterSpec, LinearModel, TrainerConfig, build_forecaster,
                             dlinear_decompose, early_stop, fit_linear_closed_form, load_model,
                             masked_mae_on, nlinear_shift, nlinear_unshift,
                             predict_historical_average, predict_naive_last,
                             predict_seasonal_naive, save_model, sgd_fit)
from mtsbench.models.training import clip_global_norm
from mtsbench.preprocess import WindowSet, ZScoreScaler

from oracles import central_difference, ridge_dense


def windows(X, lo, hi, T_p, T_f, stride=1):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    ds = TimeSeriesDataset.from_array(X, 60)
    return WindowSet.from_dataset(ds, ZScoreScaler.identity(ds.N), (lo, hi), T_p, T_f, stride)


# --- baselines -------------------------------------------------------------

def test_naive_last():
    h = np.array([[1.0, 1.0], [3.0, 7.0]])
    np.testing.assert_array_equal(predict_naive_last(h, 3), [[3, 7]] * 3)
    assert predict_naive_last(h, 1).shape == (1, 2)


def test_seasonal_naive():
    h = np.array([[9.0], [1.0], [2.0]])
    np.testing.assert_array_equal(predict_seasonal_naive(h, 5, 2)[:, 0], [1, 2, 1, 2, 1])
    np.testing.assert_array_equal(predict_seasonal_naive(h, 2, 1)[:, 0], [2, 2])
    with pytest.raises(SpecError):
        predict_seasonal_naive(h, 2, 4)


def test_historical_average():
    np.testing.assert_array_equal(predict_historical_average([[0.0], [2.0]], 3), [[1]] * 3)
    np.testing.assert_array_equal(predict_historical_average([[4.0, 5.0]], 2), [[4, 5]] * 2)
    out = predict_historical_average([[1.0, 3.0], [2.0, 5.0]], 1, [[True, False], [True, False]])
    np.testing.assert_array_equal(out, [[1.5, 0.0]])


# --- decomposition ---------------------------------------------------------

def test_dlinear_ramp():
    trend, rem = dlinear_decompose(np.arange(1.0, 6.0)[:, None], 3)
    np.testing.assert_allclose(trend[:, 0], [4 / 3, 2, 3, 4, 14 / 3], rtol=1e-12)


def test_dlinear_identity_kernel():
    h = np.random.default_rng(0).normal(size=(10, 3))
    trend, rem = dlinear_decompose(h, 1)
    np.testing.assert_array_equal(trend, h)
    assert not rem.any()


def test_dlinear_even_kernel():
    with pytest.raises(SpecError):
        dlinear_decompose(np.zeros((5, 1)), 4)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 3, 5, 25]))
def test_dlinear_reconstruction(seed, k):
    h = np.random.default_rng(seed).normal(size=(30, 2)) * 10
    trend, rem = dlinear_decompose(h, k)
    np.testing.assert_allclose(trend + rem, h, rtol=0, atol=1e-12 * max(1, np.abs(h).max()))


def test_nlinear_shift_roundtrip():
    h = np.full((6, 2), 4.0)
    shifted, off = nlinear_shift(h)
    assert not shifted.any()
    m = LinearModel(ForecasterSpec("nlinear", 6, 3), 2)
    m.params = {"W": np.zeros((6, 3)), "b": np.zeros(3)}
    np.testing.assert_array_equal(m.predict(h), nlinear_unshift(np.zeros((3, 2)), off))
    h2 = np.random.default_rng(1).normal(size=(6, 2))
    np.testing.assert_array_equal(m.predict(h2), predict_naive_last(h2, 3))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3), st.sampled_from(["independent", "per-channel"]))
def test_nlinear_level_equivariance(seed, c, mode):
    rng = np.random.default_rng(seed)
    m = LinearModel(ForecasterSpec("nlinear", 7, 3, mode), 2).init_params(rng)
    h = rng.normal(size=(4, 7, 2))
    np.testing.assert_allclose(m.predict(h + c), m.predict(h) + c, rtol=1e-12, atol=1e-9)


# --- gradients -------------------------------------------------------------

def _grad_instance(seed):
    rng = np.random.default_rng(seed)
    kind = ("linear", "dlinear", "nlinear")[seed % 3]
    mode = ("independent", "per-channel")[(seed // 3) % 2]
    T_p, T_f, N, B = int(rng.integers(2, 9)), int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 5))
    k = int(rng.choice([1, 3, 5]))
    m = LinearModel(ForecasterSpec(kind, T_p, T_f, mode, kernel=k), N).init_params(rng)
    H, F = rng.normal(size=(B, T_p, N)), rng.normal(size=(B, T_f, N))
    mask = rng.random(F.shape) < 0.8
    mask.flat[0] = True
    return m, H, F, mask


def check_gradient(seed, h=1e-8):
    """Returns None if the instance sits on a kink, else the max relative error."""
    m, H, F, mask = _grad_instance(seed)
    resid = m.forward(H) - F
    if (np.abs(resid[mask]) < 1e-6).any():
        return None
    _, grads = m.loss_and_grad(H, F, mask)

    def loss_at(params):
        return float(np.abs(m.forward(H, params) - F)[mask].mean())

    fd = central_difference(loss_at, m.params, h)
    # relative to the whole gradient vector: a tensor whose gradient is
    # identically zero (kernel-1 remainder, NLinear's last row) only sees
    # finite-difference roundoff
    scale = max(np.abs(g).max() for g in grads.values())
    return max(np.abs(grads[k] - fd[k]).max() for k in grads) / scale


@pytest.mark.parametrize("seed", range(30))
def test_gradient_matches_finite_differences(seed):
    err = check_gradient(seed)
    if err is not None:
        assert err <= 1e-4


def test_gradient_curriculum_horizon_masks_tail():
    m, H, F, mask = _grad_instance(4)
    full = m.loss_and_grad(H, F, mask, horizon=1)
    trimmed = mask.copy()
    trimmed[:, 1:, :] = False
    ref = m.loss_and_grad(H, F, trimmed)
    assert full[0] == ref[0]


def test_clip_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_global_norm(g, 1.0) == 5.0
    np.testing.assert_allclose(np.hypot(g["a"], g["b"]), 1.0)


# --- closed form -----------------------------------------------------------

def test_closed_form_doubling():
    ws = windows(2.0 ** np.arange(10), 0, 10, 1, 1)
    m = fit_linear_closed_form(ws, ForecasterSpec("linear", 1, 1, ridge=0.0), 1)
    np.testing.assert_allclose(m.params["W"], [[2.0]], rtol=1e-9)
    assert abs(m.params["b"][0]) < 1e-9


def test_closed_form_constant_series():
    ws = windows(np.full(50, 7.5), 0, 50, 4, 2)
    with pytest.raises(SingularSystem):
        fit_linear_closed_form(ws, ForecasterSpec("linear", 4, 2, ridge=0.0), 1)
    m = fit_linear_closed_form(ws, ForecasterSpec("linear", 4, 2, ridge=1e-10), 1)
    H, F, _, _ = ws.batch()
    np.testing.assert_allclose(m.predict(H), F, atol=1e-6)


def _ar3(T, N, seed):
    rng = np.random.default_rng(seed)
    X = np.zeros((T, N))
    X[:3] = rng.normal(size=(3, N))
    for t in range(3, T):
        X[t] = 0.5 * X[t - 1] - 0.3 * X[t - 2] + 0.2 * X[t - 3] + rng.normal(size=N)
    return X


def _oracle_rows(ws, kind, k):
    H, F, _, _ = ws.batch()
    xs, ys = [], []
    for b in range(H.shape[0]):
        for n in range(H.shape[2]):
            h, f = H[b, :, n], F[b, :, n]
            if kind == "nlinear":
                xs.append(h[:-1] - h[-1])
                ys.append(f - h[-1])
            elif kind == "dlinear":
                pad = np.concatenate([[h[0]] * (k // 2), h, [h[-1]] * (k // 2)])
                trend = np.array([pad[i:i + k].mean() for i in range(h.size)])
                xs.append(np.concatenate([trend, h - trend]))
                ys.append(f)
            else:
                xs.append(h)
                ys.append(f)
    return np.array(xs), np.array(ys)


@pytest.mark.parametrize("kind", ["linear", "nlinear", "dlinear"])
@pytest.mark.parametrize("ridge", [0.0, 0.7])
def test_closed_form_matches_dense_oracle(kind, ridge):
    if kind == "dlinear" and ridge == 0:
        pytest.skip("rank deficient by construction; covered separately")
    ws = windows(_ar3(230, 2, 11), 0, 230, 12, 5, stride=2)
    m = fit_linear_closed_form(ws, ForecasterSpec(kind, 12, 5, kernel=5, ridge=ridge), 2, chunk=7)
    W, b = ridge_dense(*_oracle_rows(ws, kind, 5), ridge)
    if kind == "nlinear":
        np.testing.assert_allclose(m.params["W"][:-1], W, rtol=1e-6, atol=1e-9)
        assert not m.params["W"][-1].any()
        np.testing.assert_allclose(m.params["b"], b, rtol=1e-6, atol=1e-9)
    elif kind == "dlinear":
        np.testing.assert_allclose(m.params["W_trend"], W[:12], rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(m.params["W_season"], W[12:], rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(m.params["b_trend"] + m.params["b_season"], b, rtol=1e-6, atol=1e-9)
    else:
        np.testing.assert_allclose(m.params["W"], W, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(m.params["b"], b, rtol=1e-6, atol=1e-9)


def test_closed_form_dlinear_unregularized_equals_linear():
    ws = windows(_ar3(200, 2, 3), 0, 200, 10, 3)
    lin = fit_linear_closed_form(ws, ForecasterSpec("linear", 10, 3, ridge=0.0), 2)
    dl = fit_linear_closed_form(ws, ForecasterSpec("dlinear", 10, 3, kernel=5, ridge=0.0), 2)
    H = ws.batch()[0]
    np.testing.assert_allclose(dl.predict(H), lin.predict(H), rtol=1e-9, atol=1e-9)


def test_closed_form_per_channel_matches_separate_fits():
    X = _ar3(200, 3, 5) * [1, 5, 0.2]
    ws = windows(X, 0, 200, 6, 2)
    both = fit_linear_closed_form(ws, ForecasterSpec("linear", 6, 2, "per-channel", ridge=0.3), 3)
    for n in range(3):
        one = fit_linear_closed_form(windows(X[:, n], 0, 200, 6, 2),
                                     ForecasterSpec("linear", 6, 2, ridge=0.3), 1)
        np.testing.assert_allclose(both.params["W"][n], one.params["W"], rtol=1e-8, atol=1e-12)


def test_closed_form_optimality():
    ws = windows(_ar3(150, 2, 9), 0, 150, 5, 2)
    m = fit_linear_closed_form(ws, ForecasterSpec("linear", 5, 2, ridge=0.0), 2)
    H, F, _, _ = ws.batch()
    base = np.mean((m.predict(H) - F) ** 2)
    rng = np.random.default_rng(0)
    for _ in range(200):
        d = {k: rng.normal(size=v.shape) for k, v in m.params.items()}
        norm = np.sqrt(sum((x ** 2).sum() for x in d.values()))
        p = {k: m.params[k] + 1e-3 * d[k] / norm for k in d}
        assert np.mean((m.forward(H, p) - F) ** 2) >= base


def test_closed_form_drops_rows_with_masked_future():
    X = _ar3(120, 1, 2)
    ds = TimeSeriesDataset.from_array(X, 60)
    poisoned = X.copy()
    poisoned[50, 0] = np.nan
    ds2 = TimeSeriesDataset.from_array(poisoned, 60)
    sc = ZScoreScaler.identity(1)
    spec = ForecasterSpec("linear", 4, 2, ridge=0.1)
    m2 = fit_linear_closed_form(WindowSet.from_dataset(ds2, sc, (0, 120), 4, 2), spec, 1)
    # oracle: the same fit with the affected futures removed by hand
    ws = WindowSet.from_dataset(ds, sc, (0, 120), 4, 2)
    kept = np.flatnonzero(~((ws.anchors <= 50) & (ws.anchors + 2 > 50)))
    H, F, _, _ = ws.batch(kept)
    # histories that contain the hole see the zeroed value
    for i, a in enumerate(ws.anchors[kept]):
        if a - 4 <= 50 < a:
            H[i, 50 - (a - 4), 0] = 0.0
    W, b = ridge_dense(H[:, :, 0], F[:, :, 0], 0.1)
    np.testing.assert_allclose(m2.params["W"], W, rtol=1e-8)
    np.testing.assert_allclose(m2.params["b"], b, rtol=1e-8, atol=1e-12)


# --- SGD -------------------------------------------------------------------

def _sine_sets():
    t = np.arange(600)
    X = np.stack([np.sin(2 * np.pi * t / 20 + p) for p in (0, 1, 2)], 1)
    return windows(X, 0, 400, 8, 4), windows(X, 400, 600, 8, 4)


def test_sgd_zero_epochs_is_identity():
    tr, va = _sine_sets()
    m = LinearModel(ForecasterSpec("linear", 8, 4), 3).init_params(np.random.default_rng(0))
    before = {k: v.copy() for k, v in m.params.items()}
    m, rec = sgd_fit(m, tr, va, TrainerConfig(method="sgd", epochs=0), np.random.default_rng(0))
    assert rec == []
    for k in before:
        np.testing.assert_array_equal(m.params[k], before[k])


def test_sgd_converges_on_exact_linear_data():
    tr, va = _sine_sets()
    m = LinearModel(ForecasterSpec("linear", 8, 4), 3).init_params(np.random.default_rng(0))
    cfg = TrainerConfig(method="sgd", lr=3e-3, epochs=300, batch_size=32, patience=300)
    m, rec = sgd_fit(m, tr, va, cfg, np.random.default_rng(0))
    assert masked_mae_on(m, va) < 1e-3
    assert masked_mae_on(m, va) == min(r.val_loss for r in rec)


def test_sgd_divergence():
    tr, va = _sine_sets()
    m = LinearModel(ForecasterSpec("linear", 8, 4), 3).init_params(np.random.default_rng(0))
    with pytest.raises(DivergenceError) as err:
        sgd_fit(m, tr, va, TrainerConfig(method="sgd", lr=1e6, epochs=5), np.random.default_rng(0))
    assert err.value.epoch >= 0 and err.value.batch >= 0


@pytest.mark.parametrize("kind", ["linear", "dlinear", "nlinear"])
def test_sgd_deterministic(kind):
    tr, va = _sine_sets()
    cfg = TrainerConfig(method="sgd", lr=1e-2, epochs=4, batch_size=16, clip_norm=1.0, curriculum=True)
    out = []
    for _ in range(2):
        m = LinearModel(ForecasterSpec(kind, 8, 4, kernel=3), 3).init_params(np.random.default_rng(5))
        m, rec = sgd_fit(m, tr, va, cfg, np.random.default_rng(5))
        out.append((m.params, [r.horizon for r in rec]))
    assert out[0][1] == [1, 2, 3, 4]
    for k in out[0][0]:
        assert out[0][0][k].tobytes() == out[1][0][k].tobytes()


def test_early_stop_examples():
    assert early_stop([3, 2, 2, 2], 2) == "stop"
    assert early_stop([3, 2, 2], 2) == "continue"
    assert all(early_stop(list(range(10, 10 - n, -1)), 1) == "continue" for n in range(1, 10))
    assert early_stop([1.0, 1.0], 1) == "stop"


# --- checkpoint ------------------------------------------------------------

@pytest.mark.parametrize("kind", ["linear", "dlinear", "nlinear", "naive-last", "seasonal-naive"])
@pytest.mark.parametrize("mode", ["independent", "per-channel"])
def test_checkpoint_roundtrip(tmp_path, kind, mode):
    spec = ForecasterSpec(kind, 9, 4, mode, kernel=3, season=3)
    m = build_forecaster(spec, 3)
    if isinstance(m, LinearModel):
        m.init_params(np.random.default_rng(2))
    save_model(m, tmp_path / "c.bin")
    back = load_model(tmp_path / "c.bin")
    assert back.spec == spec
    H = np.random.default_rng(3).normal(size=(5, 9, 3))
    assert back.predict(H).tobytes() == m.predict(H).tobytes()


def test_spec_validation():
    with pytest.raises(SpecError):
        ForecasterSpec("transformer", 4, 4)
    with pytest.raises(SpecError):
        ForecasterSpec("dlinear", 4, 4, kernel=2)
