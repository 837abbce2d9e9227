"""Loss, optimizer, and training-loop behavior."""

import numpy as np
import pytest

from snowpar import (ConfigError, Hyperparams, ThresholdSpec, build_training_set,
                     compute_scales, loo_cv, loss, loss_grad, rmsprop_init,
                     rmsprop_step, sample_weights, train)
from snowpar.synthetic import generate_corpus
from snowpar.pipeline import engineer_features


def test_hyperparam_validation():
    Hyperparams()  # defaults are legal
    with pytest.raises(ConfigError):
        Hyperparams(N=0)
    with pytest.raises(ConfigError):
        Hyperparams(n1=0.5)
    with pytest.raises(ConfigError):
        Hyperparams(n2=-1.0)
    with pytest.raises(ConfigError):
        Hyperparams(rho=1.0)
    with pytest.raises(ConfigError):
        Hyperparams(learning_rate=0.0)


def test_compute_scales():
    X = np.array([[1.0, 10.0], [3.0, 30.0], [5.0, 50.0]])
    y = np.array([-0.5, 2.0, 1.0])
    sx, sy = compute_scales(X, y)
    assert np.allclose(sx, X.std(axis=0))
    assert sy == 2.0
    with pytest.raises(ConfigError):
        compute_scales(np.array([[1.0, 7.0], [2.0, 7.0]]), y[:2])
    with pytest.raises(ConfigError):
        compute_scales(X, np.zeros(3))


def test_build_training_set_scales_and_reuse():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3)) * [1.0, 5.0, 0.1]
    y = rng.normal(size=40)
    site = np.array(["a"] * 40)
    ts = build_training_set(X, y, site, ("f1", "f2", "f3"))
    assert np.allclose(ts.X.std(axis=0), 1.0)
    assert np.max(np.abs(ts.y)) == pytest.approx(1.0)
    # reusing the scales reproduces exactly the same transform
    ts2 = build_training_set(X, y, site, ("f1", "f2", "f3"),
                             scales=(ts.scale_x, ts.scale_y))
    assert np.array_equal(ts.X, ts2.X)
    assert np.array_equal(ts.y, ts2.y)


def test_training_set_validation():
    good = dict(X=np.ones((3, 2)) + np.arange(3)[:, None], y=np.zeros(3),
                site=np.array(["a", "a", "b"]), scale_x=np.ones(2),
                scale_y=1.0, feature_names=("u", "v"))
    from snowpar.training import TrainingSet

    TrainingSet(**good)
    with pytest.raises(ConfigError):
        TrainingSet(**{**good, "y": np.zeros(4)})
    with pytest.raises(ConfigError):
        TrainingSet(**{**good, "site": np.array(["a"])})
    with pytest.raises(ConfigError):
        TrainingSet(**{**good, "scale_x": np.ones(3)})
    with pytest.raises(ConfigError):
        TrainingSet(**{**good, "scale_y": 0.0})
    bad = good["X"].copy()
    bad[0, 0] = np.nan
    with pytest.raises(ConfigError):
        TrainingSet(**{**good, "X": bad})


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def test_weights_flat_when_exponent_zero():
    y = np.array([-3.0, 0.0, 0.25, 7.5])
    assert np.array_equal(sample_weights(y, 0.0), np.ones(4))
    assert np.allclose(sample_weights(y, 2.0), 1.0 + np.abs(y) ** 2)


def test_loss_reduces_to_mae_and_mse():
    rng = np.random.default_rng(1)
    y = rng.normal(size=200)
    y_hat = y + rng.normal(size=200)
    assert loss(y_hat, y, 1.0, 0.0) == pytest.approx(
        np.mean(np.abs(y_hat - y)), abs=1e-15)
    assert loss(y_hat, y, 2.0, 0.0) == pytest.approx(
        np.mean((y_hat - y) ** 2), abs=1e-15)


def test_loss_grad_matches_finite_differences():
    rng = np.random.default_rng(2)
    y = rng.normal(size=64)
    y_hat = y + rng.normal(size=64) * 0.3
    for n1, n2 in [(1.0, 0.0), (2.0, 0.0), (2.0, 4.0), (3.0, 2.0), (1.5, 1.0)]:
        g = loss_grad(y_hat, y, n1, n2)
        h = 1e-6
        for i in [0, 7, 33]:
            up = y_hat.copy()
            up[i] += h
            dn = y_hat.copy()
            dn[i] -= h
            num = (loss(up, y, n1, n2) - loss(dn, y, n1, n2)) / (2 * h)
            assert g[i] == pytest.approx(num, rel=1e-4, abs=1e-8)


def test_loss_grad_zero_at_zero_residual():
    y = np.array([1.0, -2.0, 0.0])
    for n1 in (1.0, 1.5, 2.0, 4.0):
        g = loss_grad(y, y, n1, 4.0)
        assert np.array_equal(g, np.zeros(3))


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


def test_rmsprop_zero_grad_is_noop():
    params = [np.array([1.0, -2.0]), np.array([[0.5]])]
    state = rmsprop_init(params)
    newp, news = rmsprop_step(params, [np.zeros(2), np.zeros((1, 1))], state,
                              learning_rate=0.1)
    for a, b in zip(params, newp):
        assert np.array_equal(a, b)
    for v in news:
        assert np.array_equal(v, np.zeros_like(v))


def test_rmsprop_is_functional():
    params = [np.array([1.0])]
    grads = [np.array([3.0])]
    state = rmsprop_init(params)
    p_before = params[0].copy()
    rmsprop_step(params, grads, state, 0.1)
    assert np.array_equal(params[0], p_before)
    assert np.array_equal(state[0], np.zeros(1))


def test_rmsprop_steady_state_step_is_sign_times_lr():
    # with a constant gradient, v -> g^2 and the step -> lr * sign(g)
    params = [np.array([0.0])]
    state = rmsprop_init(params)
    g = [np.array([-7.0])]
    lr = 1e-3
    last = params[0][0]
    for _ in range(2000):
        params, state = rmsprop_step(params, g, state, lr)
    step = params[0][0] - last
    assert step > 0  # moving against the negative gradient
    # average step over the tail approaches lr
    tail_start = params[0][0]
    for _ in range(100):
        params, state = rmsprop_step(params, g, state, lr)
    mean_step = (params[0][0] - tail_start) / 100
    assert mean_step == pytest.approx(lr, rel=1e-3)


def test_rmsprop_grad_scale_invariance():
    # normalized updates: scaling the gradient by c barely changes the step
    out = {}
    for c in (1.0, 1e4):
        params = [np.array([0.0])]
        state = rmsprop_init(params)
        for _ in range(50):
            params, state = rmsprop_step(params, [np.array([2.0 * c])], state,
                                         1e-2, eps=1e-12)
        out[c] = params[0][0]
    assert out[1.0] == pytest.approx(out[1e4], rel=1e-6)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def _toy_set(m=400, seed=0):
    rng = np.random.default_rng(seed)
    X = np.abs(rng.normal(size=(m, 7))) + 0.1
    X[:, 6] = rng.choice([0.0, 0.02], size=m)
    y = 0.3 * X[:, 6] - 0.01 * X[:, 5] * X[:, 0] * 0.1
    y = np.clip(y, -(X[:, 0]) / 86400.0, None)
    return build_training_set(X, y + rng.normal(scale=1e-4, size=m),
                              np.array(["a"] * m), tuple("abcdefg"))


def test_train_reduces_loss():
    ts = _toy_set()
    res = train(ts, Hyperparams(epochs=40, n=2, seed=0))
    assert res.loss_history.shape == (40,)
    assert res.loss_history[-1] < res.loss_history[0]
    assert np.all(np.isfinite(res.loss_history))


def test_train_is_bit_reproducible():
    ts = _toy_set()
    hp = Hyperparams(epochs=5, n=2, seed=3)
    a = train(ts, hp)
    b = train(ts, hp)
    for pa, pb in zip(a.model.net.params(), b.model.net.params()):
        assert np.array_equal(pa, pb)
    assert np.array_equal(a.loss_history, b.loss_history)
    c = train(ts, Hyperparams(epochs=5, n=2, seed=4))
    assert any(not np.array_equal(pa, pc)
               for pa, pc in zip(a.model.net.params(), c.model.net.params()))


def test_train_checkpoints():
    ts = _toy_set()
    res = train(ts, Hyperparams(epochs=10, n=1, seed=0), checkpoint_every=4)
    assert [e for e, _ in res.checkpoints] == [4, 8]
    # checkpoints are snapshots, not references to the live net
    e4 = res.checkpoints[0][1]
    assert e4 != res.model


def test_train_aborts_on_divergence():
    # a step this size overflows the forward pass on the next batch
    ts = _toy_set()
    with np.errstate(all="ignore"), pytest.raises(RuntimeError,
                                                  match="non-finite"):
        train(ts, Hyperparams(epochs=2, n=4, seed=0, learning_rate=1e200))


def test_trained_model_obeys_constraints():
    ts = _toy_set()
    res = train(ts, Hyperparams(epochs=10, n=2, seed=0))
    m = res.model
    rng = np.random.default_rng(5)
    X = np.abs(rng.normal(size=(500, 7)))
    X[:, 6] = 0.0
    out = m.evaluate_batch(X)
    assert np.all(out <= 0.0)
    assert np.all(X[:, 0] + m.dt * out >= 0.0)


def test_loo_cv_ranks_candidates(tmp_path):
    tables = {s: t for s, t in
              list(generate_corpus(n_sites=3, seed=11, n_days=240).items())}
    grid = [Hyperparams(N=1, n=2, epochs=30, seed=0),
            Hyperparams(N=1, n=2, epochs=30, seed=0, n1=1.0, n2=0.0)]
    ranking = loo_cv(tables, grid, eval_every=15, simulate_scores=False)
    assert ranking.columns[0] == "rank"
    assert "mean_rmse" in ranking.columns
    assert len(ranking) == 2
    assert ranking["mean_rmse"].is_monotonic_increasing
    assert set(ranking["rank"]) == {1, 2}
    with pytest.raises(ConfigError):
        loo_cv({"one": tables[next(iter(tables))]}, grid)
    with pytest.raises(ConfigError):
        loo_cv(tables, grid, rank_by="accuracy")


def test_loo_cv_nse_ranking():
    tables = generate_corpus(n_sites=2, seed=3, n_days=200)
    grid = [Hyperparams(N=1, n=1, epochs=10, seed=0)]
    ranking = loo_cv(tables, grid, eval_every=5, rank_by="nse",
                     simulate_scores=True)
    assert "mean_nse" in ranking.columns
    assert len(ranking) == 1
