"""Weighted-loss minibatch training and leave-one-site-out cross-validation.

The objective is a mean of weighted absolute-error powers,

    L = (1/N) sum_i w_i |y_i - yhat_i|^n1,   w_i = 1 + |y_i|^n2 (n2 > 0),

so n1=1 recovers MAE and n1=2 MSE when the weighting is off (n2=0 means
w_i = 1, not 1 + |y|^0).  Raising n2 emphasizes large observed tendencies,
which are rare but matter most for the snowpack signal.

Training happens in scaled space with the output bounds active, so gradients
flow through the clamp exactly as they will at inference.  The optimizer is
plain RMSProp; everything is deterministic in the run seed.
"""

import copy
from dataclasses import dataclass, field

import numpy as np

from .constraints import (ConstrainedModel, ThresholdSpec, snow_clamp,
                          snow_clamp_grad)
from .errors import ConfigError
from .net import GradientSet, backward_batch, forward_batch, init_predictive

DAY_SECONDS = 86400.0


@dataclass
class Hyperparams:
    """Knobs of one training run.

    N is the feature-averaging window in native steps, n the hidden-layer
    width multiplier, n1/n2 the loss exponents.
    """

    N: int = 1
    n: int = 4
    n1: float = 2.0
    n2: float = 4.0
    batch_size: int = 64
    epochs: int = 100
    learning_rate: float = 1e-3
    seed: int = 0
    rho: float = 0.9
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.N < 1 or self.n < 1:
            raise ConfigError("N and n must be >= 1")
        if self.n1 < 1.0 or self.n2 < 0.0:
            raise ConfigError("need n1 >= 1 and n2 >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if self.learning_rate <= 0.0 or self.eps <= 0.0:
            raise ConfigError("learning_rate and eps must be positive")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError("rho must be in (0, 1)")


@dataclass
class TrainingSet:
    """Scaled design matrix plus the constants needed to undo the scaling.

    X is (m, k) with each column divided by scale_x; y is the target tendency
    divided by scale_y.  site labels rows by origin station; dt is the native
    step in seconds (targets are per-second rates).
    """

    X: np.ndarray
    y: np.ndarray
    site: np.ndarray
    scale_x: np.ndarray
    scale_y: float
    feature_names: tuple[str, ...]
    dt: float = DAY_SECONDS

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, np.float64)
        self.y = np.asarray(self.y, np.float64)
        self.site = np.asarray(self.site)
        self.scale_x = np.asarray(self.scale_x, np.float64)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise ConfigError("X must be (m, k) with matching y")
        if self.site.shape != (self.X.shape[0],):
            raise ConfigError("site labels must match rows")
        if self.scale_x.shape != (self.X.shape[1],):
            raise ConfigError("scale_x must match feature count")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ConfigError("training data must be finite")
        if not np.all(self.scale_x > 0.0) or not self.scale_y > 0.0:
            raise ConfigError("scales must be positive")


def compute_scales(X_raw: np.ndarray, y_raw: np.ndarray
                   ) -> tuple[np.ndarray, float]:
    """Per-feature standard deviation and max |target|."""
    X_raw = np.asarray(X_raw, np.float64)
    y_raw = np.asarray(y_raw, np.float64)
    scale_x = X_raw.std(axis=0)
    if np.any(scale_x == 0.0):
        dead = np.flatnonzero(scale_x == 0.0).tolist()
        raise ConfigError(f"features {dead} have zero variance, cannot scale")
    scale_y = float(np.max(np.abs(y_raw)))
    if scale_y == 0.0:
        raise ConfigError("target is identically zero, cannot scale")
    return scale_x, scale_y


def build_training_set(X_raw, y_raw, site, feature_names, dt: float = DAY_SECONDS,
                       scales: tuple[np.ndarray, float] | None = None
                       ) -> TrainingSet:
    """Scale raw engineered records into a TrainingSet.

    Pass scales from a training fold to reuse them on other data.
    """
    X_raw = np.asarray(X_raw, np.float64)
    y_raw = np.asarray(y_raw, np.float64)
    scale_x, scale_y = compute_scales(X_raw, y_raw) if scales is None else scales
    return TrainingSet(X=X_raw / scale_x, y=y_raw / scale_y, site=np.asarray(site),
                       scale_x=scale_x, scale_y=scale_y,
                       feature_names=tuple(feature_names), dt=dt)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def sample_weights(y: np.ndarray, n2: float) -> np.ndarray:
    if n2 == 0.0:
        return np.ones_like(y)
    return 1.0 + np.abs(y) ** n2


def loss(y_hat: np.ndarray, y: np.ndarray, n1: float, n2: float) -> float:
    """Mean weighted |error|^n1 over the given samples."""
    r = np.abs(np.asarray(y_hat) - np.asarray(y))
    return float(np.mean(sample_weights(np.asarray(y), n2) * r ** n1))

def loss_grad(y_hat: np.ndarray, y: np.ndarray, n1: float, n2: float
              ) -> np.ndarray:
    """dL/dy_hat per sample, including the 1/N factor.

    At a zero residual the gradient is 0 for every n1 >= 1 (for n1 = 1 this
    is the sign(0) = 0 subgradient choice).
    """
    y_hat = np.asarray(y_hat, np.float64)
    y = np.asarray(y, np.float64)
    r = y_hat - y
    a = np.abs(r)
    with np.errstate(invalid="ignore"):
        mag = np.where(a > 0.0, a ** (n1 - 1.0), 0.0)
    return sample_weights(y, n2) * n1 * mag * np.sign(r) / y.size


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


def rmsprop_init(params: list[np.ndarray]) -> list[np.ndarray]:
    return [np.zeros_like(p) for p in params]


def rmsprop_step(params: list[np.ndarray], grads: list[np.ndarray],
                 state: list[np.ndarray], learning_rate: float,
                 rho: float = 0.9, eps: float = 1e-8
                 ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """One RMSProp update; returns new params and new state, inputs untouched."""
    new_params, new_state = [], []
    for p, g, v in zip(params, grads, state):
        v = rho * v + (1.0 - rho) * g * g
        new_state.append(v)
        new_params.append(p - learning_rate * g / (np.sqrt(v) + eps))
    return new_params, new_state


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: ConstrainedModel
    loss_history: np.ndarray
    checkpoints: list[tuple[int, ConstrainedModel]] = field(default_factory=list)


def _constrained_batch(net, Xb, scale_x, scale_y, dt, threshold):
    """Scaled-space forward through the net and the snow clamp.

    The floor is the scaled image of -z/dt; the growth gate reads the scaled
    snowfall column (positivity survives positive scaling).  Directed
    rounding is an inference concern and is skipped here.
    """
    si, gi = threshold.state_index, threshold.gate_index
    p, cache = forward_batch(net, Xb)
    state_raw = Xb[:, si] * scale_x[si]
    floor = -(state_raw / (dt * scale_y))
    gate = (Xb[:, gi] > 0.0).astype(np.float64)
    y_hat = snow_clamp(p, gate, floor)
    return p, cache, y_hat, gate, floor


def train(data: TrainingSet, hp: Hyperparams,
          threshold: ThresholdSpec = ThresholdSpec(),
          checkpoint_every: int | None = None) -> TrainResult:
    """Fit a fresh network on the given set.

    Bit-reproducible for a fixed (data, hp): initialization and the per-epoch
    shuffle both derive from hp.seed.  A non-finite batch loss aborts.
    """
    k = data.X.shape[1]
    net = init_predictive(k=k, n=hp.n, seed=hp.seed)
    params = net.params()
    state = rmsprop_init(params)
    rng = np.random.default_rng(hp.seed)
    m = data.X.shape[0]
    history = np.empty(hp.epochs)
    checkpoints: list[tuple[int, ConstrainedModel]] = []

    def snapshot() -> ConstrainedModel:
        return ConstrainedModel(net=copy.deepcopy(net), threshold=threshold,
                                scale_x=data.scale_x.copy(),
                                scale_y=data.scale_y, dt=data.dt,
                                feature_names=data.feature_names)

    for epoch in range(hp.epochs):
        order = rng.permutation(m)
        for start in range(0, m, hp.batch_size):
            idx = order[start:start + hp.batch_size]
            Xb, yb = data.X[idx], data.y[idx]
            p, cache, y_hat, gate, floor = _constrained_batch(
                net, Xb, data.scale_x, data.scale_y, data.dt, threshold)
            batch_loss = loss(y_hat, yb, hp.n1, hp.n2)
            if not np.isfinite(batch_loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} batch {start // hp.batch_size};"
                    " lower the learning rate or check the data")
            upstream = loss_grad(y_hat, yb, hp.n1, hp.n2) * \
                snow_clamp_grad(p, gate, floor)
            grads = backward_batch(net, cache, upstream)
            params, state = rmsprop_step(params, grads.params(), state,
                                         hp.learning_rate, hp.rho, hp.eps)
            net.set_params(params)
        _, _, y_all, _, _ = _constrained_batch(
            net, data.X, data.scale_x, data.scale_y, data.dt, threshold)
        history[epoch] = loss(y_all, data.y, hp.n1, hp.n2)
        if checkpoint_every and (epoch + 1) % checkpoint_every == 0:
            checkpoints.append((epoch + 1, snapshot()))

    return TrainResult(model=snapshot(), loss_history=history,
                       checkpoints=checkpoints)


# ---------------------------------------------------------------------------
# leave-one-site-out cross-validation
# ---------------------------------------------------------------------------


def loo_cv(tables: dict, grid: list[Hyperparams], target: str = "z",
           dt: float = DAY_SECONDS, eval_every: int = 10,
           rank_by: str = "rmse", simulate_scores: bool = True):
    """Grid search with one station held out per fold.

    tables maps site id to a cleaned daily frame.  For each candidate and
    fold the model trains on the remaining sites, checkpoints every
    eval_every epochs, and is scored on the held-out site with unaveraged,
    unfiltered single-step records (regression RMSE) plus, optionally, a
    continuous simulation (NSE).  The checkpoint with the best held-out RMSE
    represents the run.  Returns a ranked pandas DataFrame, one row per
    candidate, with per-fold detail columns.
    """
    import pandas as pd

    from .pipeline import engineer_features
    from .simulation import SiteSeries, simulate_depth

    if rank_by not in ("rmse", "nse"):
        raise ConfigError("rank_by must be 'rmse' or 'nse'")
    if len(tables) < 2:
        raise ConfigError("need at least two sites for leave-one-out")
    threshold = ThresholdSpec(state_index=0 if target == "z" else 1)

    rows = []
    for hp_idx, hp in enumerate(grid):
        fold_rmse, fold_nse, fold_epoch = [], [], []
        for held in sorted(tables):
            train_tables = {s: t for s, t in tables.items() if s != held}
            eng = engineer_features(train_tables, N=hp.N, target=target)
            ts = build_training_set(eng.X, eng.y, eng.site, eng.feature_names,
                                    dt=dt)
            res = train(ts, hp, threshold, checkpoint_every=eval_every)
            candidates = list(res.checkpoints)
            if not candidates or candidates[-1][0] != hp.epochs:
                candidates.append((hp.epochs, res.model))
            ev = engineer_features({held: tables[held]}, N=1, target=target,
                                   drop_uninformative=False)
            best = None
            for epoch, model in candidates:
                pred = model.evaluate_batch(ev.X)
                rmse = float(np.sqrt(np.mean((pred - ev.y) ** 2)))
                if best is None or rmse < best[1]:
                    best = (epoch, rmse, model)
            epoch, rmse, model = best
            nse = np.nan
            if simulate_scores:
                from .metrics import compute_metrics

                series = SiteSeries.from_frame(held, tables[held],
                                               model.feature_names)
                sim = simulate_depth(series, model)
                obs = series.swe_obs if target == "swe" else series.z_obs
                nse_val = compute_metrics(obs, sim.state).nse
                nse = np.nan if nse_val is None else nse_val
            fold_rmse.append(rmse)
            fold_nse.append(nse)
            fold_epoch.append(epoch)
        rows.append({
            "candidate": hp_idx, "N": hp.N, "n": hp.n, "n1": hp.n1,
            "n2": hp.n2, "batch_size": hp.batch_size, "epochs": hp.epochs,
            "learning_rate": hp.learning_rate, "seed": hp.seed,
            "mean_rmse": float(np.mean(fold_rmse)),
            "mean_nse": (float(np.mean([v for v in fold_nse if np.isfinite(v)]))
                         if any(np.isfinite(v) for v in fold_nse) else np.nan),
            "fold_rmse": fold_rmse, "fold_nse": fold_nse,
            "best_epochs": fold_epoch,
        })
    out = pd.DataFrame(rows)
    if rank_by == "rmse":
        out = out.sort_values("mean_rmse", ascending=True, kind="mergesort")
    else:
        out = out.sort_values("mean_nse", ascending=False, kind="mergesort")
    out = out.reset_index(drop=True)
    out.insert(0, "rank", np.arange(1, len(out) + 1))
    return out
