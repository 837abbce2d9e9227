"""Explicit-Euler timeseries simulation driven by observed forcing.

State (depth, or depth plus water equivalent in coupled mode) is predicted;
all other inputs come from the station record.  Steps follow the timestamp
gaps: a gap of K native steps advances the state by K*dt times the predicted
tendency.  Gaps longer than k_max steps reset the state to the observation
and are logged; multi-step updates that land below zero clamp to zero and
are logged too (single steps cannot, by construction of the floor).
"""

from dataclasses import dataclass, field

import numpy as np

from .backend import BACKEND
from .constraints import ConstrainedModel, coupled_floor
from .errors import ConfigError, DataError

DEFAULT_K_MAX = 5


@dataclass
class SiteSeries:
    """One station's cleaned daily record in simulation order."""

    site: str
    t: np.ndarray        # native-step index, strictly increasing ints
    X: np.ndarray        # (m, k) physical forcing in model feature order
    z_obs: np.ndarray
    swe_obs: np.ndarray

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, np.int64)
        self.X = np.ascontiguousarray(self.X, np.float64)
        self.z_obs = np.asarray(self.z_obs, np.float64)
        self.swe_obs = np.asarray(self.swe_obs, np.float64)
        m = self.t.size
        if self.X.shape[0] != m or self.z_obs.size != m or self.swe_obs.size != m:
            raise DataError("series arrays must share their first dimension")
        if m < 2:
            raise DataError("need at least two observations to simulate")
        if np.any(np.diff(self.t) <= 0):
            raise DataError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.X)):
            raise DataError("forcing must be complete (finite)")
        if np.any(self.z_obs < 0) or np.any(self.swe_obs < 0):
            raise DataError("observed states must be non-negative")

    @classmethod
    def from_frame(cls, site: str, df, feature_names) -> "SiteSeries":
        """Build from a cleaned daily frame (datetime index or 'date' column)."""
        import pandas as pd

        if isinstance(df.index, pd.DatetimeIndex):
            dates = df.index
        elif "date" in df.columns:
            dates = pd.DatetimeIndex(df["date"])
        else:
            raise DataError("frame needs a datetime index or a 'date' column")
        missing = [c for c in feature_names if c not in df.columns]
        if missing:
            raise DataError(f"frame is missing feature columns {missing}")
        t = ((dates - dates[0]) / pd.Timedelta(days=1)).round().astype(np.int64)
        return cls(site=site, t=np.asarray(t),
                   X=df[list(feature_names)].to_numpy(np.float64),
                   z_obs=df["z"].to_numpy(np.float64),
                   swe_obs=df["swe"].to_numpy(np.float64))


@dataclass
class SimulationResult:
    """Predicted trajectory aligned with the observations, plus step logs."""

    site: str
    t: np.ndarray
    state: np.ndarray                 # primary state (z, or SWE if that model ran)
    K: np.ndarray                     # per-transition step counts, length m-1
    reset: np.ndarray                 # gap resets, length m-1
    clamp: np.ndarray                 # negative-update clamps, length m-1
    swe: np.ndarray | None = None     # coupled mode second state
    clamp_swe: np.ndarray | None = None

    @property
    def reset_fraction(self) -> float:
        return float(self.reset.mean()) if self.reset.size else 0.0

    @property
    def clamp_count(self) -> int:
        n = int(self.clamp.sum())
        if self.clamp_swe is not None:
            n += int(self.clamp_swe.sum())
        return n


def _resolve_backend(backend: str | None) -> str:
    if backend is None:
        return BACKEND
    if backend not in ("numba", "numpy"):
        raise ConfigError(f"backend must be 'numba' or 'numpy', got {backend!r}")
    return backend


def pack_net(model: ConstrainedModel) -> tuple:
    """Unpack weights into the flat tuple the compiled kernels take."""
    from .kernels import ACT_CODES

    net = model.net
    return (np.ascontiguousarray(net.W1), np.ascontiguousarray(net.b1),
            np.ascontiguousarray(net.W2), np.ascontiguousarray(net.b2),
            np.ascontiguousarray(net.W3), float(net.b3),
            ACT_CODES[net.act1], ACT_CODES[net.act2], ACT_CODES[net.act3])


def euler_step(model: ConstrainedModel, state: float, forcing_row,
               k_steps: int = 1) -> tuple[float, float, bool]:
    """One explicit Euler update; returns (next state, rate, clamped)."""
    if k_steps < 1:
        raise ConfigError("k_steps must be >= 1")
    x = np.asarray(forcing_row, np.float64).copy()
    x[model.threshold.state_index] = state
    rate = model.evaluate(x)
    nxt = state + (np.float64(k_steps) * model.dt) * rate
    clamped = bool(nxt < 0.0)
    if clamped:
        nxt = 0.0
    return float(nxt), rate, clamped


def simulate_depth(series: SiteSeries, model: ConstrainedModel,
                   k_max: int = DEFAULT_K_MAX,
                   backend: str | None = None) -> SimulationResult:
    """Simulate the model's own state over one station record.

    Works for either the depth network (state index 0) or a standalone water
    equivalent network (state index 1); the non-state twin column stays at
    its observed value.
    """
    be = _resolve_backend(backend)
    si = model.threshold.state_index
    obs = series.z_obs if si == 0 else series.swe_obs
    if be == "numba":
        from .kernels import simulate_param

        w = pack_net(model)
        z_hat, Ks, reset, clamp = simulate_param(
            series.t, series.X, obs, *w, model.scale_x, model.scale_y,
            model.dt, si, model.threshold.gate_index, k_max)
        return SimulationResult(site=series.site, t=series.t, state=z_hat,
                                K=Ks, reset=reset, clamp=clamp)
    m = series.t.size
    z_hat = np.empty(m)
    Ks = np.zeros(m - 1, np.int64)
    reset = np.zeros(m - 1, bool)
    clamp = np.zeros(m - 1, bool)
    z = obs[0]
    z_hat[0] = z
    for i in range(m - 1):
        K = int(series.t[i + 1] - series.t[i])
        Ks[i] = K
        if K > k_max:
            z = obs[i + 1]
            reset[i] = True
            z_hat[i + 1] = z
            continue
        nxt, _, clamped = euler_step(model, z, series.X[i], K)
        clamp[i] = clamped
        z = nxt
        z_hat[i + 1] = z
    return SimulationResult(site=series.site, t=series.t, state=z_hat, K=Ks,
                            reset=reset, clamp=clamp)


def simulate_coupled(series: SiteSeries, model_z: ConstrainedModel,
                     model_swe: ConstrainedModel, k_max: int = DEFAULT_K_MAX,
                     backend: str | None = None) -> SimulationResult:
    """Step depth and water equivalent together.

    Each transition advances SWE first, then depth with its floor replaced by
    (swe_next - z)/(K dt), which pins z_next at or above swe_next bit for bit
    (so z also never goes negative and its clamp log stays empty).  Resets
    restore both states from the observations.
    """
    if model_z.dt != model_swe.dt:
        raise ConfigError("coupled models must share dt")
    if not np.array_equal(model_z.scale_x, model_swe.scale_x):
        raise ConfigError("coupled models must share feature scaling")
    if model_z.threshold.state_index != 0 or model_swe.threshold.state_index != 1:
        raise ConfigError("expected a depth model (state 0) and a water "
                          "equivalent model (state 1)")
    be = _resolve_backend(backend)
    gi = model_z.threshold.gate_index
    dt = model_z.dt
    if be == "numba":
        from .kernels import simulate_coupled as kernel

        wz = pack_net(model_z)
        ws = pack_net(model_swe)
        z_hat, s_hat, Ks, reset, clamp_z, clamp_s = kernel(
            series.t, series.X, series.z_obs, series.swe_obs, *wz, *ws,
            model_z.scale_x, model_z.scale_y, model_swe.scale_y, dt, gi, k_max)
        return SimulationResult(site=series.site, t=series.t, state=z_hat,
                                K=Ks, reset=reset, clamp=clamp_z, swe=s_hat,
                                clamp_swe=clamp_s)
    m = series.t.size
    z_hat = np.empty(m)
    s_hat = np.empty(m)
    Ks = np.zeros(m - 1, np.int64)
    reset = np.zeros(m - 1, bool)
    clamp_z = np.zeros(m - 1, bool)
    clamp_s = np.zeros(m - 1, bool)
    z = series.z_obs[0]
    s = series.swe_obs[0]
    z_hat[0] = z
    s_hat[0] = s
    for i in range(m - 1):
        K = int(series.t[i + 1] - series.t[i])
        Ks[i] = K
        if K > k_max:
            z = series.z_obs[i + 1]
            s = series.swe_obs[i + 1]
            reset[i] = True
            z_hat[i + 1] = z
            s_hat[i + 1] = s
            continue
        row = series.X[i].copy()
        row[0] = z
        row[1] = s
        kdt = np.float64(K) * dt
        rate_s = model_swe.evaluate(row)
        sn = s + kdt * rate_s
        if sn < 0.0:
            sn = 0.0
            clamp_s[i] = True
        floor = float(coupled_floor(z, sn, K, dt))
        rate_z = model_z.evaluate(row, floor=floor)
        zn = z + kdt * rate_z
        if zn < 0.0:  # unreachable given the coupled floor; kept as a guard
            zn = 0.0
            clamp_z[i] = True
        z = zn
        s = sn
        z_hat[i + 1] = z
        s_hat[i + 1] = s
    return SimulationResult(site=series.site, t=series.t, state=z_hat, K=Ks,
                            reset=reset, clamp=clamp_z, swe=s_hat,
                            clamp_swe=clamp_s)


# ---------------------------------------------------------------------------
# bulk density
# ---------------------------------------------------------------------------


def derive_density(z, swe) -> np.ndarray:
    """Relative bulk density SWE/z where both are positive, NaN elsewhere."""
    z = np.asarray(z, np.float64)
    swe = np.asarray(swe, np.float64)
    out = np.full(np.broadcast(z, swe).shape, np.nan)
    mask = (z > 0.0) & (swe > 0.0)
    out[mask] = (swe / np.where(z > 0.0, z, 1.0))[mask]
    return out


@dataclass
class DensityReport:
    """Density comparison between a coupled simulation and observations.

    A point is scored only when model and data both carry a pack (z > 0) and
    both density ratios are physical (inside the open interval (0, 1)).
    Everything else lands in one of the tallies.
    """

    rho_model: np.ndarray
    rho_obs: np.ndarray
    scored: np.ndarray
    false_snowpack: int        # model pack where the data has none
    false_non_snowpack: int    # model bare ground where the data has a pack
    unphysical: int            # pack on both sides but a ratio outside (0, 1)
    metrics: object = field(default=None)


def density_report(z_hat, swe_hat, z_obs, swe_obs) -> DensityReport:
    from .metrics import compute_metrics

    z_hat = np.asarray(z_hat, np.float64)
    swe_hat = np.asarray(swe_hat, np.float64)
    z_obs = np.asarray(z_obs, np.float64)
    swe_obs = np.asarray(swe_obs, np.float64)
    false_snow = int(np.sum((z_hat > 0.0) & (z_obs == 0.0)))
    false_bare = int(np.sum((z_hat == 0.0) & (z_obs > 0.0)))
    both = (z_hat > 0.0) & (z_obs > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho_model = np.where(z_hat > 0.0, swe_hat / np.where(z_hat > 0, z_hat, 1.0),
                             np.nan)
        rho_obs = np.where(z_obs > 0.0, swe_obs / np.where(z_obs > 0, z_obs, 1.0),
                           np.nan)
    physical = ((rho_model > 0.0) & (rho_model < 1.0) &
                (rho_obs > 0.0) & (rho_obs < 1.0))
    scored = both & physical
    unphysical = int(np.sum(both & ~physical))
    mets = compute_metrics(rho_obs[scored], rho_model[scored]) if scored.any() \
        else None
    return DensityReport(rho_model=rho_model, rho_obs=rho_obs, scored=scored,
                         false_snowpack=false_snow,
                         false_non_snowpack=false_bare,
                         unphysical=unphysical, metrics=mets)
