"""Synthetic station data with snow-like dynamics.

The generator exists for tests and examples: it produces either processed
daily tables (the pipeline's output format) or raw hourly/daily station
frames with injected sensor defects (the pipeline's input).  Its dynamics
are deliberately inside the model class: depth grows only through snowfall
(density of fresh snow set by air temperature), shrinks through temperature
and radiation driven melt plus gradual settling, never goes negative, and
never drops below the water equivalent.  A trained network can therefore
reproduce it well, which the end-to-end tests rely on.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .qc import snow_fraction

DAY_SECONDS = 86400.0
INCH = 0.0254


@dataclass
class SiteParams:
    t_base: float = 2.0        # annual mean air temperature, C
    t_amp: float = 12.0        # seasonal amplitude, C
    precip_scale: float = 1.0  # multiplies event sizes
    wet_prob: float = 0.35     # chance of a precipitation day
    noise: float = 1.0         # multiplies all stochastic terms


def _weather(rng: np.random.Generator, n_steps: int, start: pd.Timestamp,
             freq: str, p: SiteParams):
    idx = pd.date_range(start, periods=n_steps, freq=freq)
    doy = idx.dayofyear.to_numpy()
    season = np.cos(2.0 * np.pi * (doy - 20) / 365.0)
    step_days = 1.0 if freq == "D" else 1.0 / 24.0
    t_air = p.t_base - p.t_amp * season + \
        rng.normal(0.0, 2.2 * p.noise, n_steps)
    if freq == "h":
        hour = idx.hour.to_numpy()
        t_air += 3.0 * np.sin(2.0 * np.pi * (hour - 9) / 24.0)
    solar = 180.0 - 130.0 * np.cos(2.0 * np.pi * (doy + 10) / 365.0) + \
        rng.normal(0.0, 15.0 * p.noise, n_steps)
    solar = np.clip(solar, 5.0, None)
    if freq == "h":
        hour = idx.hour.to_numpy()
        solar = solar * np.clip(np.sin(np.pi * (hour - 6) / 12.0), 0.02, None)
    wet = rng.random(n_steps) < p.wet_prob * (step_days ** 0.35)
    p_tot = wet * rng.exponential(0.004 * p.precip_scale * step_days, n_steps)
    rh = np.clip(0.55 + 0.3 * wet + rng.normal(0.0, 0.08 * p.noise, n_steps),
                 0.05, 1.0)
    wind = np.clip(rng.gamma(2.0, 1.6, n_steps), 0.0, 25.0)
    return idx, t_air, solar, rh, wind, p_tot, step_days


def _dynamics(rng: np.random.Generator, t_air, solar, p_snow, step_days,
              noise: float):
    """March depth and water equivalent forward one site."""
    n = t_air.size
    z = np.zeros(n + 1)
    swe = np.zeros(n + 1)
    rho_fresh = np.clip(90.0 + 4.0 * t_air, 70.0, 250.0)
    eta = 1000.0 / rho_fresh
    warm = t_air > 0.0
    melt_z = (0.0045 * np.maximum(t_air, 0.0) +
              2.0e-5 * np.maximum(solar - 80.0, 0.0) * warm) * step_days
    melt_s = (0.0028 * np.maximum(t_air, 0.0) +
              1.2e-5 * np.maximum(solar - 80.0, 0.0) * warm) * step_days
    eps = rng.normal(0.0, 0.0012 * noise * step_days, n)
    for i in range(n):
        growth = eta[i] * p_snow[i]
        settle = 0.012 * z[i] * step_days
        zn = z[i] + growth - melt_z[i] - settle
        if z[i] > 0.0 or growth > 0.0:
            zn += eps[i]
        sn = swe[i] + p_snow[i] - melt_s[i]
        sn = max(sn, 0.0)
        zn = max(zn, 0.0)
        if sn == 0.0:
            zn = 0.0
        elif zn < sn:
            zn = sn
        z[i + 1] = zn
        swe[i + 1] = sn
    return z, swe


def generate_site(seed: int = 0, n_days: int = 730, start: str = "2001-10-01",
                  freq: str = "D", params: SiteParams | None = None,
                  with_ap: bool = False) -> pd.DataFrame:
    """One station's processed-format table (complete daily or hourly rows).

    Columns match the pipeline output: the seven model features plus rain,
    the tendency targets in m/s, and optionally the accumulated
    precipitation gauge.
    """
    p = params or SiteParams()
    rng = np.random.default_rng(seed)
    n_steps = n_days if freq == "D" else n_days * 24
    idx, t_air, solar, rh, wind, p_tot, step_days = _weather(
        rng, n_steps + 1, pd.Timestamp(start), freq, p)
    frac = snow_fraction(t_air, rh)
    p_snow = p_tot * frac
    z, swe = _dynamics(rng, t_air, solar, p_snow, step_days, p.noise)
    step_seconds = step_days * DAY_SECONDS
    df = pd.DataFrame({
        "z": z[:-1],
        "swe": swe[:-1],
        "rh": rh,
        "solar": solar,
        "wind": wind,
        "t_air": t_air,
        "p_snow": p_snow,
        "p_rain": p_tot * (1.0 - frac),
        "dz_dt": np.diff(z) / step_seconds,
        "dswe_dt": np.diff(swe) / step_seconds,
    }, index=pd.DatetimeIndex(idx, name="date"))
    df = df.iloc[:n_steps]
    if with_ap:
        df["ap"] = np.cumsum(p_tot)[:n_steps] + 0.1
    return df


def generate_corpus(n_sites: int = 5, seed: int = 0, n_days: int = 730
                    ) -> dict[str, pd.DataFrame]:
    """Several stations with varied climates, keyed s01, s02, ..."""
    rng = np.random.default_rng(seed)
    out = {}
    for i in range(n_sites):
        params = SiteParams(
            t_base=float(rng.uniform(0.0, 4.0)),
            t_amp=float(rng.uniform(10.0, 14.0)),
            precip_scale=float(rng.uniform(0.8, 1.3)),
            wet_prob=float(rng.uniform(0.28, 0.42)),
        )
        out[f"s{i + 1:02d}"] = generate_site(seed=seed + 101 * (i + 1),
                                             n_days=n_days, params=params)
    return out


# ---------------------------------------------------------------------------
# raw station frames with defects
# ---------------------------------------------------------------------------


def make_raw_station(seed: int = 0, n_days: int = 730
                     ) -> tuple[pd.DataFrame, pd.DataFrame, dict]:
    """Hourly and daily raw frames in source units, plus a note of every
    injected defect (index positions refer to the hourly frame)."""
    rng = np.random.default_rng(seed)
    truth = generate_site(seed=seed, n_days=n_days, freq="h", with_ap=True)
    notes: dict = {}
    hr = pd.DataFrame({
        "snow_depth_in": truth["z"] / INCH,
        "swe_in": truth["swe"] / INCH,
        "accum_precip_in": truth["ap"] / INCH,
        "t_air_c": truth["t_air"],
        "rh_pct": truth["rh"] * 100.0,
        "solar_wm2": truth["solar"],
        "wind_ms": truth["wind"],
    }, index=truth.index)
    n = len(hr)

    spike_at = n // 3
    hr.iloc[spike_at, hr.columns.get_loc("snow_depth_in")] += 25.0
    notes["depth_spike"] = spike_at

    rut_at = n // 3 + 400
    for j in range(10):
        hr.iloc[rut_at + j, hr.columns.get_loc("snow_depth_in")] += 22.0
    notes["rut"] = (rut_at, rut_at + 10)

    wind_fail = slice(n // 2, n // 2 + 240)
    hr.iloc[wind_fail, hr.columns.get_loc("wind_ms")] = \
        45.0 + rng.normal(0.0, 2.0, 240)
    notes["wind_failure"] = (wind_fail.start, wind_fail.stop)

    gaps = {}
    for name, (at, length) in {"short": (n // 4, 3), "medium": (n // 4 + 200, 12),
                               "long": (n // 4 + 600, 48)}.items():
        hr.iloc[at:at + length, hr.columns.get_loc("t_air_c")] = np.nan
        gaps[name] = (at, at + length)
    notes["t_air_gaps"] = gaps

    bad_temp_at = n // 5
    hr.iloc[bad_temp_at, hr.columns.get_loc("t_air_c")] = -275.0
    notes["impossible_temp"] = bad_temp_at

    summer = np.flatnonzero(
        (truth.index.month == 7) & (truth["z"].to_numpy() == 0.0))
    if summer.size:
        blip = int(summer[summer.size // 2])
        hr.iloc[blip, hr.columns.get_loc("snow_depth_in")] = 8.0
        notes["summer_blip"] = blip

    day = hr.index.floor("D")
    daily = pd.DataFrame({
        "snow_depth_in": hr["snow_depth_in"].groupby(day).first(),
        "swe_in": hr["swe_in"].groupby(day).first(),
        "accum_precip_in": hr["accum_precip_in"].groupby(day).first(),
        "t_air_c": hr["t_air_c"].groupby(day).mean() +
        rng.normal(0.0, 0.2, day.nunique()),
    })
    daily.index.name = None
    hr.index.name = None
    return hr, daily, notes
