"""Station data pipeline: raw CSV to model-ready daily records.

Stages, in order:

1. parse_station_csv: schema-checked load, SI conversion, physical bounds,
   per-row rejection accounting.
2. clean_hourly: wind envelope flags, depth consistency flags, short-gap
   filling of the meteorological columns.
3. rollup_daily: hourly to daily (three 8-hour bins, mean of bin means, a
   day is missing if any bin is empty; states take the first reading).
4. coalesce_daily: merge native-daily and hourly-derived columns with
   per-column source preferences (site overrides supported).
5. clean_site: the full per-station chain, including the annual solar
   filter, optional external hook corrections, daily consistency excision,
   3-day gap interpolation, the snow/rain split of accumulated
   precipitation, and target construction.
6. engineer_features: windowed training records.

All lengths are meters, temperatures C, humidity a 0..1 fraction, wind m/s,
solar W/m2.  Precipitation columns are per native step (m/day for daily
data); tendency targets are m/s.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import qc
from .errors import ConfigError, DataError

DAY_SECONDS = 86400.0
INCH = 0.0254

FEATURES = ("z", "swe", "rh", "solar", "wind", "t_air", "p_snow")
STATE_COLUMNS = ("z", "swe", "ap")
MET_COLUMNS = ("t_air", "rh", "solar", "wind")

# source column -> (canonical name, converter id)
DEFAULT_SCHEMA = {
    "timestamp": ("timestamp", "none"),
    "snow_depth_in": ("z", "inch_to_m"),
    "swe_in": ("swe", "inch_to_m"),
    "accum_precip_in": ("ap", "inch_to_m"),
    "t_air_c": ("t_air", "none"),
    "rh_pct": ("rh", "pct_to_frac"),
    "solar_wm2": ("solar", "none"),
    "wind_ms": ("wind", "none"),
}

CONVERTERS = {
    "none": lambda v: v,
    "inch_to_m": lambda v: v * INCH,
    "pct_to_frac": lambda v: v / 100.0,
}

# physical plausibility bounds in SI, applied value-wise after conversion
DEFAULT_BOUNDS = {
    "z": (0.0, 175 * INCH),
    "swe": (0.0, 5.0),
    "ap": (0.0, 50.0),
    "t_air": (-60.0, 60.0),
    "rh": (0.0, 1.0),
    "solar": (0.0, 1500.0),
    "wind": (0.0, 100.0),
}

# stations whose daily temperature record is the unreliable one
SITE_OVERRIDES: dict[str, dict] = {
    "1122": {"prefer_hourly": ("t_air",)},
}

# hook points for external corrections applied to the coalesced daily frame;
# each is a callable df -> df
HOOK_NAMES = ("swe_qc", "undercatch", "temp_correction")


def parse_station_csv(path, schema: dict | None = None,
                      bounds: dict | None = None,
                      max_reject: float = 0.5) -> tuple[pd.DataFrame, dict]:
    """Load one station file into an SI frame indexed by timestamp.

    Columns outside the schema raise; unparseable timestamps reject the row;
    unparseable or out-of-bounds values become missing and are counted.  If
    more than max_reject of rows are rejected the file is refused.
    """
    schema = DEFAULT_SCHEMA if schema is None else schema
    bounds = DEFAULT_BOUNDS if bounds is None else bounds
    raw = pd.read_csv(path, dtype=str, skipinitialspace=True)
    unknown = [c for c in raw.columns if c not in schema]
    if unknown:
        raise ConfigError(f"unknown columns {unknown}; schema allows "
                          f"{sorted(schema)}")
    if "timestamp" not in raw.columns:
        raise ConfigError("file has no timestamp column")
    n_rows = len(raw)
    stamps = pd.to_datetime(raw["timestamp"], errors="coerce", format="mixed")
    keep = stamps.notna()
    report = {"n_rows": n_rows, "rejected_rows": int((~keep).sum()),
              "cell_rejections": {}, "bound_rejections": {},
              "duplicate_timestamps": 0}
    if n_rows and report["rejected_rows"] / n_rows > max_reject:
        raise DataError(
            f"{report['rejected_rows']} of {n_rows} rows rejected, above the "
            f"{max_reject:.0%} limit")
    out = pd.DataFrame(index=pd.DatetimeIndex(stamps[keep], name="timestamp"))
    for src, (dst, conv) in schema.items():
        if src == "timestamp" or src not in raw.columns:
            continue
        col = raw.loc[keep, src]
        vals = pd.to_numeric(col, errors="coerce")
        bad_cells = int((vals.isna() & col.notna() & (col.str.strip() != ""))
                        .sum())
        if bad_cells:
            report["cell_rejections"][dst] = bad_cells
        converted = CONVERTERS[conv](vals.astype(np.float64))
        if dst in bounds:
            lo, hi = bounds[dst]
            outside = converted.notna() & ((converted < lo) | (converted > hi))
            if outside.any():
                report["bound_rejections"][dst] = int(outside.sum())
                converted = converted.mask(outside)
        out[dst] = converted.to_numpy()
    dup = out.index.duplicated(keep="first")
    report["duplicate_timestamps"] = int(dup.sum())
    out = out[~dup].sort_index()
    return out, report


# ---------------------------------------------------------------------------
# hourly cleaning and rollup
# ---------------------------------------------------------------------------


def clean_hourly(df: pd.DataFrame) -> tuple[pd.DataFrame, dict]:
    """Apply the hourly QC rules; flagged values become missing, and short
    gaps in the meteorological columns are filled."""
    df = df.copy()
    t = df.index.to_numpy()
    audit: dict = {}
    if "wind" in df.columns:
        flags, info = qc.flag_wind(df["wind"].to_numpy(np.float64), t)
        audit["wind"] = info
        df.loc[flags, "wind"] = np.nan
    if "z" in df.columns:
        swe = df["swe"].to_numpy(np.float64) if "swe" in df.columns else \
            np.full(len(df), np.nan)
        flags, trace = qc.flag_depth(df["z"].to_numpy(np.float64), swe, t)
        audit["depth"] = {
            "spike": len(trace.spike), "rut": len(trace.rut),
            "melt_window": len(trace.melt_window), "ratio": len(trace.ratio),
            "iterations": trace.iterations,
        }
        df.loc[flags, "z"] = np.nan
    fills = {}
    for col in MET_COLUMNS:
        if col in df.columns:
            filled, log = qc.fill_gaps(df[col].to_numpy(np.float64), t)
            df[col] = filled
            fills[col] = log
    audit["fill"] = fills
    return df, audit


def rollup_daily(df: pd.DataFrame) -> pd.DataFrame:
    """Hourly frame to one row per day.

    Meteorological columns average as mean of three 8-hour bin means and are
    missing whenever a bin is empty, so a day cannot be carried by one busy
    stretch.  State columns take the first reading of the day.
    """
    day = df.index.floor("D")
    bin8 = df.index.hour // 8
    out = {}
    for col in df.columns:
        if col in MET_COLUMNS:
            bins = df[col].groupby([day, bin8]).mean()
            full = bins.unstack()
            for b in range(3):
                if b not in full.columns:
                    full[b] = np.nan
            out[col] = full[[0, 1, 2]].mean(axis=1, skipna=False)
        else:
            out[col] = df[col].groupby(day).first()
    res = pd.DataFrame(out)
    res.index.name = "date"
    return res


# ---------------------------------------------------------------------------
# source merging
# ---------------------------------------------------------------------------


def coalesce_daily(daily: pd.DataFrame | None, from_hourly: pd.DataFrame | None,
                   site: str | None = None,
                   overrides: dict | None = None
                   ) -> tuple[pd.DataFrame, dict]:
    """Merge native-daily and hourly-derived columns.

    Slow-response daily instruments win for the states and air temperature;
    the hourly-derived values win for humidity, solar and wind.  Site
    overrides (or an explicit overrides dict with a prefer_hourly tuple) can
    flip columns to the hourly side.
    """
    if daily is None and from_hourly is None:
        raise ConfigError("nothing to coalesce")
    if overrides is None:
        overrides = SITE_OVERRIDES.get(str(site), {})
    prefer_hourly = set(("rh", "solar", "wind")) | set(
        overrides.get("prefer_hourly", ()))
    frames = [f for f in (daily, from_hourly) if f is not None]
    index = frames[0].index
    for f in frames[1:]:
        index = index.union(f.index)
    cols = sorted({c for f in frames for c in f.columns})
    out = pd.DataFrame(index=index)
    chosen = {}
    for col in cols:
        a = daily[col] if daily is not None and col in daily.columns else None
        b = from_hourly[col] if from_hourly is not None and \
            col in from_hourly.columns else None
        first, second = (b, a) if col in prefer_hourly else (a, b)
        if first is None:
            merged, src = second, "single"
        elif second is None:
            merged, src = first, "single"
        else:
            merged = first.reindex(index).combine_first(second.reindex(index))
            src = "hourly+daily" if col in prefer_hourly else "daily+hourly"
        out[col] = merged.reindex(index)
        chosen[col] = src
    out.index.name = "date"
    return out, {"sources": chosen, "prefer_hourly": sorted(prefer_hourly)}


# ---------------------------------------------------------------------------
# daily finishing
# ---------------------------------------------------------------------------


def _daily_ratio_excise(df: pd.DataFrame) -> int:
    """Drop depths inconsistent with water equivalent on the daily frame."""
    if "z" not in df.columns or "swe" not in df.columns:
        return 0
    z = df["z"]
    swe = df["swe"]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = z / swe
    bad = (z > 0) & (swe.isna() | (swe == 0) | (ratio < 1.0) | (ratio > 50.0))
    df.loc[bad, "z"] = np.nan
    return int(bad.sum())


def finalize_daily(df: pd.DataFrame, interp_limit_days: int = 3
                   ) -> tuple[pd.DataFrame, dict]:
    """Consistency excision, short-gap interpolation, precipitation split and
    tendency targets.

    The precipitation of day i is the accumulated-gauge increase to day i+1,
    zeroed when the gauge resets at the water year; it is split into snowfall
    and rain with the logistic fraction of that day's temperature and
    humidity.  Targets are one-step tendencies in m/s, defined only when the
    next calendar day is present.
    """
    df = df.sort_index().copy()
    audit: dict = {"ratio_excised": _daily_ratio_excise(df)}
    df = df.resample("D").asfreq()
    n_before = int(df.notna().sum().sum())
    filled = df.interpolate(method="linear", limit_area="inside")
    for col in df.columns:
        # only whole gaps up to the limit count; longer holes stay holes
        # (a plain interpolate limit would fill their leading days)
        for a, b in qc._valid_runs(df[col].isna().to_numpy()):
            if b - a > interp_limit_days:
                filled.iloc[a:b, filled.columns.get_loc(col)] = np.nan
    df = filled
    audit["interpolated_values"] = int(df.notna().sum().sum()) - n_before
    if "ap" in df.columns:
        dap = df["ap"].shift(-1) - df["ap"]
        audit["water_year_resets"] = int((dap < 0).sum())
        p_tot = dap.clip(lower=0.0)
    else:
        audit["water_year_resets"] = 0
        p_tot = pd.Series(0.0, index=df.index)
    frac = qc.snow_fraction(df.get("t_air", pd.Series(np.nan, index=df.index)),
                            df.get("rh", pd.Series(np.nan, index=df.index)))
    df["p_snow"] = p_tot * frac
    df["p_rain"] = p_tot * (1.0 - frac)
    for state, target in (("z", "dz_dt"), ("swe", "dswe_dt")):
        if state in df.columns:
            step = df[state].shift(-1) - df[state]
            df[target] = step / DAY_SECONDS
    have = [c for c in FEATURES if c in df.columns]
    complete = df[have].notna().all(axis=1)
    audit["rows_complete"] = int(complete.sum())
    audit["rows_dropped"] = int((~complete).sum())
    out = df[complete].copy()
    out.index.name = "date"
    return out, audit


def clean_site(site: str, hourly: pd.DataFrame | None = None,
               daily: pd.DataFrame | None = None,
               overrides: dict | None = None,
               hooks: dict | None = None) -> tuple[pd.DataFrame, dict]:
    """Full per-station chain from parsed SI frames to the processed daily
    table.  hooks maps any of swe_qc / undercatch / temp_correction to a
    df -> df callable; absent hooks are skipped."""
    if hourly is None and daily is None:
        raise ConfigError("need at least one of hourly or daily data")
    audit: dict = {"site": site}
    from_hourly = None
    if hourly is not None:
        cleaned, haudit = clean_hourly(hourly)
        audit["hourly"] = haudit
        from_hourly = rollup_daily(cleaned)
    merged, caudit = coalesce_daily(daily, from_hourly, site=site,
                                    overrides=overrides)
    audit["coalesce"] = caudit
    if "solar" in merged.columns:
        keep, sinfo = qc.solar_annual_keep(merged["solar"].to_numpy(np.float64),
                                           merged.index.to_numpy())
        audit["solar"] = sinfo
        merged.loc[~keep, "solar"] = np.nan
    if hooks:
        unknown = set(hooks) - set(HOOK_NAMES)
        if unknown:
            raise ConfigError(f"unknown hooks {sorted(unknown)}")
        for name in HOOK_NAMES:
            if name in hooks:
                merged = hooks[name](merged)
    processed, faudit = finalize_daily(merged)
    audit["finalize"] = faudit
    return processed, audit


# ---------------------------------------------------------------------------
# training records
# ---------------------------------------------------------------------------


@dataclass
class EngineeredData:
    """Raw (unscaled) training records: state at window start, forcing means
    over the window, mean tendency as target."""

    X: np.ndarray
    y: np.ndarray
    site: np.ndarray
    feature_names: tuple[str, ...]
    n_window: int


def engineer_features(tables, N: int = 1, target: str = "z",
                      drop_uninformative: bool = True) -> EngineeredData:
    """Build N-day windowed records from processed daily tables.

    tables is a {site: frame} mapping (or a single frame, treated as one
    unnamed site).  A record starts at day i when days i..i+N are present
    with complete features: the states keep their day-i values, the
    meteorological features average over days i..i+N-1, and the target is
    the mean tendency (state(i+N) - state(i)) / (N * 86400) in m/s.

    With drop_uninformative, rows with no pack at all (z = 0 and SWE = 0)
    and rows with depth but no water record (SWE = 0, z > 0) are dropped so
    training concentrates on active snowpack.
    """
    if N < 1:
        raise ConfigError("N must be >= 1")
    if target not in ("z", "swe"):
        raise ConfigError("target must be 'z' or 'swe'")
    if not isinstance(tables, dict):
        tables = {"site": tables}
    xs, ys, sites = [], [], []
    state_col = "z" if target == "z" else "swe"
    for site, df in tables.items():
        df = df.sort_index()
        need = [c for c in FEATURES if c != "p_snow"] + ["p_snow"]
        missing = [c for c in need if c not in df.columns]
        if missing:
            raise DataError(f"site {site} is missing columns {missing}")
        day = ((df.index - df.index[0]) / pd.Timedelta(days=1)
               ).to_numpy().round().astype(np.int64)
        F = df[list(FEATURES)].to_numpy(np.float64)
        state = df[state_col].to_numpy(np.float64)
        m = len(df)
        for i in range(m - N):
            if day[i + N] - day[i] != N:
                continue
            window = F[i:i + N]
            if not np.all(np.isfinite(window)):
                continue
            row = window.mean(axis=0)
            row[0] = F[i, 0]
            row[1] = F[i, 1]
            y = (state[i + N] - state[i]) / (N * DAY_SECONDS)
            if not np.isfinite(y):
                continue
            if drop_uninformative:
                if row[0] == 0.0 and row[1] == 0.0:
                    continue
                if row[1] == 0.0 and row[0] > 0.0:
                    continue
            xs.append(row)
            ys.append(y)
            sites.append(site)
    if not xs:
        raise DataError("no usable training records")
    return EngineeredData(X=np.asarray(xs), y=np.asarray(ys),
                          site=np.asarray(sites, dtype=object),
                          feature_names=FEATURES, n_window=N)


def write_processed(df: pd.DataFrame, path) -> None:
    df.to_csv(path, index_label="date")


def read_processed(path) -> pd.DataFrame:
    df = pd.read_csv(path, parse_dates=["date"], index_col="date")
    return df
