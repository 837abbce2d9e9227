"""Array-level quality-control rules for hourly station data.

Each rule takes plain numpy arrays and returns flag masks plus a small trace
of what fired where, so the rules stay unit-testable without any pandas
plumbing.  The station-level orchestration lives in pipeline.py.

Values are SI throughout (meters, m/s, degrees C, W/m2, fractional
humidity); timestamps are numpy datetime64.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

HOUR = np.timedelta64(1, "h")

# depth jump threshold: 20 in expressed in meters
DEPTH_JUMP_M = 0.508

# snowfall-vs-rain partition constants (logistic in air temperature and
# relative humidity)
FRAC_ALPHA = -10.04
FRAC_BETA = 1.41
FRAC_GAMMA = 9.0


def snow_fraction(t_air, rh) -> np.ndarray:
    """Fraction of precipitation falling as snow, in [0, 1].

    Logistic in air temperature (C) and relative humidity (0..1): cold and
    humid gives ~1, warm gives ~0.
    """
    x = FRAC_ALPHA + FRAC_BETA * np.asarray(t_air, np.float64) \
        + FRAC_GAMMA * np.asarray(rh, np.float64)
    return 1.0 / (1.0 + np.exp(np.clip(x, -700.0, 700.0)))


def _seconds(t) -> np.ndarray:
    return np.asarray(t, "datetime64[s]").astype(np.int64)


def _valid_runs(mask: np.ndarray):
    """Start/stop pairs (half-open) of True runs in a boolean mask."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    splits = np.flatnonzero(np.diff(idx) > 1) + 1
    return [(g[0], g[-1] + 1) for g in np.split(idx, splits)]


# ---------------------------------------------------------------------------
# wind
# ---------------------------------------------------------------------------


def flag_wind(values, t, score_limit: float = 6.0, grow_trigger: int = 24,
              grow_step_h: float = 72.0, block_limit: float = 0.05
              ) -> tuple[np.ndarray, dict]:
    """Flag implausible wind spikes against the weekly-maximum envelope.

    Weekly maxima (7-day blocks from the first timestamp) give a robust
    median/IQR scale; any observation scoring above score_limit is flagged.
    If more than grow_trigger values get flagged, contiguous flagged blocks
    are grown in 72-hour steps for as long as the growth captures additional
    flagged values, and any grown block containing more than block_limit
    flagged values is flagged wholesale.
    """
    v = np.asarray(values, np.float64)
    ts = _seconds(t)
    flags = np.zeros(v.size, dtype=bool)
    info = {"skipped": None, "n_weeks": 0, "median": None, "iqr": None,
            "n_initial": 0, "n_blocks": 0, "n_final": 0}
    if v.size == 0 or ts[-1] - ts[0] < 14 * 86400:
        info["skipped"] = "series shorter than two weeks"
        return flags, info
    week = (ts - ts[0]) // (7 * 86400)
    maxima = []
    for w in np.unique(week):
        sel = (week == w) & np.isfinite(v)
        if sel.any():
            maxima.append(v[sel].max())
    maxima = np.asarray(maxima)
    info["n_weeks"] = maxima.size
    if maxima.size < 2:
        info["skipped"] = "fewer than two weekly maxima"
        return flags, info
    med = float(np.median(maxima))
    iqr = float(np.quantile(maxima, 0.75) - np.quantile(maxima, 0.25))
    info["median"], info["iqr"] = med, iqr
    if iqr == 0.0:
        info["skipped"] = "degenerate weekly-maximum spread"
        return flags, info
    with np.errstate(invalid="ignore"):
        flags = (v - med) / iqr > score_limit
    flags &= np.isfinite(v)
    info["n_initial"] = int(flags.sum())
    if info["n_initial"] > grow_trigger:
        step = int(grow_step_h * 3600)
        windows = [[ts[a], ts[b - 1]] for a, b in _valid_runs(flags)]
        while True:
            grown = _merge_windows([[a - step, b + step] for a, b in windows])
            if len(grown) == len(windows):
                break  # the step captured no flags from other blocks; undo it
            windows = grown
        info["n_blocks"] = len(windows)
        for a, b in windows:
            inside = (ts >= a) & (ts <= b)
            if inside.any() and flags[inside].mean() > block_limit:
                flags |= inside
    info["n_final"] = int(flags.sum())
    return flags, info


def _merge_windows(windows):
    windows = sorted(windows)
    out = [list(windows[0])]
    for a, b in windows[1:]:
        if a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return out


# ---------------------------------------------------------------------------
# gap filling
# ---------------------------------------------------------------------------


def hourly_profile(values, t, bad=None) -> np.ndarray:
    """Mean value per (biweek of year, hour of day); NaN where never observed.

    26 biweeks cover the year (day-of-year // 14, the leap tail folded into
    the last row).
    """
    v = np.asarray(values, np.float64)
    t64 = np.asarray(t, "datetime64[s]")
    ok = np.isfinite(v)
    if bad is not None:
        ok &= ~np.asarray(bad, bool)
    doy = (t64.astype("datetime64[D]") - t64.astype("datetime64[Y]")
           ).astype(np.int64)
    biweek = np.clip(doy // 14, 0, 25)
    hour = (t64.astype(np.int64) // 3600) % 24
    prof_sum = np.zeros((26, 24))
    prof_n = np.zeros((26, 24))
    np.add.at(prof_sum, (biweek[ok], hour[ok]), v[ok])
    np.add.at(prof_n, (biweek[ok], hour[ok]), 1.0)
    with np.errstate(invalid="ignore"):
        return np.where(prof_n > 0, prof_sum / np.maximum(prof_n, 1.0), np.nan)


def fill_gaps(values, t, bad=None, profile=None, max_linear_h: int = 6,
              max_profile_h: int = 24) -> tuple[np.ndarray, dict]:
    """Fill short gaps in an hourly series.

    Flagged values count as missing.  Runs up to max_linear_h hours long are
    interpolated linearly between their valid neighbors; longer runs up to
    max_profile_h hours are taken from the biweek-by-hour climatology (built
    here if not supplied).  Longer gaps, and profile cells that were never
    observed, stay missing.
    """
    v = np.asarray(values, np.float64).copy()
    t64 = np.asarray(t, "datetime64[s]")
    ts = t64.astype(np.int64)
    missing = ~np.isfinite(v)
    if bad is not None:
        missing |= np.asarray(bad, bool)
        v[np.asarray(bad, bool)] = np.nan
    if profile is None:
        profile = hourly_profile(v, t64)
    doy = (t64.astype("datetime64[D]") - t64.astype("datetime64[Y]")
           ).astype(np.int64)
    biweek = np.clip(doy // 14, 0, 25)
    hour = (ts // 3600) % 24
    log = {"linear": 0, "profile": 0, "unfilled": 0}
    for a, b in _valid_runs(missing):
        has_left = a > 0 and not missing[a - 1]
        has_right = b < v.size and not missing[b]
        if has_left and has_right:
            span_h = (ts[b] - ts[a - 1]) / 3600.0 - 1.0
        else:
            span_h = (ts[b - 1] - ts[a]) / 3600.0 + 1.0
        if span_h <= max_linear_h and has_left and has_right:
            v[a:b] = np.interp(ts[a:b], [ts[a - 1], ts[b]],
                               [v[a - 1], v[b]])
            log["linear"] += b - a
        elif span_h <= max_profile_h:
            cell = profile[biweek[a:b], hour[a:b]]
            fillable = np.isfinite(cell)
            v[a:b][fillable] = cell[fillable]
            log["profile"] += int(fillable.sum())
            log["unfilled"] += int((~fillable).sum())
        else:
            log["unfilled"] += b - a
    return v, log


# ---------------------------------------------------------------------------
# depth
# ---------------------------------------------------------------------------


@dataclass
class DepthTrace:
    """Indices flagged by each depth rule, in firing order."""

    spike: list = field(default_factory=list)
    rut: list = field(default_factory=list)
    melt_window: list = field(default_factory=list)
    ratio: list = field(default_factory=list)
    iterations: int = 0


def flag_depth(z, swe, t, jump: float = DEPTH_JUMP_M, rut_max_obs: int = 20,
               rut_max_gap_days: float = 30.0, ratio_lo: float = 1.0,
               ratio_hi: float = 50.0, max_iter: int = 20
               ) -> tuple[np.ndarray, DepthTrace]:
    """Flag implausible hourly depth observations.

    Four rules run to a joint fixpoint (flagging changes the valid-neighbor
    structure the jump rules see):

    * spike: a jump of at least `jump` immediately undone in the opposite
      direction flags the middle point, in either orientation.
    * rut: a jump up of at least `jump` that then holds (next step smaller
      than `jump` in magnitude) starts an elevated episode; it runs until the
      next big step, inclusive.  Episodes longer than rut_max_obs points, or
      containing a gap to the next valid point beyond rut_max_gap_days, are
      extended until the first zero depth.
    * melt_window: within April through August of each year, once a zero
      depth is seen every later nonzero depth that window is flagged.
    * ratio: a positive depth with missing or zero water equivalent, or a
      depth-to-water ratio below ratio_lo or above ratio_hi, is flagged.
    """
    z = np.asarray(z, np.float64)
    swe = np.asarray(swe, np.float64)
    t64 = np.asarray(t, "datetime64[s]")
    ts = t64.astype(np.int64)
    month = t64.astype("datetime64[M]").astype(np.int64) % 12 + 1
    year = t64.astype("datetime64[Y]").astype(np.int64) + 1970
    flags = np.zeros(z.size, dtype=bool)
    trace = DepthTrace()

    for it in range(max_iter):
        trace.iterations = it + 1
        changed = False
        valid = np.flatnonzero(np.isfinite(z) & ~flags)
        if valid.size >= 3:
            dz = np.diff(z[valid])
            inner = valid[1:-1]
            dm, dp = dz[:-1], dz[1:]
            spikes = inner[((dm >= jump) & (dp <= -jump)) |
                           ((dm <= -jump) & (dp >= jump))]
            changed |= mark_list(flags, trace.spike, spikes)
        valid = np.flatnonzero(np.isfinite(z) & ~flags)
        if valid.size >= 3:
            changed |= _rut_pass(z, ts, valid, flags, trace, jump,
                                 rut_max_obs, rut_max_gap_days)
        valid = np.flatnonzero(np.isfinite(z) & ~flags)
        if valid.size:
            in_window = (month >= 4) & (month <= 8)
            melt_idx = []
            for y in np.unique(year[valid]):
                sel = valid[(year[valid] == y) & in_window[valid]]
                zeros = sel[z[sel] == 0.0]
                if zeros.size:
                    first = zeros[0]
                    melt_idx.extend(sel[(sel > first) & (z[sel] > 0.0)])
            changed |= mark_list(flags, trace.melt_window, melt_idx)
        valid = np.flatnonzero(np.isfinite(z) & ~flags)
        pos = valid[z[valid] > 0.0]
        if pos.size:
            s = swe[pos]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = z[pos] / s
            bad = (~np.isfinite(s)) | (s == 0.0) | (ratio < ratio_lo) | \
                (ratio > ratio_hi)
            changed |= mark_list(flags, trace.ratio, pos[bad])
        if not changed:
            break
    return flags, trace


def _rut_pass(z, ts, valid, flags, trace: DepthTrace, jump: float,
              max_obs: int, max_gap_days: float) -> bool:
    zc = z[valid]
    steps = np.diff(zc)
    changed = False
    i = 1
    while i < valid.size - 1:
        into, out = steps[i - 1], steps[i]
        if into >= jump and abs(out) < jump:
            members = [i]
            j = i
            while j < valid.size - 1 and abs(steps[j]) < jump:
                j += 1
                members.append(j)
            # steps[j-1] was the last small step; if we stopped on a big
            # step the point it lands on terminates the episode, inclusive
            long_gap = any(
                j2 + 1 < valid.size and
                (ts[valid[j2 + 1]] - ts[valid[j2]]) / 86400.0 > max_gap_days
                for j2 in members)
            episode = [valid[m] for m in members]
            if len(members) > max_obs or long_gap:
                start = valid[members[0]]
                later = valid[valid >= start]
                zero_after = later[z[later] == 0.0]
                stop = zero_after[0] if zero_after.size else (valid[-1] + 1)
                episode = [int(ix) for ix in valid
                           if start <= ix < stop and z[ix] > 0.0]
            if mark_list(flags, trace.rut, episode):
                changed = True
            i = j + 1
        else:
            i += 1
    return changed


def mark_list(flags: np.ndarray, rule: list, idx) -> bool:
    fresh = [int(i) for i in idx if not flags[i]]
    for i in fresh:
        flags[i] = True
        rule.append(i)
    return bool(fresh)


# ---------------------------------------------------------------------------
# solar
# ---------------------------------------------------------------------------


def solar_annual_keep(values, t, score_limit: float = 2.0
                      ) -> tuple[np.ndarray, dict]:
    """Excise whole years whose annual solar maximum is an outlier.

    Annual maxima are scored against their own median/IQR; a year scoring
    strictly above score_limit has all its values dropped (sensor drift and
    calibration excursions show up as inflated maxima).
    """
    v = np.asarray(values, np.float64)
    year = np.asarray(t, "datetime64[Y]").astype(np.int64) + 1970
    keep = np.ones(v.size, dtype=bool)
    info = {"skipped": None, "years_dropped": []}
    years = np.unique(year)
    maxima = {}
    for y in years:
        sel = (year == y) & np.isfinite(v)
        if sel.any():
            maxima[y] = v[sel].max()
    if len(maxima) < 2:
        info["skipped"] = "fewer than two annual maxima"
        return keep, info
    arr = np.asarray(list(maxima.values()))
    med = float(np.median(arr))
    iqr = float(np.quantile(arr, 0.75) - np.quantile(arr, 0.25))
    if iqr == 0.0:
        info["skipped"] = "degenerate annual-maximum spread"
        return keep, info
    for y, mx in maxima.items():
        if (mx - med) / iqr > score_limit:
            keep &= ~(year == y)
            info["years_dropped"].append(int(y))
    return keep, info
