"""Quality-control rules on constructed hourly fixtures with known answers."""

import math

import numpy as np
import pytest

from snowpar.qc import (DEPTH_JUMP_M, _valid_runs, fill_gaps, flag_depth,
                        flag_wind, hourly_profile, snow_fraction,
                        solar_annual_keep)


def _hours(n, start="2001-01-01T00"):
    return np.datetime64(start) + np.arange(n).astype("timedelta64[h]")


def test_snow_fraction_limits():
    assert snow_fraction(-10.0, 0.8) > 0.9999
    assert snow_fraction(20.0, 0.5) < 1e-9
    # hand value at T = 0, rh = 0.5
    x = -10.04 + 1.41 * 0.0 + 9.0 * 0.5
    assert snow_fraction(0.0, 0.5) == pytest.approx(1.0 / (1.0 + math.exp(x)))
    # extreme arguments clip instead of overflowing
    with np.errstate(over="raise"):
        assert snow_fraction(1e5, 0.0) < 1e-300
        assert snow_fraction(-1e5, 1.0) == 1.0


def test_valid_runs():
    mask = np.array([False, True, True, False, True])
    assert _valid_runs(mask) == [(1, 3), (4, 5)]
    assert _valid_runs(np.zeros(4, bool)) == []
    assert _valid_runs(np.ones(3, bool)) == [(0, 3)]


# ---------------------------------------------------------------------------
# wind
# ---------------------------------------------------------------------------


def _wind_series(n=5040, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 10.0, n), _hours(n)


def test_wind_isolated_spikes():
    v, t = _wind_series()
    v[[500, 1500, 2500]] = 45.0
    flags, info = flag_wind(v, t)
    assert sorted(np.flatnonzero(flags)) == [500, 1500, 2500]
    assert info["n_initial"] == 3 and info["n_final"] == 3
    assert info["n_blocks"] == 0      # too few flags to trigger block growth


def test_wind_dense_failure_flags_whole_block():
    v, t = _wind_series()
    spikes = 2000 + 8 * np.arange(30)      # stuck sensor: spike every 8 h
    v[spikes] = 45.0
    flags, info = flag_wind(v, t)
    assert info["n_initial"] == 31 - 1     # 30 planted values
    assert info["n_blocks"] == 1
    idx = np.flatnonzero(flags)
    # one grown 72 h block around the cluster, flagged wholesale
    assert idx[0] == 2000 - 72 and idx[-1] == 2232 + 72
    assert np.all(np.diff(idx) == 1)
    assert info["n_final"] == idx.size == 377


def test_wind_sparse_blocks_stay_pointwise():
    # more than 24 flags, but spread so far apart no block merges and every
    # single-point block is already 100 percent flagged
    v, t = _wind_series(n=30000, seed=1)
    spikes = 1000 + 1000 * np.arange(26)
    v[spikes] = 50.0
    flags, info = flag_wind(v, t)
    assert np.array_equal(np.flatnonzero(flags), spikes)
    assert info["n_blocks"] == 26


def test_wind_short_series_skipped():
    v, t = _wind_series(n=200)
    flags, info = flag_wind(v, t)
    assert not flags.any()
    assert "shorter" in info["skipped"]


def test_wind_degenerate_spread_skipped():
    n = 5040
    flags, info = flag_wind(np.full(n, 5.0), _hours(n))
    assert not flags.any()
    assert "degenerate" in info["skipped"]


def test_wind_ignores_nan():
    v, t = _wind_series()
    v[100:200] = np.nan
    v[3000] = 45.0
    flags, info = flag_wind(v, t)
    assert not flags[100:200].any()
    assert flags[3000]


# ---------------------------------------------------------------------------
# profile fill
# ---------------------------------------------------------------------------


def test_hourly_profile_cells():
    t = np.array(["2001-01-01T00", "2001-01-02T00", "2001-01-03T05",
                  "2001-07-01T00"], dtype="datetime64[s]")
    v = np.array([2.0, 4.0, 7.0, 9.0])
    prof = hourly_profile(v, t)
    assert prof.shape == (26, 24)
    assert prof[0, 0] == 3.0          # mean of the two biweek-0 midnights
    assert prof[0, 5] == 7.0
    doy_jul = (np.datetime64("2001-07-01") - np.datetime64("2001-01-01")
               ).astype(int)
    assert prof[doy_jul // 14, 0] == 9.0
    assert np.isnan(prof[10, 12])     # never observed


def test_fill_linear_short_gap():
    n = 72
    t = _hours(n)
    v = np.arange(n, dtype=float)
    v[10:13] = np.nan                  # 3 h gap, both neighbors present
    out, log = fill_gaps(v, t)
    assert np.allclose(out, np.arange(n))
    assert log == {"linear": 3, "profile": 0, "unfilled": 0}


def test_fill_profile_medium_gap():
    n = 24 * 6
    t = _hours(n)
    v = (np.arange(n) % 24).astype(float)        # pure diurnal cycle
    v[50:66] = np.nan                            # 16 h: too long for linear
    out, log = fill_gaps(v, t)
    assert np.allclose(out, np.arange(n) % 24)
    assert log["linear"] == 0 and log["profile"] == 16


def test_fill_leaves_long_gaps():
    n = 24 * 6
    t = _hours(n)
    v = np.sin(np.arange(n) / 7.0) + 2.0
    v[40:70] = np.nan                            # 30 h > max_profile_h
    out, log = fill_gaps(v, t)
    assert np.all(np.isnan(out[40:70]))
    assert log["unfilled"] == 30


def test_fill_edge_gap_uses_profile_not_linear():
    n = 24 * 4
    t = _hours(n)
    v = (np.arange(n) % 24).astype(float)
    v[:3] = np.nan                               # no left neighbor
    out, log = fill_gaps(v, t)
    assert np.allclose(out[:3], [0.0, 1.0, 2.0])
    assert log["profile"] == 3 and log["linear"] == 0


def test_fill_respects_bad_mask():
    n = 72
    t = _hours(n)
    v = np.arange(n, dtype=float)
    bad = np.zeros(n, bool)
    bad[20] = True                               # finite but distrusted
    out, log = fill_gaps(v, t, bad=bad)
    assert out[20] == 20.0                       # rebuilt by interpolation
    assert log["linear"] == 1


def test_fill_unfillable_profile_cells_counted():
    n = 29
    t = _hours(n)
    v = np.full(n, 1.5)
    v[5:15] = np.nan                             # 10 h gap -> profile route
    # single-day record: gap hours were never observed, profile cells NaN
    out, log = fill_gaps(v, t)
    assert np.all(np.isnan(out[5:15]))
    assert log["unfilled"] == 10


# ---------------------------------------------------------------------------
# depth rules
# ---------------------------------------------------------------------------


def _depth(z, start="2005-01-01T00", swe_ratio=3.0):
    z = np.asarray(z, float)
    swe = np.where(z > 0, z / swe_ratio, 0.0)
    return z, swe, _hours(z.size, start)


def test_depth_spike_up_down():
    z, swe, t = _depth([0.0, 0.0, 0.6, 0.02, 0.02])
    flags, trace = flag_depth(z, swe, t)
    assert trace.spike == [2]
    assert not flags[[0, 1, 3, 4]].any()


def test_depth_spike_down_up():
    z, swe, t = _depth([0.6, 0.05, 0.6, 0.6])
    flags, trace = flag_depth(z, swe, t)
    assert trace.spike == [1]
    assert not flags[[0, 2, 3]].any()


def test_depth_spike_threshold_is_inclusive():
    j = DEPTH_JUMP_M
    z, swe, t = _depth([0.0, j, 0.0, 0.0])
    flags, trace = flag_depth(z, swe, t)
    assert trace.spike == [1]
    z2, swe2, t2 = _depth([0.0, j - 1e-6, 0.0, 0.0])
    flags2, trace2 = flag_depth(z2, swe2, t2)
    assert trace2.spike == []


def test_depth_rut_flags_plateau_only():
    z, swe, t = _depth([0.1, 0.1, 0.7, 0.72, 0.71, 0.7, 0.1, 0.1])
    flags, trace = flag_depth(z, swe, t)
    assert sorted(trace.rut) == [2, 3, 4, 5]
    assert not flags[[0, 1, 6, 7]].any()
    assert trace.spike == []


def test_depth_rut_terminates_on_landing_point():
    # plateau ends with a big step; the point it lands on is normal ground
    z, swe, t = _depth([0.0, 0.6, 0.65, 0.0, 0.0])
    flags, trace = flag_depth(z, swe, t)
    assert sorted(trace.rut) == [1, 2]
    assert not flags[3]


def test_depth_long_rut_extends_to_first_zero():
    lead = [0.1] * 5
    plateau = [0.7 + 0.001 * k for k in range(25)]      # 25 > rut_max_obs
    tail = [0.3, 0.25, 0.0, 0.2, 0.2]
    z, swe, t = _depth(lead + plateau + tail)
    flags, trace = flag_depth(z, swe, t)
    # everything nonzero from the episode start until the first zero
    expect = list(range(5, 32))
    assert sorted(trace.rut) == expect
    assert not flags[32]                                 # the zero itself
    assert not flags[33] and not flags[34]               # past the stop point


def test_depth_rut_gap_triggers_extension():
    z = np.array([0.1, 0.1, 0.7, 0.71, 0.72, 0.3, 0.0, 0.1])
    swe = z / 3.0
    t = _hours(z.size).astype("datetime64[s]").copy()
    t[4:] += np.timedelta64(40 * 86400, "s")            # 40 d hole mid-episode
    flags, trace = flag_depth(z, swe, t)
    # episode [2, 3, 4] spans the gap -> extend to the first zero (index 6)
    assert sorted(trace.rut) == [2, 3, 4, 5]
    assert not flags[6] and not flags[7]


def test_depth_melt_window():
    z = np.array([0.5, 0.3, 0.0, 0.0, 0.12, 0.0, 0.25, 0.0])
    swe = z / 3.0
    t = np.array(["2003-03-20T00", "2003-04-02T00", "2003-04-20T00",
                  "2003-05-01T00", "2003-05-10T00", "2003-06-01T00",
                  "2003-07-04T00", "2003-08-30T00"], dtype="datetime64[s]")
    flags, trace = flag_depth(z, swe, t)
    assert sorted(trace.melt_window) == [4, 6]
    assert not flags[[0, 1, 2, 3, 5, 7]].any()


def test_depth_melt_window_is_per_year():
    z = np.array([0.0, 0.3, 0.0, 0.3])
    swe = z / 3.0
    t = np.array(["2003-05-01T00", "2003-06-01T00",
                  "2004-05-01T00", "2004-06-01T00"], dtype="datetime64[s]")
    flags, trace = flag_depth(z, swe, t)
    assert sorted(trace.melt_window) == [1, 3]


def test_depth_ratio_rule():
    z = np.array([0.0, 0.5, 0.6, 0.5, 0.5, 0.5])
    swe = np.array([0.0, 0.0, 0.01, 0.2, 1.2, np.nan])
    t = _hours(6)
    flags, trace = flag_depth(z, swe, t)
    assert 1 in trace.ratio          # depth with zero water equivalent
    assert 2 in trace.ratio          # ratio 60 > 50
    assert 4 in trace.ratio          # ratio < 1
    assert 5 in trace.ratio          # water equivalent missing
    assert not flags[0] and not flags[3]


def test_depth_rules_reach_fixpoint():
    # spike inside a rut plateau: removal rewires the neighbor structure
    z, swe, t = _depth([0.1, 0.1, 0.7, 1.5, 0.7, 0.71, 0.7, 0.1, 0.1])
    flags, trace = flag_depth(z, swe, t)
    assert trace.spike == [3]
    assert sorted(trace.rut) == [2, 4, 5, 6]
    assert trace.iterations >= 1
    assert not flags[[0, 1, 7, 8]].any()


def test_depth_ignores_nan_depths():
    z, swe, t = _depth([0.1, np.nan, 0.7, 0.72, 0.71, 0.1, 0.1])
    flags, trace = flag_depth(z, swe, t)
    # the NaN hides the entry jump from index 0 to 2? no: diffs skip NaN,
    # so 0.1 -> 0.7 still reads as the entry step
    assert sorted(trace.rut) == [2, 3, 4]
    assert not flags[1]


# ---------------------------------------------------------------------------
# solar
# ---------------------------------------------------------------------------


def _years(maxima):
    vs, ts = [], []
    for i, mx in enumerate(maxima):
        base = np.datetime64(f"{2001 + i}-06-01T00")
        ts.append(base + np.arange(48).astype("timedelta64[h]"))
        v = np.linspace(0, mx, 48)
        vs.append(v)
    return np.concatenate(vs), np.concatenate(ts)


def test_solar_drops_outlier_year():
    v, t = _years([900.0, 910.0, 905.0, 2000.0, 895.0])
    keep, info = solar_annual_keep(v, t)
    assert info["years_dropped"] == [2004]
    year = t.astype("datetime64[Y]").astype(int) + 1970
    assert not keep[year == 2004].any()
    assert keep[year != 2004].all()


def test_solar_requires_spread_and_history():
    v, t = _years([900.0])
    keep, info = solar_annual_keep(v, t)
    assert keep.all() and "fewer" in info["skipped"]
    v, t = _years([900.0, 900.0, 900.0])
    keep, info = solar_annual_keep(v, t)
    assert keep.all() and "degenerate" in info["skipped"]
