"""Constraint layers: branch-oracle agreement, float guarantees, gradients."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snowpar import (BoundsError, ConfigError, ConstrainedModel, ThresholdSpec,
                     coupled_floor, coupled_z_lower_bound, init_predictive,
                     one_sided, reduced_clamp, rescale_dt,
                     snow_depth_constraint, snow_floor, two_sided)
from snowpar.constraints import snow_cap, snow_clamp, snow_clamp_grad

DT = 86400.0

dyadic = st.integers(-10 * 2 ** 20, 10 * 2 ** 20).map(lambda i: i / 2.0 ** 20)


@given(p=dyadic, f=dyadic)
def test_one_sided_exact_on_dyadic(p, f):
    assert one_sided(p, f, "max") == max(p, f)
    assert one_sided(p, f, "min") == min(p, f)


@given(p=dyadic, a=dyadic, b=dyadic)
def test_two_sided_exact_on_dyadic(p, a, b):
    lo, hi = min(a, b), max(a, b)
    want = min(max(p, lo), hi)
    assert two_sided(p, hi, lo) == want
    assert reduced_clamp(p, hi, lo) == want


@given(p=dyadic, hi=dyadic, lo=dyadic)
def test_crossing_bounds_resolve_to_floor(p, hi, lo):
    # no ordering assumed: the composition equals max(min(p, hi), lo),
    # which is lo whenever hi < lo
    want = max(min(p, hi), lo)
    assert two_sided(p, hi, lo) == want
    assert reduced_clamp(p, hi, lo) == want


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=200)
@given(p=finite, hi=finite, lo=finite)
def test_layer_close_to_oracle_generally(p, hi, lo):
    want = max(min(p, hi), lo)
    tol = 8 * np.finfo(float).eps * max(1.0, abs(p), abs(hi), abs(lo))
    assert abs(float(two_sided(p, hi, lo)) - want) <= tol
    assert abs(float(reduced_clamp(p, hi, lo)) - want) <= tol


def test_one_sided_mode_validation():
    with pytest.raises(ConfigError):
        one_sided(1.0, 2.0, "clip")


def test_two_sided_check_flag():
    with pytest.raises(BoundsError):
        two_sided(0.5, -1.0, 2.0, check=True)
    # without the flag, crossing bounds are legal and give the floor
    assert two_sided(0.5, -1.0, 2.0) == 2.0


def test_broadcasting():
    p = np.linspace(-2, 2, 11)
    out = two_sided(p, 1.0, -1.0)
    assert out.shape == p.shape
    assert np.array_equal(out, np.clip(p, -1.0, 1.0))


# ---------------------------------------------------------------------------
# directed floors
# ---------------------------------------------------------------------------


@settings(max_examples=300)
@given(z=st.floats(0.0, 100.0, allow_nan=False),
       dt=st.floats(1.0, 1e6, allow_nan=False))
def test_snow_floor_euler_guarantee(z, dt):
    f = float(snow_floor(z, dt))
    assert f <= 0.0
    assert z + dt * f >= 0.0
    # at most a few ULP above the exact quotient
    naive = -(z / dt)
    assert f >= naive
    if naive != 0.0:
        steps = 0
        g = naive
        while g != f and steps < 5:
            g = np.nextafter(g, 0.0)
            steps += 1
        assert g == f


def test_snow_floor_fixes_naive_negatives():
    rng = np.random.default_rng(0)
    z = rng.uniform(0.0, 3.0, 50_000)
    naive_bad = np.sum(z + DT * (-(z / DT)) < 0.0)
    assert naive_bad > 0  # the problem is real
    f = snow_floor(z, DT)
    assert np.all(z + DT * f >= 0.0)


@settings(max_examples=300)
@given(z=st.floats(0.0, 10.0, allow_nan=False),
       s=st.floats(0.0, 10.0, allow_nan=False),
       k=st.integers(1, 5))
def test_coupled_floor_guarantee(z, s, k):
    f = float(coupled_floor(z, s, k, DT))
    kdt = np.float64(k) * DT
    assert z + kdt * f >= s


# ---------------------------------------------------------------------------
# snow semantics
# ---------------------------------------------------------------------------


def test_no_growth_without_snowfall_is_bitwise():
    rng = np.random.default_rng(1)
    p = rng.normal(size=10_000)
    z = rng.uniform(0, 2, 10_000)
    out = snow_depth_constraint(p, z, DT, p_snow=np.zeros(10_000))
    assert np.all(out <= 0.0)
    # and the positive predictions collapse to exactly zero
    assert np.all(out[p > 0] == 0.0)


def test_growth_allowed_only_with_snowfall():
    p = np.array([1e-6, 1e-6, -1e-6])
    z = np.array([0.5, 0.5, 0.5])
    snow = np.array([1e-3, 0.0, 1e-3])
    out = snow_depth_constraint(p, z, DT, snow)
    assert out[0] == pytest.approx(1e-6)
    assert out[1] == 0.0
    assert out[2] == pytest.approx(-1e-6)


def test_gate_is_exact_comparison_not_threshold():
    p = np.array([1e-6])
    z = np.array([0.5])
    assert snow_depth_constraint(p, z, DT, np.array([5e-324]))[0] > 0.0
    assert snow_depth_constraint(p, z, DT, np.array([0.0]))[0] == 0.0
    assert snow_depth_constraint(p, z, DT, np.array([-1.0]))[0] == 0.0


def test_melt_cannot_exceed_standing_pack():
    p = np.full(1000, -1.0)  # huge melt demand
    z = np.linspace(0.0, 3.0, 1000)
    out = snow_depth_constraint(p, z, DT, np.zeros(1000))
    z_next = z + DT * out
    assert np.all(z_next >= 0.0)
    assert np.all(np.abs(z_next) <= 4 * np.finfo(float).eps * np.maximum(z, 1.0))


def test_coupled_lower_bound_keeps_z_above_swe():
    rng = np.random.default_rng(2)
    z = rng.uniform(0, 2, 5000)
    swe_next = rng.uniform(0, 2, 5000)
    p = rng.normal(scale=1e-5, size=5000)
    snow = rng.choice([0.0, 1e-3], size=5000)
    for k in (1, 3):
        out = coupled_z_lower_bound(p, z, swe_next, DT, k, snow)
        kdt = np.float64(k) * DT
        assert np.all(z + kdt * out >= swe_next)


# ---------------------------------------------------------------------------
# clamp gradient
# ---------------------------------------------------------------------------


def test_clamp_grad_matches_finite_differences():
    rng = np.random.default_rng(3)
    p = rng.normal(size=4000)
    gate = rng.choice([0.0, 1.0], size=4000)
    f_lo = -np.abs(rng.normal(size=4000))
    ana = snow_clamp_grad(p, gate, f_lo)
    h = 1e-7
    num = (snow_clamp(p + h, gate, f_lo) - snow_clamp(p - h, gate, f_lo)) / (2 * h)
    # kinks make a handful of samples disagree; exclude points within h of one
    near_kink = (np.abs(p) < 10 * h) | (np.abs(p - f_lo) < 10 * h) | \
        (np.abs(snow_cap(p, gate) - f_lo) < 10 * h)
    ok = ~near_kink
    assert np.allclose(ana[ok], num[ok], rtol=1e-6, atol=1e-6)


def test_clamp_grad_regions():
    # inside the bounds gradient is 1, in clamped regions 0
    assert snow_clamp_grad(np.array([-1e-3]), np.array([0.0]),
                           np.array([-1.0]))[0] == 1.0
    assert snow_clamp_grad(np.array([0.5]), np.array([0.0]),
                           np.array([-1.0]))[0] == 0.0   # gate closed, zeroed
    assert snow_clamp_grad(np.array([-5.0]), np.array([0.0]),
                           np.array([-1.0]))[0] == 0.0   # floored
    # open gate, growing: f_hi tracks p so the output follows p
    assert snow_clamp_grad(np.array([0.5]), np.array([1.0]),
                           np.array([-1.0]))[0] == 1.0


# ---------------------------------------------------------------------------
# model wrapper
# ---------------------------------------------------------------------------


def _tiny_model(dt=DT):
    net = init_predictive(7, 1, seed=0)
    return ConstrainedModel(net=net, threshold=ThresholdSpec(),
                            scale_x=np.ones(7), scale_y=1.0, dt=dt)


def test_threshold_spec_validation():
    with pytest.raises(ConfigError):
        ThresholdSpec(mode="soft")
    with pytest.raises(ConfigError):
        ThresholdSpec(lower="unknown_id")
    with pytest.raises(ConfigError):
        ThresholdSpec(lower_sign="positive")
    with pytest.raises(ConfigError):
        ThresholdSpec(state_index=-1)


def test_model_validation():
    net = init_predictive(7, 1, seed=0)
    with pytest.raises(ConfigError):
        ConstrainedModel(net=net, threshold=ThresholdSpec(),
                         scale_x=np.ones(6), scale_y=1.0, dt=DT)
    with pytest.raises(ConfigError):
        ConstrainedModel(net=net, threshold=ThresholdSpec(),
                         scale_x=np.zeros(7), scale_y=1.0, dt=DT)
    with pytest.raises(ConfigError):
        ConstrainedModel(net=net, threshold=ThresholdSpec(),
                         scale_x=np.ones(7), scale_y=1.0, dt=-5.0)


def test_rescale_dt_shares_weights():
    m = _tiny_model()
    hourly = rescale_dt(m, 3600.0)
    assert hourly.dt == 3600.0
    for a, b in zip(m.net.params(), hourly.net.params()):
        assert np.array_equal(a, b)
    assert rescale_dt(m, DT) == m
    assert hourly != m
    with pytest.raises(ConfigError):
        rescale_dt(m, 0.0)


def test_evaluate_respects_floor_override():
    m = _tiny_model()
    x = np.array([1.0, 0.5, 0.5, 100.0, 3.0, -5.0, 0.0])
    free = m.evaluate(x, floor=-1.0)
    pinned = m.evaluate(x, floor=0.25)
    assert pinned >= 0.25
    assert free >= -1.0
