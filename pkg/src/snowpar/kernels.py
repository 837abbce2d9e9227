"""Serial compiled kernels for inference, simulation and benchmarking.

Only imported when the numba backend is active; the numpy fallback lives next
to the callers in simulation.py and bench.py.  Everything here is scalar
loops: the per-instance cost of dispatching numpy ops on single rows is what
the compiled path exists to avoid.

Weights arrive unpacked (arrays plus activation codes) because jitted code
cannot hold the dataclasses.  The clamp algebra and the directed floor
rounding mirror constraints.py exactly; keep the two in sync.
"""

import math

import numpy as np
from numba import njit

ACT_CODES = {"relu": 0, "elu": 1, "identity": 2}


@njit(cache=True)
def _act_s(code, v):
    if code == 0:
        return v if v > 0.0 else 0.0
    if code == 1:
        return v if v > 0.0 else math.expm1(v)
    return v


@njit(cache=True)
def _forward_s(xs, W1, b1, W2, b2, W3, b3, a1c, a2c, a3c, h1, h2):
    k = xs.shape[0]
    h = b1.shape[0]
    for j in range(h):
        acc = b1[j]
        for i in range(k):
            acc += W1[j, i] * xs[i]
        h1[j] = _act_s(a1c, acc)
    for j in range(k):
        acc = b2[j]
        for i in range(h):
            acc += W2[j, i] * h1[i]
        h2[j] = _act_s(a2c, acc)
    acc = b3
    for i in range(k):
        acc += W3[i] * h2[i]
    return _act_s(a3c, acc)


@njit(cache=True)
def _floor_directed(z, dt):
    # round -z/dt toward zero until the Euler product respects the bound
    f = -(z / dt)
    while dt * f < -z:
        f = np.nextafter(f, 0.0)
    return f


@njit(cache=True)
def _coupled_floor_directed(z, swe_next, kdt):
    f = (swe_next - z) / kdt
    while z + kdt * f < swe_next:
        f = np.nextafter(f, np.inf)
    return f


@njit(cache=True)
def _clamp_s(p, gate, f_lo):
    # f_lo + ReLU(f_hi - f_lo - ReLU(f_hi - p)), f_hi = ReLU(p) * gate
    f_hi = (p if p > 0.0 else 0.0) * gate
    a = f_hi - p
    ra = a if a > 0.0 else 0.0
    b = (f_hi - f_lo) - ra
    rb = b if b > 0.0 else 0.0
    return f_lo + rb


@njit(cache=True)
def _rate_constrained(row, state, W1, b1, W2, b2, W3, b3, a1c, a2c, a3c,
                      sx, sy, dt, si, gi, xs, h1, h2):
    k = row.shape[0]
    for j in range(k):
        xs[j] = row[j] / sx[j]
    xs[si] = state / sx[si]
    p = _forward_s(xs, W1, b1, W2, b2, W3, b3, a1c, a2c, a3c, h1, h2) * sy
    gate = 1.0 if row[gi] > 0.0 else 0.0
    return _clamp_s(p, gate, _floor_directed(state, dt))


@njit(cache=True)
def _rate_ifelse(row, state, W1, b1, W2, b2, W3, b3, a1c, a2c, a3c,
                 sx, sy, dt, si, gi, xs, h1, h2):
    k = row.shape[0]
    for j in range(k):
        xs[j] = row[j] / sx[j]
    xs[si] = state / sx[si]
    p = _forward_s(xs, W1, b1, W2, b2, W3, b3, a1c, a2c, a3c, h1, h2) * sy
    if row[gi] <= 0.0 and p > 0.0:
        p = 0.0
    f_lo = _floor_directed(state, dt)
    if p < f_lo:
        p = f_lo
    return p


@njit(cache=True)
def eval_batch(X, W1, b1, W2, b2, W3, b3, a1c, a2c, a3c, sx, sy, dt, si, gi,
               ifelse):
    m, k = X.shape
    h = b1.shape[0]
    xs = np.empty(k)
    h1 = np.empty(h)
    h2 = np.empty(k)
    out = np.empty(m)
    for r in range(m):
        if ifelse:
            out[r] = _rate_ifelse(X[r], X[r, si], W1, b1, W2, b2, W3, b3,
                                  a1c, a2c, a3c, sx, sy, dt, si, gi, xs, h1, h2)
        else:
            out[r] = _rate_constrained(X[r], X[r, si], W1, b1, W2, b2, W3, b3,
                                       a1c, a2c, a3c, sx, sy, dt, si, gi,
                                       xs, h1, h2)
    return out


@njit(cache=True)
def column_checksum(X, W1, b1, W2, b2, W3, b3, a1c, a2c, a3c, sx, sy, dt,
                    si, gi, ifelse):
    """Instance-by-instance sweep returning a checksum so the loop cannot be
    optimized away; used by the column-mode benchmark."""
    m, k = X.shape
    h = b1.shape[0]
    xs = np.empty(k)
    h1 = np.empty(h)
    h2 = np.empty(k)
    acc = 0.0
    for r in range(m):
        if ifelse:
            acc += _rate_ifelse(X[r], X[r, si], W1, b1, W2, b2, W3, b3,
                                a1c, a2c, a3c, sx, sy, dt, si, gi, xs, h1, h2)
        else:
            acc += _rate_constrained(X[r], X[r, si], W1, b1, W2, b2, W3, b3,
                                     a1c, a2c, a3c, sx, sy, dt, si, gi,
                                     xs, h1, h2)
    return acc


@njit(cache=True)
def simulate_param(t, X, z_obs, W1, b1, W2, b2, W3, b3, a1c, a2c, a3c,
                   sx, sy, dt, si, gi, k_max):
    """Explicit Euler walk with observed forcing and predicted state.

    Gaps longer than k_max steps reset the state to the observation; negative
    multi-step updates clamp to zero.  Returns the trajectory plus per-step
    K, reset and clamp markers.
    """
    m, k = X.shape
    h = b1.shape[0]
    xs = np.empty(k)
    h1 = np.empty(h)
    h2 = np.empty(k)
    z_hat = np.empty(m)
    Ks = np.zeros(m - 1, np.int64)
    reset = np.zeros(m - 1, np.bool_)
    clamp = np.zeros(m - 1, np.bool_)
    z = z_obs[0]
    z_hat[0] = z
    for i in range(m - 1):
        K = t[i + 1] - t[i]
        Ks[i] = K
        if K > k_max:
            z = z_obs[i + 1]
            reset[i] = True
            z_hat[i + 1] = z
            continue
        rate = _rate_constrained(X[i], z, W1, b1, W2, b2, W3, b3, a1c, a2c,
                                 a3c, sx, sy, dt, si, gi, xs, h1, h2)
        zn = z + (K * dt) * rate
        if zn < 0.0:
            zn = 0.0
            clamp[i] = True
        z = zn
        z_hat[i + 1] = z
    return z_hat, Ks, reset, clamp


@njit(cache=True)
def simulate_coupled(t, X, z_obs, swe_obs,
                     zW1, zb1, zW2, zb2, zW3, zb3, za1, za2, za3,
                     sW1, sb1, sW2, sb2, sW3, sb3, sa1, sa2, sa3,
                     sx, sy_z, sy_s, dt, gi, k_max):
    """Coupled walk: water equivalent steps first, then depth with its floor
    replaced by the bound that keeps z on or above the stepped SWE."""
    m, k = X.shape
    hz = zb1.shape[0]
    hs = sb1.shape[0]
    xs = np.empty(k)
    h1z = np.empty(hz)
    h1s = np.empty(hs)
    h2 = np.empty(k)
    z_hat = np.empty(m)
    s_hat = np.empty(m)
    Ks = np.zeros(m - 1, np.int64)
    reset = np.zeros(m - 1, np.bool_)
    clamp_z = np.zeros(m - 1, np.bool_)
    clamp_s = np.zeros(m - 1, np.bool_)
    z = z_obs[0]
    s = swe_obs[0]
    z_hat[0] = z
    s_hat[0] = s
    for i in range(m - 1):
        K = t[i + 1] - t[i]
        Ks[i] = K
        if K > k_max:
            z = z_obs[i + 1]
            s = swe_obs[i + 1]
            reset[i] = True
            z_hat[i + 1] = z
            s_hat[i + 1] = s
            continue
        for j in range(k):
            xs[j] = X[i, j] / sx[j]
        xs[0] = z / sx[0]
        xs[1] = s / sx[1]
        gate = 1.0 if X[i, gi] > 0.0 else 0.0
        kdt = K * dt
        p_s = _forward_s(xs, sW1, sb1, sW2, sb2, sW3, sb3, sa1, sa2, sa3,
                         h1s, h2) * sy_s
        rate_s = _clamp_s(p_s, gate, _floor_directed(s, dt))
        sn = s + kdt * rate_s
        if sn < 0.0:
            sn = 0.0
            clamp_s[i] = True
        p_z = _forward_s(xs, zW1, zb1, zW2, zb2, zW3, zb3, za1, za2, za3,
                         h1z, h2) * sy_z
        rate_z = _clamp_s(p_z, gate, _coupled_floor_directed(z, sn, kdt))
        zn = z + kdt * rate_z
        if zn < 0.0:  # unreachable: the coupled floor already enforces zn >= sn >= 0
            zn = 0.0
            clamp_z[i] = True
        z = zn
        s = sn
        z_hat[i + 1] = z
        s_hat[i + 1] = s
    return z_hat, s_hat, Ks, reset, clamp_z, clamp_s
