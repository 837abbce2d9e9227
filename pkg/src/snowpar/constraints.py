"""Hard output bounds built from fixed-weight ReLU layers.

A predicted tendency p is clamped against data-derived thresholds using only
ReLU compositions, so the bounds live inside the differentiable graph instead
of being patched on afterwards.  The identities used:

    max(p, f) = ReLU(f) - ReLU(-f) + ReLU(p - f)
    min(p, f) = ReLU(f) - ReLU(-f) - ReLU(f - p)

and the two-sided clamp max(min(p, f_plus), f_minus) composed from the same
pieces.  The fixed matrices below express these as linear layers; the reduced
form used in the hot paths,

    clamp(p) = f_minus + ReLU(f_plus - f_minus - ReLU(f_plus - p)),

evaluates to the same value for every sign combination (crossing bounds,
f_plus < f_minus, resolve to f_minus).  Everywhere ReLU'(0) = 0.

For snow depth the bounds are: lower f_minus = -z/dt (total loss of the
standing pack in one step), upper f_plus = ReLU(p) gated to zero unless
snowfall is present.  The gate compares raw snowfall to zero and is constant
per sample, so no gradient flows through it.

Floors that feed an explicit Euler product are rounded toward zero with
nextafter until the float product actually respects the bound; see
snow_floor and coupled_floor.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, ConfigError
from .net import PredictiveNet, forward_batch

# fixed constraint-layer weights (transposed: rows map stacked inputs to
# ReLU channels)
A2T_MAX = np.array([[1.0, -1.0], [0.0, 1.0], [0.0, -1.0]])
A1_MAX = np.array([1.0, 1.0, -1.0])
A2T_MIN = np.array([[-1.0, 1.0], [0.0, 1.0], [0.0, -1.0]])
A1_MIN = np.array([-1.0, 1.0, -1.0])
A4T = np.array([
    [-1.0, 1.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
])
A3T = np.array([
    [-1.0, 1.0, -1.0, -1.0, 1.0],
    [0.0, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0],
])
A1_TWO = np.array([1.0, 1.0, -1.0])


def _relu(v: np.ndarray) -> np.ndarray:
    return np.maximum(v, 0.0)


def one_sided(p, f, mode: str = "max") -> np.ndarray:
    """max or min of p against a threshold f via the ReLU layer pair."""
    if mode == "max":
        a2t, a1 = A2T_MAX, A1_MAX
    elif mode == "min":
        a2t, a1 = A2T_MIN, A1_MIN
    else:
        raise ConfigError(f"mode must be 'max' or 'min', got {mode!r}")
    p, f = np.broadcast_arrays(np.asarray(p, np.float64), np.asarray(f, np.float64))
    v = np.stack([p, f], axis=-1)
    u = _relu(v @ a2t.T)
    return u @ a1


def two_sided(p, f_plus, f_minus, check: bool = False) -> np.ndarray:
    """Clamp p into [f_minus, f_plus] via the fixed three-layer composition.

    With check=True, f_plus < f_minus raises BoundsError.  By default crossing
    bounds are legal and the output equals f_minus, which is the resolution
    the snow thresholds rely on (a fresh-snow cap below the melt-out floor
    simply forces the floor).
    """
    p, f_plus, f_minus = np.broadcast_arrays(
        np.asarray(p, np.float64), np.asarray(f_plus, np.float64),
        np.asarray(f_minus, np.float64))
    if check and np.any(f_plus < f_minus):
        raise BoundsError("f_plus < f_minus with check=True")
    w = np.stack([p, f_plus, f_minus], axis=-1)
    u = _relu(w @ A4T.T)
    t = _relu(u @ A3T.T)
    return t @ A1_TWO


def reduced_clamp(p, f_plus, f_minus) -> np.ndarray:
    """Two-ReLU reduction of the two-sided clamp.

    Identical value to two_sided for every sign combination in real
    arithmetic; this is the form inlined in the compiled kernels.  In floats
    the two can differ by a couple of ULP because the matrix path sums five
    channels while this one folds the sign reconstruction away; on inputs
    whose sums are exactly representable (the footing the exactness tests
    use) both reproduce the branch oracle bit for bit.
    """
    a = _relu(np.subtract(f_plus, p))
    b = (np.subtract(f_plus, f_minus)) - a
    return f_minus + _relu(b)


# ---------------------------------------------------------------------------
# snow thresholds
# ---------------------------------------------------------------------------


def snow_floor(z, dt: float):
    """Lower bound -z/dt, rounded toward zero until fl(dt * f) >= -z.

    The naive quotient loses to rounding in a few percent of cases: the Euler
    update z + dt * (-(z/dt)) can land a few ULP below zero.  Nudging the
    floor toward zero with nextafter (three steps suffice; four are allowed
    before giving up) restores z + dt*f >= 0 exactly in floats, and any rate
    above the floor inherits the guarantee because both the product and the
    final add round monotonically.
    """
    z = np.asarray(z, np.float64)
    f = -(z / dt)
    for _ in range(4):
        bad = (dt * f) < -z
        if not np.any(bad):
            return f
        f = np.where(bad, np.nextafter(f, 0.0), f)
    if np.any((dt * f) < -z):  # pragma: no cover - never seen in practice
        raise FloatingPointError("snow_floor failed to round into the bound")
    return f


def coupled_floor(z, swe_next, k_steps: int, dt: float):
    """Lower bound (swe_next - z)/(K dt), rounded up until the Euler update
    z + (K dt) * f lands at or above swe_next in float arithmetic."""
    z = np.asarray(z, np.float64)
    swe_next = np.asarray(swe_next, np.float64)
    kdt = np.float64(k_steps) * dt
    f = (swe_next - z) / kdt
    for _ in range(4):
        bad = (z + kdt * f) < swe_next
        if not np.any(bad):
            return f
        f = np.where(bad, np.nextafter(f, np.inf), f)
    if np.any((z + kdt * f) < swe_next):  # pragma: no cover
        raise FloatingPointError("coupled_floor failed to round into the bound")
    return f


def snow_cap(p, gate) -> np.ndarray:
    """Upper bound ReLU(p) * gate: growth is allowed only when snowfall is
    present (gate 1.0) and never exceeds the raw prediction."""
    return _relu(np.asarray(p, np.float64)) * gate


def snow_clamp(p, gate, f_minus) -> np.ndarray:
    return reduced_clamp(p, snow_cap(p, gate), f_minus)


def snow_clamp_grad(p, gate, f_minus) -> np.ndarray:
    """dM/dp of snow_clamp with the ReLU'(0) = 0 convention.

    The gate is data (zero gradient); f_minus is data too.
    """
    p = np.asarray(p, np.float64)
    f_plus = snow_cap(p, gate)
    a = f_plus - p
    dfp = gate * (p > 0.0)
    da = dfp - 1.0
    db = dfp - (a > 0.0) * da
    b = (f_plus - f_minus) - _relu(a)
    return (b > 0.0) * db


def snow_depth_constraint(p, z, dt: float, p_snow) -> np.ndarray:
    """Physical-space constrained tendency for the standing pack z.

    p, z, p_snow are broadcast; dt is seconds per native step.
    """
    gate = (np.asarray(p_snow, np.float64) > 0.0).astype(np.float64)
    return snow_clamp(np.asarray(p, np.float64), gate, snow_floor(z, dt))


def coupled_z_lower_bound(p, z, swe_next, dt: float, k_steps: int,
                          p_snow) -> np.ndarray:
    """Constrained depth tendency whose floor keeps z on or above the water
    equivalent already stepped to i+K.  The upper bound is unchanged."""
    gate = (np.asarray(p_snow, np.float64) > 0.0).astype(np.float64)
    return snow_clamp(np.asarray(p, np.float64), gate,
                      coupled_floor(z, swe_next, k_steps, dt))


# ---------------------------------------------------------------------------
# model wrapper
# ---------------------------------------------------------------------------

_MODES = ("max_with_f", "min_with_f", "clamp_two_sided")
_SIGNS = ("nonneg", "nonpos", "any")
_LOWER_IDS = ("snow_floor", "none")
_UPPER_IDS = ("snowfall_cap", "none")


@dataclass(frozen=True)
class ThresholdSpec:
    """Declarative description of which bounds wrap the network output.

    state_index points at the feature the floor protects (0 for depth, 1 for
    water equivalent); gate_index points at the snowfall feature used by the
    growth gate.  Thresholds are named, not stored as code, so the whole
    description serializes cleanly.
    """

    mode: str = "clamp_two_sided"
    lower: str = "snow_floor"
    upper: str = "snowfall_cap"
    lower_sign: str = "nonpos"
    upper_sign: str = "nonneg"
    state_index: int = 0
    gate_index: int = 6

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.lower not in _LOWER_IDS or self.upper not in _UPPER_IDS:
            raise ConfigError(
                f"unknown threshold ids ({self.lower!r}, {self.upper!r})")
        if self.lower_sign not in _SIGNS or self.upper_sign not in _SIGNS:
            raise ConfigError(f"sign hints must be one of {_SIGNS}")
        if self.state_index < 0 or self.gate_index < 0:
            raise ConfigError("feature indices must be non-negative")


@dataclass(eq=False)
class ConstrainedModel:
    """A trained network plus everything needed to evaluate it on raw data.

    scale_x holds the per-feature divisors applied before the network and
    scale_y the multiplier restoring the output to physical units; dt is the
    native step in seconds.  Bounds are applied in physical space so the
    float guarantees of snow_floor hold for the Euler update that follows.
    """

    net: PredictiveNet
    threshold: ThresholdSpec
    scale_x: np.ndarray
    scale_y: float
    dt: float
    feature_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self.scale_x = np.asarray(self.scale_x, np.float64)
        if self.scale_x.shape != (self.net.k,):
            raise ConfigError(
                f"scale_x must have shape ({self.net.k},), got {self.scale_x.shape}")
        if not np.all(self.scale_x > 0.0) or not self.scale_y > 0.0:
            raise ConfigError("scales must be positive")
        if self.dt <= 0.0:
            raise ConfigError("dt must be positive seconds")
        if self.threshold.state_index >= self.net.k or \
                self.threshold.gate_index >= self.net.k:
            raise ConfigError("threshold feature indices exceed input size")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConstrainedModel):
            return NotImplemented
        a, b = self.net, other.net
        return (
            self.threshold == other.threshold
            and self.dt == other.dt
            and self.scale_y == other.scale_y
            and self.feature_names == other.feature_names
            and a.k == b.k and a.n == b.n
            and (a.act1, a.act2, a.act3) == (b.act1, b.act2, b.act3)
            and np.array_equal(self.scale_x, other.scale_x)
            and all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))
        )

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        """Unconstrained physical-space predictions for raw feature rows."""
        X = np.atleast_2d(np.asarray(X, np.float64))
        p, _ = forward_batch(self.net, X / self.scale_x)
        return p * self.scale_y

    def evaluate_batch(self, X: np.ndarray, floors: np.ndarray | None = None
                       ) -> np.ndarray:
        """Constrained physical-space tendencies for raw feature rows.

        floors overrides the default snow_floor values (used by the coupled
        simulation, which substitutes the water-equivalent bound).
        """
        X = np.atleast_2d(np.asarray(X, np.float64))
        p = self.predict_raw(X)
        gate = (X[:, self.threshold.gate_index] > 0.0).astype(np.float64)
        if floors is None:
            floors = snow_floor(X[:, self.threshold.state_index], self.dt)
        return snow_clamp(p, gate, floors)

    def evaluate(self, x: np.ndarray, floor: float | None = None) -> float:
        floors = None if floor is None else np.array([floor])
        return float(self.evaluate_batch(np.asarray(x)[None, :], floors)[0])


def rescale_dt(model: ConstrainedModel, new_dt: float) -> ConstrainedModel:
    """Same weights, different native step.

    Only the stored dt changes; the network is shared, so weights are
    bit-identical by construction.  Passing the current dt returns an equal
    model.
    """
    if new_dt <= 0.0:
        raise ConfigError("new_dt must be positive seconds")
    return dataclasses.replace(model, dt=float(new_dt))
