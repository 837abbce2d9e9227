"""Core feed-forward network used to predict a single tendency value.

The stack maps k inputs to one output through two hidden layers sized n*k and
k (a mixing expansion followed by a contraction), so the whole parameter
vector stays small enough to train on a handful of stations.  Activations are
configurable per layer from a fixed registry; the defaults are ReLU on the
expansion, ELU on the contraction and identity on the output.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

ACTIVATIONS = ("relu", "elu", "identity")


def act_forward(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "elu":
        # alpha = 1; exp only evaluated on the negative side
        return np.where(z > 0.0, z, np.expm1(np.minimum(z, 0.0)))
    if name == "identity":
        return z
    raise ConfigError(f"unknown activation {name!r}, expected one of {ACTIVATIONS}")


def act_grad(name: str, z: np.ndarray) -> np.ndarray:
    """Derivative of the activation w.r.t. its pre-activation.

    ReLU uses the convention relu'(0) = 0, matching the subgradient choice
    made throughout the constraint layers.
    """
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "elu":
        return np.where(z > 0.0, 1.0, np.exp(np.minimum(z, 0.0)))
    if name == "identity":
        return np.ones_like(z)
    raise ConfigError(f"unknown activation {name!r}, expected one of {ACTIVATIONS}")


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------


@dataclass
class PredictiveNet:
    """Weights and layout of the k -> n*k -> k -> 1 stack."""

    k: int
    n: int
    W1: np.ndarray  # (n*k, k)
    b1: np.ndarray  # (n*k,)
    W2: np.ndarray  # (k, n*k)
    b2: np.ndarray  # (k,)
    W3: np.ndarray  # (k,)
    b3: float
    act1: str = "relu"
    act2: str = "elu"
    act3: str = "identity"

    def __post_init__(self) -> None:
        if self.k <= 0 or self.n <= 0:
            raise ConfigError(f"k and n must be positive, got k={self.k} n={self.n}")
        for name in (self.act1, self.act2, self.act3):
            if name not in ACTIVATIONS:
                raise ConfigError(
                    f"unknown activation {name!r}, expected one of {ACTIVATIONS}"
                )
        h = self.n * self.k
        shapes = {
            "W1": ((h, self.k), self.W1.shape),
            "b1": ((h,), self.b1.shape),
            "W2": ((self.k, h), self.W2.shape),
            "b2": ((self.k,), self.b2.shape),
            "W3": ((self.k,), self.W3.shape),
        }
        for name, (want, got) in shapes.items():
            if want != got:
                raise ConfigError(f"{name} must have shape {want}, got {got}")

    @property
    def parameter_count(self) -> int:
        h = self.n * self.k
        return (self.k * h + h) + (h * self.k + self.k) + (self.k + 1)

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order (b3 as a 1-element array)."""
        return [self.W1, self.b1, self.W2, self.b2, self.W3,
                np.array([self.b3], dtype=np.float64)]

    def set_params(self, params: list[np.ndarray]) -> None:
        self.W1, self.b1, self.W2, self.b2, self.W3 = (
            params[0], params[1], params[2], params[3], params[4])
        self.b3 = float(params[5][0])


@dataclass
class GradientSet:
    """Gradients of a scalar objective w.r.t. every weight field, plus the
    gradient w.r.t. the network input."""

    dW1: np.ndarray
    db1: np.ndarray
    dW2: np.ndarray
    db2: np.ndarray
    dW3: np.ndarray
    db3: float
    dx: np.ndarray = field(default=None)  # type: ignore[assignment]

    def params(self) -> list[np.ndarray]:
        return [self.dW1, self.db1, self.dW2, self.db2, self.dW3,
                np.array([self.db3], dtype=np.float64)]


def init_predictive(k: int, n: int, seed: int = 0, act1: str = "relu",
                    act2: str = "elu", act3: str = "identity") -> PredictiveNet:
    """Glorot-uniform weights, zero biases, deterministic in the seed.

    The draw order is fixed (W1, W2, W3) so a given seed always yields a
    bit-identical network.
    """
    if k <= 0 or n <= 0:
        raise ConfigError(f"k and n must be positive, got k={k} n={n}")
    rng = np.random.default_rng(seed)
    h = n * k

    def glorot(fan_in: int, fan_out: int, shape) -> np.ndarray:
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=shape)

    return PredictiveNet(
        k=k, n=n,
        W1=glorot(k, h, (h, k)),
        b1=np.zeros(h),
        W2=glorot(h, k, (k, h)),
        b2=np.zeros(k),
        W3=glorot(k, 1, (k,)),
        b3=0.0,
        act1=act1, act2=act2, act3=act3,
    )


def forward(net: PredictiveNet, x: np.ndarray) -> float:
    """Single-sample forward pass; x has length k."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.k,):
        raise ValueError(f"input must have shape ({net.k},), got {x.shape}")
    p, _ = forward_batch(net, x[None, :])
    return float(p[0])


def forward_batch(net: PredictiveNet, X: np.ndarray) -> tuple[np.ndarray, dict]:
    """Forward pass over rows of X (m, k).

    Returns the predictions and a cache of intermediates for backward_batch.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.k:
        raise ValueError(f"input must have shape (m, {net.k}), got {X.shape}")
    Z1 = X @ net.W1.T + net.b1
    A1 = act_forward(net.act1, Z1)
    Z2 = A1 @ net.W2.T + net.b2
    A2 = act_forward(net.act2, Z2)
    Z3 = A2 @ net.W3 + net.b3
    P = act_forward(net.act3, Z3)
    cache = {"X": X, "Z1": Z1, "A1": A1, "Z2": Z2, "A2": A2, "Z3": Z3}
    return P, cache


def backward_batch(net: PredictiveNet, cache: dict,
                   upstream: np.ndarray) -> GradientSet:
    """Accumulate gradients over a batch.

    upstream holds dL/dp per sample; any loss weighting or 1/N factor is
    expected to already be folded in, so the returned gradients are plain sums
    over the batch.  dx in the result is the (m, k) per-sample input gradient.
    """
    X, Z1, A1, Z2, A2, Z3 = (cache["X"], cache["Z1"], cache["A1"],
                             cache["Z2"], cache["A2"], cache["Z3"])
    dZ3 = np.asarray(upstream, dtype=np.float64) * act_grad(net.act3, Z3)
    dW3 = dZ3 @ A2
    db3 = float(dZ3.sum())
    dA2 = dZ3[:, None] * net.W3[None, :]
    dZ2 = dA2 * act_grad(net.act2, Z2)
    dW2 = dZ2.T @ A1
    db2 = dZ2.sum(axis=0)
    dA1 = dZ2 @ net.W2
    dZ1 = dA1 * act_grad(net.act1, Z1)
    dW1 = dZ1.T @ X
    db1 = dZ1.sum(axis=0)
    dX = dZ1 @ net.W1
    return GradientSet(dW1=dW1, db1=db1, dW2=dW2, db2=db2, dW3=dW3, db3=db3,
                       dx=dX)


def backward(net: PredictiveNet, x: np.ndarray, upstream: float = 1.0) -> GradientSet:
    """Single-sample convenience wrapper around backward_batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.k,):
        raise ValueError(f"input must have shape ({net.k},), got {x.shape}")
    _, cache = forward_batch(net, x[None, :])
    g = backward_batch(net, cache, np.array([upstream]))
    g.dx = g.dx[0]
    return g
