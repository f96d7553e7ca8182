"""Initialization schemes and layerwise learning-rate plans.

Every sine scheme draws the same stream: for each layer, the weight matrix
(row-major, unit draws in [-1, 1)) and then the bias. Schemes differ only
in the bound each unit draw is multiplied by, so two schemes that agree on
a layer's bound produce bit-identical weights there.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import InvalidInputError
from .model import ReluPosEnc, SnfParams
from .numcore import Prng, uniform_fill

# per-domain scaling factors tuned for each signal type
DEFAULT_ALPHA = {"image": 2.37, "occupancy": 3.7, "sphere": 2.5, "audio": 2.0}

SCHEMES = ("standard", "ws", "xavier", "nfsl", "relu_pe")


@dataclass(frozen=True)
class InitSpec:
    scheme: str = "standard"
    alpha: float = 1.0
    seed: int = 0
    n_freqs: int = 10  # relu_pe only

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidInputError(f"unknown init scheme {self.scheme!r}")
        if self.scheme == "ws" and not self.alpha > 0:
            raise InvalidInputError(f"weight scaling needs alpha > 0, got {self.alpha}")

    @classmethod
    def parse(cls, token, seed=0, alpha=None):
        """Parse ``standard | ws:<alpha> | ws | xavier | nfsl | relu_pe:<K>``.

        A bare ``ws`` takes ``alpha`` from the caller.
        """
        name, _, arg = token.strip().partition(":")
        try:
            if name == "ws":
                a = float(arg) if arg else alpha
                if a is None:
                    raise InvalidInputError("'ws' without a value needs an alpha")
                return cls("ws", a, seed)
            if name == "relu_pe":
                return cls("relu_pe", 1.0, seed, int(arg) if arg else 10)
        except ValueError:
            raise InvalidInputError(f"bad init token {token!r}") from None
        if arg:
            raise InvalidInputError(f"init scheme {name!r} takes no argument")
        return cls(name, 1.0, seed)

    @property
    def token(self):
        if self.scheme == "ws":
            return f"ws:{self.alpha:g}"
        if self.scheme == "relu_pe":
            return f"relu_pe:{self.n_freqs}"
        return self.scheme


@dataclass(frozen=True)
class LrPlan:
    base_lr: float
    per_layer_multiplier: Tuple[float, ...]

    def __post_init__(self):
        if not all(m > 0 for m in self.per_layer_multiplier):
            raise InvalidInputError("learning-rate multipliers must be positive")


def _check_dims(dims):
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise InvalidInputError(f"need at least [d0, d1] with positive sizes, got {dims}")
    return dims


def _check_omegas(omega0, omega_h):
    if not (omega0 > 0 and omega_h > 0):
        raise InvalidInputError(f"frequency multipliers must be positive, got {omega0}, {omega_h}")


def standard_bound(i, dims, omega_h):
    """Half-width of the standard SIREN weight range for 0-based layer ``i``."""
    if i == 0:
        return 1.0 / dims[0]
    return math.sqrt(6.0) / (omega_h * math.sqrt(dims[i]))


def _build(dims, bounds, seed, omega0, omega_h, activation=None):
    rng = Prng(seed)
    layers = []
    for i, bound in enumerate(bounds):
        fan_in, fan_out = dims[i], dims[i + 1]
        W = bound * uniform_fill(rng, fan_out, fan_in, -1.0, 1.0)
        b = (1.0 / math.sqrt(fan_in)) * uniform_fill(rng, fan_out, 1, -1.0, 1.0)[:, 0]
        layers.append((W, b))
    if activation is None:
        return SnfParams(layers, omega0, omega_h)
    return SnfParams(layers, omega0, omega_h, activation)


def init_standard(dims, omega0=30.0, omega_h=30.0, seed=0):
    dims = _check_dims(dims)
    _check_omegas(omega0, omega_h)
    bounds = [standard_bound(i, dims, omega_h) for i in range(len(dims) - 1)]
    return _build(dims, bounds, seed, omega0, omega_h)


def init_weight_scaled(dims, alpha, omega0=30.0, omega_h=30.0, seed=0):
    """Standard bounds times ``alpha`` for every weight matrix but the last.

    Biases and the output layer keep their standard ranges.
    """
    if not alpha > 0:
        raise InvalidInputError(f"alpha must be positive, got {alpha}")
    dims = _check_dims(dims)
    _check_omegas(omega0, omega_h)
    last = len(dims) - 2
    bounds = [
        standard_bound(i, dims, omega_h) * (1.0 if i == last else alpha) for i in range(len(dims) - 1)
    ]
    return _build(dims, bounds, seed, omega0, omega_h)


def xavier_bound(fan_in, fan_out):
    return math.sqrt(6.0) / math.sqrt(fan_in + fan_out)


def init_xavier(dims, omega0=30.0, omega_h=30.0, seed=0):
    dims = _check_dims(dims)
    _check_omegas(omega0, omega_h)
    bounds = [xavier_bound(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]
    return _build(dims, bounds, seed, omega0, omega_h)


def nfsl_last_bound(fan_in, omega_h):
    return math.sqrt(6.0) / (fan_in**0.75 * omega_h)


def init_nfsl(dims, omega0=30.0, omega_h=30.0, seed=0):
    """Standard init with the output layer range shrunk to sqrt(6)/(n^(3/4) omega)."""
    dims = _check_dims(dims)
    _check_omegas(omega0, omega_h)
    bounds = [standard_bound(i, dims, omega_h) for i in range(len(dims) - 1)]
    bounds[-1] = nfsl_last_bound(dims[-2], omega_h)
    return _build(dims, bounds, seed, omega0, omega_h)


def init_relu_pe(dims, n_freqs, seed=0):
    """ReLU baseline on positionally encoded inputs.

    ``dims[0]`` is the raw coordinate dimension; the first layer consumes
    ``2 * n_freqs * dims[0]`` features. Weights use the usual
    Unif(+-1/sqrt(fan_in)) linear-layer default.
    """
    dims = _check_dims(dims)
    enc = [2 * n_freqs * dims[0]] + dims[1:]
    bounds = [1.0 / math.sqrt(enc[i]) for i in range(len(enc) - 1)]
    return _build(enc, bounds, seed, 1.0, 1.0, ReluPosEnc(n_freqs))


def initialize(spec, dims, omega0=30.0, omega_h=30.0):
    """Dispatch an :class:`InitSpec` to its constructor."""
    if spec.scheme == "standard":
        return init_standard(dims, omega0, omega_h, spec.seed)
    if spec.scheme == "ws":
        return init_weight_scaled(dims, spec.alpha, omega0, omega_h, spec.seed)
    if spec.scheme == "xavier":
        return init_xavier(dims, omega0, omega_h, spec.seed)
    if spec.scheme == "nfsl":
        return init_nfsl(dims, omega0, omega_h, spec.seed)
    return init_relu_pe(dims, spec.n_freqs, spec.seed)


# ---------------------------------------------------------------------------
# layerwise learning-rate plans
# ---------------------------------------------------------------------------


def uniform_plan(depth, base_lr):
    return LrPlan(base_lr, (1.0,) * depth)


def _plan_exponents(alpha, depth):
    if not alpha >= 1:
        raise InvalidInputError(f"layerwise plans need alpha >= 1, got {alpha}")
    if depth < 1:
        raise InvalidInputError("depth must be positive")
    return np.arange(depth - 1, -1, -1, dtype=np.float64)  # l-k for k = 1..l


def lr_plan_functional_only(alpha, depth, base_lr):
    """Layer k runs at alpha^-(l-k): cancels the gradient growth of a ws:alpha init."""
    return LrPlan(base_lr, tuple(float(alpha) ** -float(e) for e in _plan_exponents(alpha, depth)))


def lr_plan_gradient_only(alpha, depth, base_lr):
    """Layer k runs at alpha^(l-k): mimics ws:alpha gradients on a standard init."""
    return LrPlan(base_lr, tuple(float(alpha) ** float(e) for e in _plan_exponents(alpha, depth)))
