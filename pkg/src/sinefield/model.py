"""Sinusoidal MLP: forward pass with cached trace, reverse-mode gradients,
per-example parameter gradients and the ReLU + positional-encoding baseline.

Shapes follow the column convention: inputs are ``d0 x N``, layer ``i``
has weight ``d_i x d_{i-1}`` and bias ``(d_i,)``. An "l-layer" network has
l-1 activated layers and one linear output layer.
"""

import warnings
from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np

from .errors import FormatError, InvalidInputError, ShapeError


@dataclass(frozen=True)
class SineField:
    """sin(omega0 * .) on the first layer, sin(omega_h * .) on the others."""


@dataclass(frozen=True)
class ReluPosEnc:
    """Fixed positional encoding of the input, then ReLU layers."""

    n_freqs: int

    def __post_init__(self):
        if self.n_freqs < 1:
            raise InvalidInputError("positional encoding needs at least one frequency")


Activation = Union[SineField, ReluPosEnc]


@dataclass
class SnfParams:
    layers: List[Tuple[np.ndarray, np.ndarray]]
    omega0: float = 30.0
    omega_h: float = 30.0
    activation: Activation = field(default_factory=SineField)

    def __post_init__(self):
        if not self.layers:
            raise InvalidInputError("network needs at least one layer")
        if not (self.omega0 > 0 and self.omega_h > 0):
            raise InvalidInputError(f"frequency multipliers must be positive, got {self.omega0}, {self.omega_h}")
        for i, (W, b) in enumerate(self.layers):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ShapeError(f"layer {i + 1}: weight {W.shape} and bias {b.shape} disagree")
            if i and W.shape[1] != self.layers[i - 1][0].shape[0]:
                raise ShapeError(
                    f"layer {i + 1} expects {W.shape[1]} inputs but layer {i} has {self.layers[i - 1][0].shape[0]} outputs"
                )
        if isinstance(self.activation, ReluPosEnc) and self.input_dim % (2 * self.activation.n_freqs):
            raise ShapeError("first layer width is not a multiple of 2*K encoded features")

    @property
    def depth(self):
        return len(self.layers)

    @property
    def dims(self):
        """Layer sizes [d0, d1, ..., dl] as seen by the weight matrices."""
        return [self.layers[0][0].shape[1]] + [W.shape[0] for W, _ in self.layers]

    @property
    def input_dim(self):
        """Width of the first layer's input (encoded width for ReluPosEnc)."""
        return self.layers[0][0].shape[1]

    @property
    def coord_dim(self):
        """Dimension of raw coordinates fed to :func:`forward`."""
        if isinstance(self.activation, ReluPosEnc):
            return self.input_dim // (2 * self.activation.n_freqs)
        return self.input_dim

    @property
    def n_params(self):
        return sum(W.size + b.size for W, b in self.layers)

    def copy(self):
        return SnfParams(
            [(W.copy(), b.copy()) for W, b in self.layers], self.omega0, self.omega_h, self.activation
        )

    def omega(self, i):
        """Frequency multiplier applied after layer ``i`` (0-based)."""
        return self.omega0 if i == 0 else self.omega_h


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre_activations: List[np.ndarray]
    activations: List[np.ndarray]
    output: np.ndarray


def positional_encode(x, n_freqs):
    """Per coordinate: sin(2^k pi x), cos(2^k pi x) for k = 0..K-1.

    Accepts a coordinate vector ``(d0,)`` or a matrix ``(d0, N)``; the
    result has ``2*K*d0`` rows, grouped by input dimension.
    """
    if n_freqs < 1:
        raise InvalidInputError("positional encoding needs K >= 1")
    x = np.asarray(x, dtype=np.float64)
    vector = x.ndim == 1
    X = x[:, None] if vector else x
    scales = (2.0 ** np.arange(n_freqs)) * np.pi
    arg = X[:, None, :] * scales[None, :, None]  # d0 x K x N
    feats = np.stack([np.sin(arg), np.cos(arg)], axis=2)  # d0 x K x 2 x N
    out = feats.reshape(-1, X.shape[1])
    return out[:, 0] if vector else out


def _as_columns(params, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] < 1:
        raise ShapeError(f"coordinates must be a d0 x N matrix with N >= 1, got {X.shape}")
    if X.shape[0] != params.coord_dim:
        raise ShapeError(f"network expects {params.coord_dim}-dimensional coordinates, got {X.shape[0]}")
    return X


def forward(params, X):
    """Evaluate the network on the columns of ``X`` and keep the trace."""
    X = _as_columns(params, X)
    relu = isinstance(params.activation, ReluPosEnc)
    if relu:
        Z = positional_encode(X, params.activation.n_freqs)
    else:
        if np.any(np.abs(X) > 1.0):
            warnings.warn("coordinates outside [-1, 1]", RuntimeWarning, stacklevel=2)
        Z = X
    inputs = Z
    pres, acts = [], []
    last = params.depth - 1
    for i, (W, b) in enumerate(params.layers):
        pre = W @ Z + b[:, None]
        pres.append(pre)
        if i == last:
            break
        Z = np.maximum(pre, 0.0) if relu else np.sin(params.omega(i) * pre)
        acts.append(Z)
    return ForwardTrace(inputs, pres, acts, pres[-1])


def activation_grad(params, i, pre):
    """Derivative of layer ``i``'s activation at pre-activation ``pre``."""
    if isinstance(params.activation, ReluPosEnc):
        return (pre > 0.0).astype(np.float64)
    w = params.omega(i)
    return w * np.cos(w * pre)


def backward(params, trace, residual):
    """Reverse-mode gradient of ``0.5 * sum(residual**2)`` w.r.t. every parameter.

    ``residual`` is prediction minus target, shaped like ``trace.output``.
    Returns a list of ``(dW, db)`` pairs matching ``params.layers``.
    """
    delta = np.asarray(residual, dtype=np.float64)
    if delta.shape != trace.output.shape:
        raise ShapeError(f"residual shape {delta.shape} != output shape {trace.output.shape}")
    grads = [None] * params.depth
    for i in range(params.depth - 1, -1, -1):
        Z_in = trace.activations[i - 1] if i else trace.inputs
        grads[i] = (delta @ Z_in.T, delta.sum(axis=1))
        if i:
            delta = (params.layers[i][0].T @ delta) * activation_grad(params, i - 1, trace.pre_activations[i - 1])
    return grads


def flatten_grads(grads):
    """Concatenate ``(dW, db)`` pairs: layer 1 weights row-major, layer 1 bias, layer 2 ..."""
    return np.concatenate([np.concatenate([gW.ravel(), gb.ravel()]) for gW, gb in grads])


def flatten_params(params):
    return flatten_grads(params.layers)


def unflatten_params(params, flat):
    """A copy of ``params`` with values taken from ``flat`` (same order as flatten)."""
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (params.n_params,):
        raise ShapeError(f"expected {params.n_params} values, got {flat.shape}")
    layers, pos = [], 0
    for W, b in params.layers:
        nW = flat[pos:pos + W.size].reshape(W.shape)
        pos += W.size
        nb = flat[pos:pos + b.size].copy()
        pos += b.size
        layers.append((nW.copy(), nb))
    return SnfParams(layers, params.omega0, params.omega_h, params.activation)


def per_example_grad(params, x):
    """Flat gradient of the scalar output at one coordinate.

    Order: layer-1 weights (row-major), layer-1 bias, layer-2 weights, ...
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise InvalidInputError(f"per_example_grad takes one coordinate, got {x.shape[1]} columns")
    elif x.ndim == 1:
        x = x[:, None]
    else:
        raise InvalidInputError(f"bad coordinate shape {x.shape}")
    if params.dims[-1] != 1:
        raise InvalidInputError("per-example gradients need a scalar-output network")
    trace = forward(params, x)
    return flatten_grads(backward(params, trace, np.ones((1, 1))))


def predict(params, X):
    return forward(params, X).output


# ---------------------------------------------------------------------------
# checkpoint: "SNF1 <depth> <d0> ... <dl> <omega0> <omega_h>\n" + LE f64 stream
# ---------------------------------------------------------------------------

_MAGIC = "SNF1"


def save_checkpoint(path, params):
    tokens = [_MAGIC, str(params.depth)] + [str(d) for d in params.dims]
    tokens += [repr(float(params.omega0)), repr(float(params.omega_h))]
    if isinstance(params.activation, ReluPosEnc):
        # non-sine networks append their encoding; sine checkpoints stay bare
        tokens.append(f"relu_pe:{params.activation.n_freqs}")
    flat = flatten_params(params)
    with open(path, "wb") as fh:
        fh.write((" ".join(tokens) + "\n").encode("ascii"))
        fh.write(flat.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n")
    if nl < 0:
        raise FormatError("checkpoint header has no newline", 0)
    try:
        tokens = blob[:nl].decode("ascii").split()
    except UnicodeDecodeError as exc:
        raise FormatError("checkpoint header is not ASCII", exc.start) from None
    if not tokens or tokens[0] != _MAGIC:
        raise FormatError(f"bad checkpoint magic {tokens[:1]!r}", 0)
    try:
        depth = int(tokens[1])
        dims = [int(t) for t in tokens[2:3 + depth]]
        omega0, omega_h = float(tokens[3 + depth]), float(tokens[4 + depth])
    except (IndexError, ValueError):
        raise FormatError("malformed checkpoint header", 0) from None
    activation = SineField()
    extra = tokens[5 + depth:]
    if extra:
        if len(extra) != 1 or not extra[0].startswith("relu_pe:"):
            raise FormatError(f"unknown checkpoint header tokens {extra!r}", 0)
        activation = ReluPosEnc(int(extra[0].split(":", 1)[1]))
    n = sum(dims[i + 1] * (dims[i] + 1) for i in range(depth))
    payload = blob[nl + 1:]
    if len(payload) != 8 * n:
        raise FormatError(f"checkpoint payload has {len(payload)} bytes, expected {8 * n}", nl + 1 + len(payload))
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    layers, pos = [], 0
    for i in range(depth):
        rows, cols = dims[i + 1], dims[i]
        W = flat[pos:pos + rows * cols].reshape(rows, cols).copy()
        pos += rows * cols
        b = flat[pos:pos + rows].copy()
        pos += rows
        layers.append((W, b))
    return SnfParams(layers, omega0, omega_h, activation)


__all__ = [
    "SineField",
    "ReluPosEnc",
    "SnfParams",
    "ForwardTrace",
    "positional_encode",
    "forward",
    "backward",
    "per_example_grad",
    "predict",
    "flatten_grads",
    "flatten_params",
    "unflatten_params",
    "save_checkpoint",
    "load_checkpoint",
]
