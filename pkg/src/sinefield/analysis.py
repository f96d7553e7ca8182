"""Measurement instruments for sine networks at a parameter snapshot."""

import io
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import InvalidInputError, OutOfRangeError, ResourceError, ShapeError
from .model import SnfParams, activation_grad, backward, forward, per_example_grad, predict
from .numcore import bessel_j, dft, dft1d, sym_eig, uniform_fill

ENTK_MAX_POINTS = 4096
MIN_DIST_SAMPLES = 10_000


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------


@dataclass
class SpectrumResult:
    frequencies: np.ndarray  # cycles per unit of x
    magnitudes: np.ndarray
    centroid: float

    def to_csv(self):
        out = io.StringIO()
        out.write("bin,frequency,magnitude\n")
        for k, (f, m) in enumerate(zip(self.frequencies, self.magnitudes)):
            out.write(f"{k},{_fmt(f)},{_fmt(m)}\n")
        return out.getvalue()


def spectral_centroid(frequencies, magnitudes):
    total = float(np.sum(magnitudes))
    if total == 0.0:
        return 0.0
    return float(np.dot(frequencies, magnitudes) / total)


def model_spectrum_1d(params, n_grid=1024):
    """Magnitude spectrum of the network output on ``n_grid`` points of [-1, 1).

    The mean is removed first so the DC bin does not dominate the centroid.
    Bin k sits at k/2 cycles per unit because the grid spans length 2.
    """
    if params.coord_dim != 1:
        raise InvalidInputError(f"1D spectrum needs a 1D-input network, got d0={params.coord_dim}")
    if params.dims[-1] != 1:
        raise InvalidInputError("1D spectrum needs a scalar-output network")
    if n_grid < 2:
        raise InvalidInputError("spectrum needs at least 2 grid points")
    x = -1.0 + 2.0 * np.arange(n_grid) / n_grid
    y = predict(params, x[None, :])[0]
    mags = dft1d(y - y.mean())[: n_grid // 2 + 1]
    freqs = np.arange(mags.size) / 2.0
    return SpectrumResult(freqs, mags, spectral_centroid(freqs, mags))


@dataclass
class BandPower:
    means: np.ndarray
    sums: np.ndarray
    counts: np.ndarray


def _signed_freqs(n):
    k = np.arange(n)
    return np.where(k < (n + 1) // 2, k, k - n)


def band_power_2d(image, n_bands):
    """2D DFT magnitudes grouped into ``n_bands`` radial bands.

    A bin at integer radius ``r`` lands in band ``floor(r) * n_bands // (floor(r_max) + 1)``,
    so with ``n_bands = floor(r_max) + 1`` each band is one integer radius.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise InvalidInputError(f"band power needs a square image, got shape {img.shape}")
    if n_bands < 1:
        raise InvalidInputError("n_bands must be >= 1")
    n = img.shape[0]
    mags = np.abs(dft(dft(img).T).T)
    f = _signed_freqs(n)
    r = np.floor(np.sqrt(f[:, None] ** 2 + f[None, :] ** 2)).astype(np.int64)
    band = np.minimum(r * n_bands // (int(r.max()) + 1), n_bands - 1)
    sums = np.bincount(band.ravel(), weights=mags.ravel(), minlength=n_bands)
    counts = np.bincount(band.ravel(), minlength=n_bands)
    means = np.divide(sums, counts, out=np.zeros(n_bands), where=counts > 0)
    return BandPower(means, sums, counts)


# ---------------------------------------------------------------------------
# width-1 depth-3 harmonic expansion
# ---------------------------------------------------------------------------


def jacobi_anger_expand(w1, w2, w3, l_max):
    """Odd-harmonic coefficients ``[(l, 2*w3*J_l(w2))]`` for l = 1, 3, ..., l_max.

    The bias-free width-1 network ``w3 * sin(w2 * sin(w1 * x))`` equals
    ``sum_l c_l * sin(l * w1 * x)`` over odd l.
    """
    if int(l_max) != l_max or l_max < 1 or l_max % 2 == 0:
        raise InvalidInputError(f"l_max must be a positive odd integer, got {l_max}")
    return [(l, 2.0 * w3 * bessel_j(l, w2)) for l in range(1, int(l_max) + 1, 2)]


def jacobi_anger_eval(coeffs, w1, x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for l, c in coeffs:
        out = out + c * np.sin(l * w1 * x)
    return out


def jacobi_anger_network(w1, w2, w3):
    """The width-1 depth-3 bias-free network with unit frequency multipliers."""
    z = np.zeros(1)
    layers = [(np.array([[w1]], float), z.copy()), (np.array([[w2]], float), z.copy()), (np.array([[w3]], float), z.copy())]
    return SnfParams(layers, omega0=1.0, omega_h=1.0)


@dataclass(frozen=True)
class BesselBound:
    ratio: float
    lower: float
    upper: float
    within: bool


def bessel_bound_check(w2, l):
    """Ratio J_{l+2}(w2)/J_l(w2) against its closed-form sandwich.

    lower = w2^2/((2l+2)(2l+4)), upper = w2^2/((2l+1)(2l+3)).
    """
    if not 0.0 < w2 < math.pi / 2:
        raise OutOfRangeError(f"w2 must lie in (0, pi/2), got {w2}")
    if int(l) != l or l < 1:
        raise InvalidInputError(f"l must be a positive integer, got {l}")
    ratio = bessel_j(l + 2, w2) / bessel_j(l, w2)
    lower = w2 * w2 / ((2 * l + 2) * (2 * l + 4))
    upper = w2 * w2 / ((2 * l + 1) * (2 * l + 3))
    return BesselBound(ratio, lower, upper, lower < ratio < upper)


# ---------------------------------------------------------------------------
# activation distribution
# ---------------------------------------------------------------------------


def arcsine_cdf(x):
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
    return (2.0 / np.pi) * np.arcsin(np.sqrt((x + 1.0) / 2.0))


def ks_distance(samples, cdf=arcsine_cdf):
    """Sup-distance between the empirical CDF of ``samples`` and ``cdf``."""
    s = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = s.size
    if n == 0:
        raise InvalidInputError("KS distance of an empty sample")
    F = cdf(s)
    i = np.arange(n)
    return float(max(np.max((i + 1) / n - F), np.max(F - i / n)))


@dataclass
class DistCheckReport:
    layers: List[int]  # 1-based hidden-layer indices
    per_layer_ks: List[float]
    per_layer_variance: List[float]
    samples: int

    def to_csv(self):
        out = io.StringIO()
        out.write("layer,ks,variance\n")
        for i, k, v in zip(self.layers, self.per_layer_ks, self.per_layer_variance):
            out.write(f"{i},{_fmt(k)},{_fmt(v)}\n")
        return out.getvalue()


def activation_dist_check(params, n_samples, rng, chunk=10_000):
    """Compare hidden activations to the arcsine law on uniform inputs.

    For every hidden layer from the second on, one activation per input
    (input j reads neuron j mod width) feeds the KS distance. The variance
    is that of ``omega_h * W @ z`` over all neurons and inputs, i.e. the
    pre-activation without its bias; for a weight-scaled init it is about
    alpha^2.
    """
    if n_samples < MIN_DIST_SAMPLES:
        raise InvalidInputError(f"need at least {MIN_DIST_SAMPLES} samples, got {n_samples}")
    hidden = list(range(2, params.depth))  # 1-based, layers 2..l-1
    picks = {i: np.empty(n_samples) for i in hidden}
    s1 = {i: 0.0 for i in hidden}
    s2 = {i: 0.0 for i in hidden}
    count = {i: 0 for i in hidden}
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        X = uniform_fill(rng, params.coord_dim, m, -1.0, 1.0)
        tr = forward(params, X)
        cols = np.arange(m)
        for i in hidden:
            act = tr.activations[i - 1]
            picks[i][done:done + m] = act[(done + cols) % act.shape[0], cols]
            W = params.layers[i - 1][0]
            z = params.omega(i - 1) * (W @ tr.activations[i - 2])
            s1[i] += float(z.sum())
            s2[i] += float(np.sum(z * z))
            count[i] += z.size
        done += m
    ks = [ks_distance(picks[i]) for i in hidden]
    var = []
    for i in hidden:
        mean = s1[i] / count[i]
        var.append(s2[i] / count[i] - mean * mean)
    return DistCheckReport(hidden, ks, var, n_samples)


# ---------------------------------------------------------------------------
# empirical NTK
# ---------------------------------------------------------------------------


def _coords(params, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :] if params.coord_dim == 1 else X[:, None]
    return X


def entk_jacobian(params, X):
    """Rows are per-example parameter gradients of the scalar output."""
    X = _coords(params, X)
    n = X.shape[1]
    if n > ENTK_MAX_POINTS:
        raise ResourceError(f"eNTK on {n} points exceeds the {ENTK_MAX_POINTS}-point limit")
    G = np.empty((n, params.n_params))
    for j in range(n):
        G[j] = per_example_grad(params, X[:, j:j + 1])
    return G


def entk(params, X):
    """Gram matrix K[i, j] = <grad f(x_i), grad f(x_j)>."""
    G = entk_jacobian(params, X)
    return G @ G.T


def condition_number(eigenvalues, k=5):
    """Mean of the k largest |lambda| over the mean of the k smallest."""
    a = np.sort(np.abs(np.asarray(eigenvalues, dtype=np.float64)))[::-1]
    if k < 1 or a.size < 2 * k:
        raise InvalidInputError(f"need at least {2 * k} eigenvalues for k={k}, got {a.size}")
    bottom = a[-k:].mean()
    if bottom == 0.0:
        return math.inf
    return float(a[:k].mean() / bottom)


def default_thresholds():
    return np.logspace(-6.0, 0.0, 20)


def alignment_curve(eigs, vecs, residual, thresholds=None):
    """E(t): share of ``residual`` energy in eigendirections with |l_i|/|l_0| >= t."""
    e = np.asarray(residual, dtype=np.float64).ravel()
    vecs = np.asarray(vecs, dtype=np.float64)
    eigs = np.asarray(eigs, dtype=np.float64)
    if vecs.shape != (e.size, eigs.size):
        raise ShapeError(f"eigenvectors {vecs.shape} do not match residual {e.size} / eigenvalues {eigs.size}")
    norm2 = float(e @ e)
    if norm2 == 0.0:
        raise InvalidInputError("alignment is undefined for a zero residual")
    t = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    mag = np.abs(eigs)
    top = mag.max()
    rel = mag / top if top > 0 else np.zeros_like(mag)
    proj = (vecs.T @ e) ** 2 / norm2
    order = np.argsort(-rel, kind="stable")
    rel_sorted, cum = rel[order], np.cumsum(proj[order])
    out = []
    for th in t:
        n_in = int(np.count_nonzero(rel_sorted >= th))
        out.append((float(th), float(cum[n_in - 1]) if n_in else 0.0))
    return out


@dataclass
class KernelReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    condition_number: float
    alignment: List[Tuple[float, float]]
    residual_norm: float

    def to_csv(self):
        out = io.StringIO()
        out.write("index,eigenvalue\n")
        for i, lam in enumerate(self.eigenvalues):
            out.write(f"{i},{_fmt(lam)}\n")
        out.write(f"condition_number,{_fmt(self.condition_number)}\n")
        return out.getvalue()

    def alignment_csv(self):
        out = io.StringIO()
        out.write("threshold,energy\n")
        for t, e in self.alignment:
            out.write(f"{_fmt(t)},{_fmt(e)}\n")
        return out.getvalue()


def kernel_report(params, data, k=5, thresholds=None):
    """eNTK eigen-analysis on the training coordinates of ``data``."""
    X, Y = data.train_coords, data.train_targets
    K = entk(params, X)
    vals, vecs = sym_eig(K)
    resid = (Y - predict(params, X)).ravel()
    return KernelReport(
        vals,
        vecs,
        condition_number(vals, k),
        alignment_curve(vals, vecs, resid, thresholds),
        float(np.linalg.norm(resid)),
    )


# ---------------------------------------------------------------------------
# gradient probes
# ---------------------------------------------------------------------------


def layerwise_grad_norms(params, data):
    """Frobenius norm of each weight matrix's full-batch MSE gradient."""
    X, Y = data.train_coords, data.train_targets
    tr = forward(params, X)
    r = tr.output - Y
    grads = backward(params, tr, r * (2.0 / r.size))
    return [float(np.linalg.norm(gW)) for gW, _ in grads]


def layerwise_output_grad_norms(params, X):
    """RMS over inputs of ||d f(x) / d W_k||_F for each layer k.

    Unlike the MSE gradient, no residual-weighted sum over samples enters,
    so the per-layer scaling with the init is visible without cancellation.
    Uses ||delta z^T||_F = ||delta|| ||z|| per input.
    """
    if params.dims[-1] != 1:
        raise InvalidInputError("output gradients need a scalar-output network")
    tr = forward(params, _coords(params, X))
    delta = np.ones_like(tr.output)
    norms = [0.0] * params.depth
    for i in range(params.depth - 1, -1, -1):
        Z = tr.activations[i - 1] if i else tr.inputs
        norms[i] = float(np.sqrt(np.mean(np.sum(delta**2, axis=0) * np.sum(Z**2, axis=0))))
        if i:
            delta = (params.layers[i][0].T @ delta) * activation_grad(params, i - 1, tr.pre_activations[i - 1])
    return norms


def grad_norms_csv(rows):
    """``rows``: iterable of (layer, norm_alpha1, norm_alpha, ratio)."""
    out = io.StringIO()
    out.write("layer,norm_base,norm_scaled,ratio\n")
    for layer, a, b, r in rows:
        out.write(f"{layer},{_fmt(a)},{_fmt(b)},{_fmt(r)}\n")
    return out.getvalue()


def _fmt(x):
    return format(float(x), ".12g")
