"""Dataset ingestion (PGM, WAV, CSV) and coordinate/target construction.

Every constructor returns a :class:`SignalDataset` whose coordinates lie in
[-1, 1]^d0 and whose targets are normalized to [0, 1] (peak 1).
"""

import csv
import io
import struct
import wave
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Tuple

import numpy as np

from .errors import FormatError, InvalidInputError, UnsupportedFormatError


@dataclass
class SignalDataset:
    coords: np.ndarray  # d0 x N
    targets: np.ndarray  # dout x N
    train_idx: np.ndarray
    test_idx: np.ndarray
    peak: float = 1.0
    grid_shape: Optional[Tuple[int, ...]] = None  # sample layout when gridded

    def __post_init__(self):
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=np.float64))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        self.train_idx = np.asarray(self.train_idx, dtype=np.int64)
        self.test_idx = np.asarray(self.test_idx, dtype=np.int64)
        n = self.coords.shape[1]
        if self.targets.shape[1] != n:
            raise InvalidInputError(f"{n} coordinates but {self.targets.shape[1]} targets")
        for name, idx in (("train", self.train_idx), ("test", self.test_idx)):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise InvalidInputError(f"{name} index out of range [0, {n})")
        if np.intersect1d(self.train_idx, self.test_idx).size:
            raise InvalidInputError("train and test indices overlap")

    @property
    def n(self):
        return self.coords.shape[1]

    @property
    def d0(self):
        return self.coords.shape[0]

    @property
    def train_coords(self):
        return self.coords[:, self.train_idx]

    @property
    def train_targets(self):
        return self.targets[:, self.train_idx]

    @property
    def test_coords(self):
        return self.coords[:, self.test_idx]

    @property
    def test_targets(self):
        return self.targets[:, self.test_idx]


def _all_train(n):
    return np.arange(n, dtype=np.int64), np.zeros(0, dtype=np.int64)


def _minmax(values):
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if not hi > lo:
        raise InvalidInputError("constant signal: min-max normalization undefined")
    return (values - lo) / (hi - lo)


def grid_coords(n):
    """Cell centers of ``n`` equal cells on [-1, 1]: 2(i + 0.5)/n - 1."""
    return 2.0 * (np.arange(n) + 0.5) / n - 1.0


# ---------------------------------------------------------------------------
# PGM (binary P5, maxval 255)
# ---------------------------------------------------------------------------


def _pgm_header(buf):
    """Return (width, height, maxval, payload offset)."""
    if buf[:2] != b"P5":
        raise FormatError(f"bad PGM magic {bytes(buf[:2])!r}; only binary P5 is supported", 0)
    if not buf[2:3].isspace():
        raise FormatError("PGM magic must be followed by whitespace", 2)
    pos = 2
    fields = []
    while len(fields) < 3:
        start = pos
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos == start and fields:
            raise FormatError("missing whitespace in PGM header", pos)
        tok_start = pos
        while pos < len(buf) and buf[pos:pos + 1].isdigit():
            pos += 1
        if pos == tok_start:
            raise FormatError("expected a decimal number in PGM header", pos)
        fields.append(int(buf[tok_start:pos]))
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise FormatError("PGM header must end with one whitespace byte", pos)
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"unsupported PGM maxval {maxval} (need 255)", tok_start)
    if width < 1 or height < 1:
        raise FormatError(f"empty PGM image {width}x{height}", 2)
    return width, height, maxval, pos + 1


def parse_pgm(buf):
    width, height, _, off = _pgm_header(buf)
    need = width * height
    payload = buf[off:off + need]
    if len(payload) < need:
        raise FormatError(f"PGM payload truncated: {len(payload)} of {need} bytes", off + len(payload))
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).astype(np.float64) / 255.0


def load_pgm(path):
    """Grayscale image as a ``height x width`` array of pixel/255."""
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def save_pgm(path, image):
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidInputError("save_pgm expects a 2D array")
    raw = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(raw.tobytes())


def bundled_image():
    """The 32x32 grayscale test image shipped with the package."""
    return parse_pgm(resources.files("sinefield").joinpath("assets/test32.pgm").read_bytes())


# ---------------------------------------------------------------------------
# WAV (RIFF, PCM16 mono)
# ---------------------------------------------------------------------------


def parse_wav_pcm16_mono(buf):
    if len(buf) < 12 or buf[:4] != b"RIFF" or buf[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE file", 0)
    pos = 12
    fmt = None
    while pos + 8 <= len(buf):
        cid = buf[pos:pos + 4]
        (size,) = struct.unpack_from("<I", buf, pos + 4)
        body = pos + 8
        if cid == b"fmt ":
            if size < 16 or body + 16 > len(buf):
                raise FormatError("fmt chunk too short", body)
            audio_format, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", buf, body)
            if audio_format != 1:
                raise UnsupportedFormatError("audioFormat", audio_format, body)
            if channels != 1:
                raise UnsupportedFormatError("channels", channels, body + 2)
            if bits != 16:
                raise UnsupportedFormatError("bitsPerSample", bits, body + 14)
            fmt = rate
        elif cid == b"data":
            if fmt is None:
                raise FormatError("data chunk before fmt chunk", pos)
            if size % 2:
                raise FormatError(f"data chunk length {size} is odd for 16-bit samples", pos + 4)
            if body + size > len(buf):
                raise FormatError(f"data chunk truncated: {len(buf) - body} of {size} bytes", len(buf))
            samples = np.frombuffer(buf[body:body + size], dtype="<i2").astype(np.float64) / 32768.0
            return samples, fmt
        pos = body + size + (size & 1)
    raise FormatError("no data chunk found", pos)


def load_wav_pcm16_mono(path):
    """Samples int16/32768 in [-1, 1) from a PCM16 mono WAV file."""
    with open(path, "rb") as fh:
        samples, _ = parse_wav_pcm16_mono(fh.read())
    return samples


def save_wav_pcm16_mono(path, samples, rate=16000):
    ints = np.clip(np.rint(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(ints.tobytes())


# ---------------------------------------------------------------------------
# dataset constructors
# ---------------------------------------------------------------------------


def make_image_dataset(img, train_stride=2):
    """Pixels on the stride grid are train, all others test.

    Coordinates are pixel centers, ``(x, y) = (2(col+0.5)/W - 1, 2(row+0.5)/H - 1)``,
    enumerated row-major.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidInputError(f"expected a 2D grayscale image, got shape {img.shape}")
    if train_stride < 1:
        raise InvalidInputError(f"train stride must be >= 1, got {train_stride}")
    H, W = img.shape
    if H < train_stride or W < train_stride:
        raise InvalidInputError(f"image {H}x{W} smaller than stride {train_stride}")
    rows, cols = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    coords = np.stack([grid_coords(W)[cols.ravel()], grid_coords(H)[rows.ravel()]])
    on_grid = ((rows % train_stride == 0) & (cols % train_stride == 0)).ravel()
    idx = np.arange(H * W)
    return SignalDataset(coords, img.reshape(1, -1), idx[on_grid], idx[~on_grid], 1.0, (H, W))


def pixel_indices(coords, shape, tol=1e-9):
    """Invert the pixel-center map to integer ``(row, col)`` arrays.

    Coordinates farther than ``tol`` pixels from a pixel center are rejected.
    """
    H, W = shape
    col = (np.asarray(coords[0]) + 1.0) * W / 2.0 - 0.5
    row = (np.asarray(coords[1]) + 1.0) * H / 2.0 - 0.5
    r, c = np.rint(row), np.rint(col)
    if np.any(np.abs(row - r) > tol) or np.any(np.abs(col - c) > tol):
        raise InvalidInputError("coordinates are not pixel centers")
    return r.astype(np.int64), c.astype(np.int64)


def make_audio_dataset(samples, train_stride=1):
    """Time stamps at cell centers of [-1, 1]; amplitudes mapped (s+1)/2."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size < 2:
        raise InvalidInputError("audio needs at least two samples")
    if train_stride < 1:
        raise InvalidInputError(f"train stride must be >= 1, got {train_stride}")
    idx = np.arange(s.size)
    on = idx % train_stride == 0
    return SignalDataset(grid_coords(s.size)[None, :], (s[None, :] + 1.0) / 2.0, idx[on], idx[~on], 1.0, (s.size,))


def lift_sphere(phi, theta):
    """(phi, theta) -> (cos phi cos theta, cos phi sin theta, sin phi)."""
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    return np.stack([np.cos(phi) * np.cos(theta), np.cos(phi) * np.sin(theta), np.sin(phi)])


def make_sphere_dataset(phi, theta, values):
    """Latitude/longitude samples lifted to the unit sphere; values min-max normalized."""
    phi = np.asarray(phi, dtype=np.float64).ravel()
    theta = np.asarray(theta, dtype=np.float64).ravel()
    values = np.asarray(values, dtype=np.float64).ravel()
    if not phi.size == theta.size == values.size or phi.size == 0:
        raise InvalidInputError("phi, theta and values must be equal-length and non-empty")
    if np.any(np.abs(phi) > np.pi / 2) or np.any(np.abs(theta) > np.pi):
        raise InvalidInputError("angles out of range: phi in [-pi/2, pi/2], theta in [-pi, pi]")
    coords = np.clip(lift_sphere(phi, theta), -1.0, 1.0)
    train, test = _all_train(phi.size)
    return SignalDataset(coords, _minmax(values)[None, :], train, test, 1.0)


def sphere_grid(n_lat=46, n_lon=90):
    """Equiangular (phi, theta) grid with cell-centered latitudes."""
    phi = (np.arange(n_lat) + 0.5) * np.pi / n_lat - np.pi / 2
    theta = np.arange(n_lon) * 2 * np.pi / n_lon - np.pi
    P, T = np.meshgrid(phi, theta, indexing="ij")
    return P.ravel(), T.ravel()


def make_occupancy_dataset(grid):
    """Voxel centers in [-1, 1]^3 with binary targets."""
    grid = np.asarray(grid)
    if grid.ndim != 3 or grid.size == 0:
        raise InvalidInputError(f"expected a non-empty 3D voxel grid, got shape {grid.shape}")
    occ = grid.astype(bool)
    axes = [grid_coords(n) for n in grid.shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh])
    train, test = _all_train(grid.size)
    return SignalDataset(coords, occ.ravel()[None, :].astype(np.float64), train, test, 1.0, grid.shape)


def sphere_voxels(n=32, radius=0.5):
    """Boolean n^3 grid: voxel centers inside a ball of ``radius``."""
    c = grid_coords(n)
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    return X**2 + Y**2 + Z**2 <= radius**2


def synth_signal(components, n):
    """Sum of sines ``a sin(2 pi f t + phase)`` sampled at t_j = -1 + 2j/n.

    The grid covers [-1, 1) without the right endpoint so periodic
    components land on exact DFT bins. Output is min-max normalized.
    """
    components = list(components)
    if not components:
        raise InvalidInputError("synth_signal needs at least one component")
    if n < 2:
        raise InvalidInputError("synth_signal needs n >= 2")
    t = -1.0 + 2.0 * np.arange(n) / n
    s = np.zeros(n)
    for amp, freq, phase in components:
        s += amp * np.sin(2 * np.pi * freq * t + phase)
    train, test = _all_train(n)
    return SignalDataset(t[None, :], _minmax(s)[None, :], train, test, 1.0, (n,))


# ---------------------------------------------------------------------------
# CSV dump: x0,...,x{d-1},target
# ---------------------------------------------------------------------------


def dataset_to_csv(ds):
    if ds.targets.shape[0] != 1:
        raise InvalidInputError("CSV dump supports scalar targets only")
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(ds.d0)] + ["target"])
    for j in range(ds.n):
        w.writerow([repr(float(v)) for v in ds.coords[:, j]] + [repr(float(ds.targets[0, j]))])
    return out.getvalue()


def save_dataset_csv(path, ds):
    with open(path, "w", newline="") as fh:
        fh.write(dataset_to_csv(ds))


def load_dataset_csv(path):
    """Read a CSV dump back; every row becomes a training sample."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError("empty CSV dataset", 0)
    header = rows[0]
    d0 = len(header) - 1
    if d0 < 1 or header != [f"x{i}" for i in range(d0)] + ["target"]:
        raise FormatError(f"bad CSV header {header!r}", 0)
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"non-numeric CSV value: {exc}") from None
    if data.size == 0 or data.shape[1] != d0 + 1:
        raise FormatError("CSV dataset has no rows or ragged rows")
    coords = data[:, :d0].T
    if np.any(np.abs(coords) > 1.0):
        raise InvalidInputError("CSV coordinates must lie in [-1, 1]")
    train, test = _all_train(data.shape[0])
    return SignalDataset(coords, data[:, d0][None, :], train, test, 1.0)


def load_sphere_csv(path):
    """Read a ``phi,theta,value`` grid (radians) and lift it to the sphere."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["phi", "theta", "value"]:
        raise FormatError("sphere CSV needs header phi,theta,value", 0)
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"non-numeric CSV value: {exc}") from None
    if data.ndim != 2 or data.shape[1] != 3:
        raise FormatError("sphere CSV rows must have three columns")
    return make_sphere_dataset(data[:, 0], data[:, 1], data[:, 2])


def default_sphere_field(phi, theta):
    """Smooth synthetic temperature-like field used when no CSV is given."""
    return np.cos(phi) ** 2 + 0.3 * np.sin(3 * theta) * np.cos(phi) + 0.1 * np.sin(7 * phi + 2 * theta)


def default_audio(n=16000):
    """Deterministic chirp-plus-tones test clip in [-1, 1)."""
    t = np.arange(n) / n
    s = 0.5 * np.sin(2 * np.pi * (40 * t + 300 * t**2)) + 0.3 * np.sin(2 * np.pi * 1100 * t)
    s += 0.15 * np.sin(2 * np.pi * 2500 * t) * np.exp(-3 * t)
    return np.clip(s, -1.0, 1.0 - 2.0**-15)

