"""Command-line front end.

    sinefield [--config FILE] [--out DIR] [--seed N] [--set KEY=VALUE ...] VERB

Verbs: fit, sweep, spectrum, bands, ntk, distcheck, gradscale, expand.
Exit codes: 0 success, 1 usage/config error, 2 numerical error, 3 IO error.
"""

import argparse
import io
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from . import analysis, data
from .errors import (
    ConfigError,
    DivergenceError,
    FormatError,
    InvalidInputError,
    OutOfRangeError,
    ResourceError,
    SineFieldError,
)
from .init import DEFAULT_ALPHA, InitSpec, initialize, lr_plan_functional_only, lr_plan_gradient_only, uniform_plan
from .model import load_checkpoint, predict, save_checkpoint
from .numcore import Prng
from .train import TrainConfig, train

TASKS = ("image", "audio", "sphere", "occupancy", "synth")
PLANS = ("uniform", "functional_only", "gradient_only")
VERBS = ("fit", "sweep", "spectrum", "bands", "ntk", "distcheck", "gradscale", "expand")

# per-task (omega0, alpha, lr)
TASK_DEFAULTS = {
    "image": (30.0, DEFAULT_ALPHA["image"], 1e-4),
    "occupancy": (10.0, DEFAULT_ALPHA["occupancy"], 1e-4),
    "sphere": (30.0, DEFAULT_ALPHA["sphere"], 1e-5),
    "audio": (3000.0, DEFAULT_ALPHA["audio"], 1e-4),
    "synth": (30.0, 2.0, 1e-4),
}

SWEEP_BASELINE_ALPHA = 1.0


@dataclass
class ExperimentConfig:
    task: str = "image"
    data_path: str = ""
    depth: int = 5
    width: int = 64
    omega0: float = 30.0
    omega_h: float = 30.0
    init: str = "ws"
    alpha: float = DEFAULT_ALPHA["image"]
    lr: float = 1e-4
    optimizer: str = "adam"
    steps: int = 500
    batch: int = 0  # 0 = full batch
    target_psnr: float = 30.0
    train_stride: int = 2
    eval_every: int = 1
    stop_at_target: bool = False
    plan: str = "uniform"
    seed: int = 0
    out_dir: str = "out"
    checkpoint: str = ""
    sweep_param: str = ""
    sweep_lo: float = 1.0
    sweep_hi: float = 4.0
    sweep_step: float = 0.2
    n_grid: int = 1024
    n_bands: int = 8
    n_samples: int = 100_000
    n_seeds: int = 20
    k: int = 5
    w1: float = 1.0
    w2: float = 0.5
    w3: float = 1.0
    l_max: int = 31

    @property
    def init_spec(self):
        return InitSpec.parse(self.init, seed=self.seed, alpha=self.alpha)

    @property
    def dims(self):
        return [self.coord_dim] + [self.width] * (self.depth - 1) + [1]

    @property
    def coord_dim(self):
        return {"image": 2, "audio": 1, "synth": 1, "sphere": 3, "occupancy": 3}[self.task]

    def train_config(self, **overrides):
        base = dict(
            max_steps=self.steps,
            lr=self.lr,
            optimizer=self.optimizer,
            batch_size=self.batch or None,
            target_train_psnr=self.target_psnr,
            eval_every=self.eval_every,
            seed=self.seed,
            stop_at_target=self.stop_at_target,
        )
        base.update(overrides)
        return TrainConfig(**base)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_POSITIVE = {
    "depth", "width", "omega0", "omega_h", "alpha", "lr", "train_stride", "eval_every",
    "sweep_step", "n_grid", "n_bands", "n_samples", "n_seeds", "k", "l_max",
}
_NON_NEGATIVE = {"steps", "batch", "seed"}


def _convert(name, raw, lineno):
    kind = _FIELDS[name].type
    try:
        if kind in (int, "int"):
            return int(raw, 0)
        if kind in (float, "float"):
            return float(raw)
        if kind in (bool, "bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {raw!r} for {name}") from None
    return raw


def parse_config(text, overrides=()):
    """Parse ``key = value`` lines ('#' starts a comment).

    Missing keys take defaults; ``omega0``, ``alpha`` and ``lr`` default per task.
    ``overrides`` are extra ``key=value`` strings applied after the file.
    """
    values = {}
    lines = [(i, line) for i, line in enumerate(text.splitlines(), 1)]
    lines += [("--set", o) for o in overrides]
    for lineno, line in lines:
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, raw = body.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key or not raw:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw, lineno)
    task = values.get("task", "image")
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}")
    omega0, alpha, lr = TASK_DEFAULTS[task]
    cfg = ExperimentConfig(omega0=omega0, alpha=alpha, lr=lr)
    cfg = replace(cfg, **values)
    validate(cfg)
    return cfg


def validate(cfg):
    for name in _POSITIVE:
        v = getattr(cfg, name)
        if not (v > 0 and math.isfinite(v)):
            raise ConfigError(f"{name} must be positive, got {v}")
    for name in _NON_NEGATIVE:
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be non-negative, got {getattr(cfg, name)}")
    if cfg.optimizer not in ("adam", "gd"):
        raise ConfigError(f"optimizer must be adam or gd, got {cfg.optimizer!r}")
    if cfg.plan not in PLANS:
        raise ConfigError(f"plan must be one of {', '.join(PLANS)}, got {cfg.plan!r}")
    if cfg.sweep_param not in ("", "alpha", "omega0"):
        raise ConfigError(f"sweep_param must be alpha or omega0, got {cfg.sweep_param!r}")
    if cfg.sweep_lo > cfg.sweep_hi:
        raise ConfigError("sweep_lo must not exceed sweep_hi")
    if cfg.l_max % 2 == 0:
        raise ConfigError("l_max must be odd")
    try:
        cfg.init_spec
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def load_task_data(cfg):
    path = cfg.data_path
    if cfg.task == "image":
        img = data.load_pgm(path) if path else data.bundled_image()
        return data.make_image_dataset(img, cfg.train_stride)
    if cfg.task == "audio":
        samples = data.load_wav_pcm16_mono(path) if path else data.default_audio()
        return data.make_audio_dataset(samples, cfg.train_stride)
    if cfg.task == "sphere":
        if path:
            return data.load_sphere_csv(path)
        phi, theta = data.sphere_grid()
        return data.make_sphere_dataset(phi, theta, data.default_sphere_field(phi, theta))
    if cfg.task == "occupancy":
        return data.load_dataset_csv(path) if path else data.make_occupancy_dataset(data.sphere_voxels())
    if path:
        return data.load_dataset_csv(path)
    return data.synth_signal([(1.0, 2.0, 0.0), (0.5, 7.0, 0.3), (0.25, 19.0, 1.1)], 512)


def build_params(cfg, seed=None, alpha=None, omega0=None):
    spec = cfg.init_spec
    if seed is not None:
        spec = replace(spec, seed=seed)
    if alpha is not None:
        spec = replace(spec, scheme="ws", alpha=alpha)
    if cfg.checkpoint and seed is None and alpha is None and omega0 is None:
        return load_checkpoint(cfg.checkpoint)
    return initialize(spec, cfg.dims, cfg.omega0 if omega0 is None else omega0, cfg.omega_h)


def build_plan(cfg, depth):
    spec = cfg.init_spec
    a = spec.alpha if spec.scheme == "ws" else cfg.alpha
    if cfg.plan == "functional_only":
        return lr_plan_functional_only(a, depth, cfg.lr)
    if cfg.plan == "gradient_only":
        return lr_plan_gradient_only(a, depth, cfg.lr)
    return uniform_plan(depth, cfg.lr)


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _out(cfg, name):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def _fmt(x):
    return format(float(x), ".12g")


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------


def run_fit(cfg, log=None):
    log = log or sys.stdout
    ds = load_task_data(cfg)
    params = build_params(cfg)
    trained, report = train(params, ds, cfg.train_config(), build_plan(cfg, params.depth))
    report.write_csv(_out(cfg, "report.csv"))
    save_checkpoint(_out(cfg, "checkpoint.snf"), trained)
    last = report.final
    reached = "none" if report.steps_to_target is None else report.steps_to_target
    print(f"steps_to_target={reached} final_train_psnr={last.train_psnr_db:.3f}", file=log)
    return report


def sweep_grid(lo, hi, step):
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [round(lo + i * step, 10) for i in range(n + 1)]


@dataclass
class SweepRow:
    value: float
    steps_to_target: Optional[int]
    speed: Optional[float]
    final_test_psnr: float
    constraint_ok: bool = False


def _sweep_point(cfg, ds, value):
    if cfg.sweep_param == "alpha":
        params = build_params(cfg, seed=cfg.seed, alpha=value)
    else:
        params = build_params(cfg, seed=cfg.seed, omega0=value)
    tcfg = cfg.train_config(stop_at_target=True)
    _, rep = train(params, ds, tcfg, uniform_plan(params.depth, cfg.lr))
    last = rep.final
    test = last.test_psnr_db if last.test_psnr_db is not None else last.train_psnr_db
    spd = None if rep.steps_to_target is None else 1.0 / max(rep.steps_to_target, 1)
    return SweepRow(value, rep.steps_to_target, spd, test)


def select_optimum(rows, baseline):
    """Mark feasible rows and return the fastest one (ties go to the smaller value).

    A row is feasible when its test PSNR is at least 0.95 of the baseline row's.
    """
    base = [r for r in rows if r.value == baseline]
    if not base:
        raise ConfigError(f"sweep grid must include the baseline value {baseline:g}")
    floor = 0.95 * base[0].final_test_psnr
    best = None
    for r in sorted(rows, key=lambda r: r.value):
        r.constraint_ok = r.final_test_psnr >= floor
        if r.constraint_ok and r.speed is not None and (best is None or r.speed > best.speed):
            best = r
    return best


def sweep_csv(rows):
    out = io.StringIO()
    out.write("value,steps_to_target,speed,final_test_psnr,constraint_ok\n")
    for r in rows:
        steps = "" if r.steps_to_target is None else str(r.steps_to_target)
        spd = "" if r.speed is None else _fmt(r.speed)
        out.write(f"{_fmt(r.value)},{steps},{spd},{_fmt(r.final_test_psnr)},{int(r.constraint_ok)}\n")
    return out.getvalue()


def run_sweep(cfg, log=None):
    log = log or sys.stdout
    if not cfg.sweep_param:
        cfg = replace(cfg, sweep_param="alpha")
    baseline = SWEEP_BASELINE_ALPHA if cfg.sweep_param == "alpha" else TASK_DEFAULTS[cfg.task][0]
    grid = sweep_grid(cfg.sweep_lo, cfg.sweep_hi, cfg.sweep_step)
    if baseline not in grid:
        raise ConfigError(f"sweep grid must include the baseline {cfg.sweep_param}={baseline:g}")
    ds = load_task_data(cfg)
    threads = max(1, int(os.environ.get("SINEFIELD_THREADS", "1") or 1))
    if threads == 1:
        rows = [_sweep_point(cfg, ds, v) for v in grid]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda v: _sweep_point(cfg, ds, v), grid))
    best = select_optimum(rows, baseline)
    _write(_out(cfg, "sweep.csv"), sweep_csv(rows))
    msg = "no feasible point" if best is None else f"optimum {cfg.sweep_param}={best.value:g}"
    _write(_out(cfg, "optimum.txt"), msg + "\n")
    print(msg, file=log)
    return rows, best


def _require_1d(cfg, kind):
    if cfg.coord_dim != 1:
        raise ConfigError(f"{kind} needs 1D data; task {cfg.task!r} is {cfg.coord_dim}D")


def run_analysis(cfg, kind, log=None):
    log = log or sys.stdout
    if kind == "spectrum":
        _require_1d(cfg, kind)
        res = analysis.model_spectrum_1d(build_params(cfg), cfg.n_grid)
        _write(_out(cfg, "spectrum.csv"), res.to_csv())
        print(f"centroid={res.centroid:.6g}", file=log)
    elif kind == "bands":
        if cfg.task != "image":
            raise ConfigError(f"bands needs an image task, got {cfg.task!r}")
        ds = load_task_data(cfg)
        H, W = ds.grid_shape
        target = ds.targets.reshape(H, W)
        model = predict(build_params(cfg), ds.coords).reshape(H, W)
        t = analysis.band_power_2d(target, cfg.n_bands)
        m = analysis.band_power_2d(model, cfg.n_bands)
        out = io.StringIO()
        out.write("band,count,target_mean,model_mean\n")
        for b in range(cfg.n_bands):
            out.write(f"{b},{t.counts[b]},{_fmt(t.means[b])},{_fmt(m.means[b])}\n")
        _write(_out(cfg, "bands.csv"), out.getvalue())
    elif kind == "ntk":
        rep = analysis.kernel_report(build_params(cfg), load_task_data(cfg), cfg.k)
        _write(_out(cfg, "kernel.csv"), rep.to_csv())
        _write(_out(cfg, "alignment.csv"), rep.alignment_csv())
        print(f"condition_number={rep.condition_number:.6g}", file=log)
    elif kind == "distcheck":
        rep = analysis.activation_dist_check(build_params(cfg), cfg.n_samples, Prng(cfg.seed ^ 0xD15C))
        _write(_out(cfg, "distcheck.csv"), rep.to_csv())
        print(f"max_ks={max(rep.per_layer_ks, default=0.0):.4g}", file=log)
    elif kind == "gradscale":
        ds = load_task_data(cfg)
        base = np.zeros(cfg.depth)
        scaled = np.zeros(cfg.depth)
        ratio = np.zeros(cfg.depth)
        for s in range(cfg.seed, cfg.seed + cfg.n_seeds):
            n1 = np.array(analysis.layerwise_grad_norms(build_params(cfg, seed=s, alpha=1.0), ds))
            na = np.array(analysis.layerwise_grad_norms(build_params(cfg, seed=s, alpha=cfg.alpha), ds))
            base += n1
            scaled += na
            ratio += na / n1
        n = cfg.n_seeds
        rows = [(i + 1, base[i] / n, scaled[i] / n, ratio[i] / n) for i in range(cfg.depth)]
        _write(_out(cfg, "gradscale.csv"), analysis.grad_norms_csv(rows))
    elif kind == "expand":
        coeffs = analysis.jacobi_anger_expand(cfg.w1, cfg.w2, cfg.w3, cfg.l_max)
        out = io.StringIO()
        out.write("l,coefficient,ratio,lower,upper,within\n")
        for l, c in coeffs:
            b = analysis.bessel_bound_check(cfg.w2, l)
            out.write(f"{l},{_fmt(c)},{_fmt(b.ratio)},{_fmt(b.lower)},{_fmt(b.upper)},{int(b.within)}\n")
        _write(_out(cfg, "expansion.csv"), out.getvalue())
    else:
        raise ConfigError(f"unknown analysis {kind!r}")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def exit_code(exc):
    if isinstance(exc, (ConfigError,)):
        return 1
    if isinstance(exc, (DivergenceError, OutOfRangeError, ResourceError, ArithmeticError)):
        return 2
    if isinstance(exc, (FormatError, OSError)):
        return 3
    if isinstance(exc, InvalidInputError):
        return 1
    return 2


def build_parser():
    p = argparse.ArgumentParser(prog="sinefield", description="Sine-network fitting and analysis.")
    p.add_argument("--config", help="key = value experiment file")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int, help="run seed (overrides seed)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("verb", choices=VERBS)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        text = ""
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        overrides = list(args.set)
        if args.out is not None:
            overrides.append(f"out_dir={args.out}")
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = parse_config(text, overrides)
        if args.verb == "fit":
            run_fit(cfg)
        elif args.verb == "sweep":
            run_sweep(cfg)
        else:
            run_analysis(cfg, args.verb)
    except (SineFieldError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
