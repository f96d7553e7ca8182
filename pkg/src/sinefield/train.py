"""Losses, metrics, optimizers and the step-indexed training loop."""

import io
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DivergenceError, InvalidInputError, ShapeError
from .init import uniform_plan
from .model import backward, forward, predict
from .numcore import Prng

PSNR_CAP = 99.0

# keeps the mini-batch stream independent of the init stream for equal seeds
_BATCH_STREAM = 0x5EEDBA7C


def mse(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {target.shape}")
    return float(np.mean((pred - target) ** 2))


def psnr(mse_value, peak=1.0):
    """10 log10(peak^2 / mse) in dB; an exact fit reports the 99 dB cap."""
    if mse_value < 0 or math.isnan(mse_value):
        raise InvalidInputError(f"mse must be non-negative, got {mse_value}")
    if peak <= 0:
        raise InvalidInputError(f"peak must be positive, got {peak}")
    if mse_value == 0:
        return PSNR_CAP
    return 10.0 * math.log10(peak * peak / mse_value)


def iou(pred, target, threshold=0.5):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {target.shape}")
    if not np.all((target == 0) | (target == 1)):
        raise InvalidInputError("IoU target must be binary")
    p = pred >= threshold
    t = target == 1
    union = np.count_nonzero(p | t)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & t) / union


@dataclass
class TrainConfig:
    max_steps: int = 1000
    lr: float = 1e-4
    optimizer: str = "adam"  # "adam" or "gd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: Optional[int] = None  # None = full batch
    target_train_psnr: float = 30.0
    eval_every: int = 1
    seed: int = 0
    stop_at_target: bool = False

    def __post_init__(self):
        if not self.lr > 0:
            raise InvalidInputError(f"lr must be positive, got {self.lr}")
        if self.optimizer not in ("adam", "gd"):
            raise InvalidInputError(f"unknown optimizer {self.optimizer!r}")
        if self.max_steps < 0 or self.eval_every < 1:
            raise InvalidInputError("max_steps must be >= 0 and eval_every >= 1")
        if not math.isfinite(self.target_train_psnr):
            raise InvalidInputError("target PSNR must be finite")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidInputError("batch_size must be positive")


@dataclass
class ReportRow:
    step: int
    train_mse: float
    train_psnr_db: float
    test_psnr_db: Optional[float]


@dataclass
class TrainReport:
    rows: List[ReportRow] = field(default_factory=list)
    steps_to_target: Optional[int] = None
    wall_ms: float = 0.0

    @property
    def final(self):
        return self.rows[-1]

    def to_csv(self):
        out = io.StringIO()
        out.write("step,train_mse,train_psnr_db,test_psnr_db\n")
        for r in self.rows:
            test = "" if r.test_psnr_db is None else _fmt(r.test_psnr_db)
            out.write(f"{r.step},{_fmt(r.train_mse)},{_fmt(r.train_psnr_db)},{test}\n")
        return out.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _fmt(x):
    return format(float(x), ".12g")


def speed(report):
    """Reciprocal of steps-to-target; reaching it at step 0 counts as one step."""
    if report.steps_to_target is None:
        return None
    return 1.0 / max(report.steps_to_target, 1)


class GradientDescent:
    def __init__(self, cfg):
        self.cfg = cfg

    def step(self, layers, grads, lrs):
        for (W, b), (gW, gb), lr in zip(layers, grads, lrs):
            W -= lr * gW
            b -= lr * gb


class Adam:
    def __init__(self, cfg):
        self.b1, self.b2, self.eps = cfg.beta1, cfg.beta2, cfg.eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, layers, grads, lrs):
        if self.m is None:
            self.m = [(np.zeros_like(gW), np.zeros_like(gb)) for gW, gb in grads]
            self.v = [(np.zeros_like(gW), np.zeros_like(gb)) for gW, gb in grads]
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, lr in enumerate(lrs):
            for j in range(2):
                g = grads[k][j]
                m = self.m[k][j]
                v = self.v[k][j]
                m *= self.b1
                m += (1.0 - self.b1) * g
                v *= self.b2
                v += (1.0 - self.b2) * g * g
                layers[k][j][...] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(cfg):
    return Adam(cfg) if cfg.optimizer == "adam" else GradientDescent(cfg)


def train(params, data, cfg, plan=None):
    """Fit ``params`` to ``data.train`` and return ``(trained_params, report)``.

    Layer k moves with ``cfg.lr * plan.per_layer_multiplier[k]``. Metrics are
    recorded at step 0, every ``eval_every`` steps and at the last step;
    ``steps_to_target`` is the first recorded step whose train PSNR meets
    the target. The input ``params`` are left untouched.
    """
    if params.coord_dim != data.d0:
        raise ShapeError(f"network takes {params.coord_dim}-d coordinates, data has {data.d0}")
    if params.dims[-1] != data.targets.shape[0]:
        raise ShapeError(f"network outputs {params.dims[-1]} values, data has {data.targets.shape[0]}")
    plan = plan or uniform_plan(params.depth, cfg.lr)
    if len(plan.per_layer_multiplier) != params.depth:
        raise InvalidInputError(f"plan has {len(plan.per_layer_multiplier)} multipliers for {params.depth} layers")
    n_train = data.train_idx.size
    if n_train == 0:
        raise InvalidInputError("dataset has no training samples")
    if cfg.batch_size is not None and cfg.batch_size > n_train:
        raise InvalidInputError(f"batch_size {cfg.batch_size} exceeds the {n_train} training samples")
    full = cfg.batch_size is None or cfg.batch_size == n_train

    P = params.copy()
    lrs = [cfg.lr * m for m in plan.per_layer_multiplier]
    opt = make_optimizer(cfg)
    batch_rng = None if full else Prng(cfg.seed ^ _BATCH_STREAM)
    Xtr, Ytr = data.train_coords, data.train_targets
    Xte, Yte = data.test_coords, data.test_targets
    has_test = data.test_idx.size > 0

    report = TrainReport()
    t0 = time.perf_counter()
    for step in range(cfg.max_steps + 1):
        record = step % cfg.eval_every == 0 or step == cfg.max_steps
        if full:
            trace = forward(P, Xtr)
            resid = trace.output - Ytr
            loss = float(np.mean(resid**2))
            if not math.isfinite(loss):
                raise DivergenceError(step, loss)
            train_loss = loss
        else:
            sel = batch_rng.randbelow(n_train, cfg.batch_size)
            trace = forward(P, Xtr[:, sel])
            resid = trace.output - Ytr[:, sel]
            loss = float(np.mean(resid**2))
            if not math.isfinite(loss):
                raise DivergenceError(step, loss)
            train_loss = mse(predict(P, Xtr), Ytr) if record else None
        if record:
            train_db = psnr(train_loss, data.peak)
            test_db = psnr(mse(predict(P, Xte), Yte), data.peak) if has_test else None
            report.rows.append(ReportRow(step, train_loss, train_db, test_db))
            if report.steps_to_target is None and train_db >= cfg.target_train_psnr:
                report.steps_to_target = step
                if cfg.stop_at_target:
                    break
        if step == cfg.max_steps:
            break
        grads = backward(P, trace, resid * (2.0 / resid.size))
        opt.step(P.layers, grads, lrs)
    report.wall_ms = (time.perf_counter() - t0) * 1000.0
    return P, report


def layer_update_norms(params, data, cfg, plan=None):
    """Frobenius norm of each layer's weight change after one optimizer step."""
    one = TrainConfig(**{**cfg.__dict__, "max_steps": 1, "stop_at_target": False, "eval_every": 1})
    trained, _ = train(params, data, one, plan)
    return [float(np.linalg.norm(Wn - Wo)) for (Wn, _), (Wo, _) in zip(trained.layers, params.layers)]
