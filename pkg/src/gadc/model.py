"""Classification heads trained on pre-aggregated features.

Two heads: a linear softmax classifier and a two-layer ReLU perceptron.
Backward passes are written out by hand; ``gradient_check`` compares them
against central differences.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import rng
from .errors import DomainError, InputError, NumericError
from .graph import LabeledDataset


@dataclass(frozen=True)
class HeadConfig:
    kind: str = "linear"
    hidden: int = 32
    dropout: float = 0.0
    lr: float = 0.2
    weight_decay: float = 1e-5
    epochs: int = 100
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.optimizer not in ("adam", "gd"):
            raise InputError(f"unknown optimizer {self.optimizer!r}")
        if self.kind not in ("linear", "mlp2"):
            raise InputError(f"unknown head kind {self.kind!r}")
        if self.kind == "mlp2" and self.hidden < 1:
            raise InputError("mlp2 needs hidden >= 1")
        if not 0 <= self.dropout < 1:
            raise InputError(f"dropout must be in [0, 1), got {self.dropout}")
        if not self.lr > 0:
            raise InputError(f"lr must be > 0, got {self.lr}")
        if self.weight_decay < 0:
            raise InputError("weight_decay must be >= 0")
        if self.epochs < 0:
            raise InputError("epochs must be >= 0")


@dataclass
class TrainedHead:
    params: dict
    config: HeadConfig
    log: list = field(default_factory=list)
    best_epoch: int = 0

    @property
    def layers(self) -> int:
        return 1 if self.config.kind == "linear" else 2


def init_params(d_in: int, classes: int, cfg: HeadConfig) -> dict:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    gen = rng.stream(cfg.seed, rng.INIT)
    shapes = [(d_in, classes)] if cfg.kind == "linear" else [(d_in, cfg.hidden), (cfg.hidden, classes)]
    params = {}
    for i, (fan_in, fan_out) in enumerate(shapes, start=1):
        bound = 1.0 / math.sqrt(fan_in)
        params[f"W{i}"] = gen.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"b{i}"] = gen.uniform(-bound, bound, size=fan_out)
    return params


def _dropout_mask(shape, p, seed, epoch, layer):
    keep = rng.stream(seed, rng.DROPOUT, epoch, layer).random(shape) >= p
    return keep / (1.0 - p)


def _forward(params, f, kind, dropout=0.0, masks=None):
    """Returns scores and the cache needed for backprop."""
    cache = {}
    h = f
    if masks is not None:
        h = h * masks[0]
    cache["in1"] = h
    z = h @ params["W1"] + params["b1"]
    if kind == "linear":
        return z, cache
    cache["pre"] = z
    a = np.maximum(z, 0.0)
    if masks is not None:
        a = a * masks[1]
    cache["in2"] = a
    return a @ params["W2"] + params["b2"], cache


def _masks(params, f, cfg: HeadConfig, seed: int, epoch: int):
    if cfg.dropout == 0:
        return None
    shapes = [f.shape]
    if cfg.kind == "mlp2":
        shapes.append((f.shape[0], params["W1"].shape[1]))
    return [_dropout_mask(s, cfg.dropout, seed, epoch, i) for i, s in enumerate(shapes)]


def forward(head: TrainedHead, f: np.ndarray, training: bool = False, seed: int = 0, epoch: int = 0) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape[1] != head.params["W1"].shape[0]:
        raise InputError(f"head expects {head.params['W1'].shape[0]} features, got {f.shape[1]}")
    masks = _masks(head.params, f, head.config, seed, epoch) if training else None
    return _forward(head.params, f, head.config.kind, masks=masks)[0]


def softmax_cross_entropy(scores: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the scores."""
    shifted = scores - scores.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    m = scores.shape[0]
    loss = -float(logp[np.arange(m), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(m), labels] -= 1.0
    return loss, grad / m


def loss_and_grads(params: dict, f: np.ndarray, labels: np.ndarray, kind: str, masks=None):
    scores, cache = _forward(params, f, kind, masks=masks)
    loss, dz = softmax_cross_entropy(scores, labels)
    grads = {}
    if kind == "linear":
        grads["W1"] = cache["in1"].T @ dz
        grads["b1"] = dz.sum(axis=0)
        return loss, grads
    grads["W2"] = cache["in2"].T @ dz
    grads["b2"] = dz.sum(axis=0)
    da = dz @ params["W2"].T
    if masks is not None:
        da = da * masks[1]
    dpre = da * (cache["pre"] > 0)
    grads["W1"] = cache["in1"].T @ dpre
    grads["b1"] = dpre.sum(axis=0)
    return loss, grads


def _accuracy(scores, labels) -> float:
    return float(np.mean(np.argmax(scores, axis=1) == labels))


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def train_head(f: np.ndarray, ds: LabeledDataset, cfg: HeadConfig) -> TrainedHead:
    """Full-batch training on the train split (Adam or plain gradient descent).

    Weight decay is an L2 term added to the gradient of weight matrices only
    (biases are not decayed). The returned head holds
    the parameters from the epoch with the best validation accuracy (earliest
    on ties); with zero epochs it holds the initialization.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != ds.labels.size:
        raise InputError(f"features have {f.shape[0]} rows, dataset has {ds.labels.size} nodes")
    if ds.train.size == 0:
        raise DomainError("empty train split")
    params = init_params(f.shape[1], ds.num_classes, cfg)
    head = TrainedHead({k: v.copy() for k, v in params.items()}, cfg)
    f_train, y_train = f[ds.train], ds.labels[ds.train]
    best_acc = -1.0
    adam = _Adam(params, cfg.lr) if cfg.optimizer == "adam" else None
    for epoch in range(1, cfg.epochs + 1):
        masks = _masks(params, f_train, cfg, cfg.seed, epoch)
        loss, grads = loss_and_grads(params, f_train, y_train, cfg.kind, masks)
        if not math.isfinite(loss):
            raise NumericError(f"loss became {loss} at epoch {epoch}")
        for k in grads:
            if k.startswith("W") and cfg.weight_decay:
                grads[k] = grads[k] + cfg.weight_decay * params[k]
        if adam is not None:
            adam.step(params, grads)
        else:
            for k, g in grads.items():
                params[k] = params[k] - cfg.lr * g
        if ds.val.size:
            val_acc = _accuracy(_forward(params, f[ds.val], cfg.kind)[0], ds.labels[ds.val])
        else:
            val_acc = float("nan")
        head.log.append((epoch, loss, val_acc))
        if ds.val.size == 0 or val_acc > best_acc:
            best_acc = val_acc
            head.best_epoch = epoch
            head.params = {k: v.copy() for k, v in params.items()}
    return head


def evaluate(head: TrainedHead, f: np.ndarray, ds: LabeledDataset, split: str = "test") -> float:
    idx = ds.split(split)
    if idx.size == 0:
        raise DomainError(f"{split} split is empty")
    return _accuracy(forward(head, np.asarray(f)[idx]), ds.labels[idx])


def _relative_gap(analytic, numeric) -> float:
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def numeric_grads(params, f, labels, kind, step=1e-5) -> dict:
    out = {}
    for k, p in params.items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up = loss_and_grads(params, f, labels, kind)[0]
            flat[i] = old - step
            down = loss_and_grads(params, f, labels, kind)[0]
            flat[i] = old
            gflat[i] = (up - down) / (2 * step)
        out[k] = g
    return out


def gradient_check(cfg: HeadConfig, trials: int = 10, tolerance: float = 1e-5, seed: int = 0,
                   n: int = 12, d: int = 5, classes: int = 3, step: float = 1e-5) -> dict:
    """Analytic vs central-difference gradients on small random instances.

    The per-block gap is max|analytic - numeric| / max(|analytic|, |numeric|)
    over that parameter block; the report keeps the worst block per trial.
    mlp2 instances whose hidden pre-activations come within 1e-3 of the ReLU
    kink are redrawn.
    """
    cfg = replace(cfg, dropout=0.0)
    gaps = []
    for t in range(trials):
        gen = rng.stream(seed, rng.EVAL, t)
        attempt = 0
        while True:
            f = gen.standard_normal((n, d))
            labels = np.arange(n) % classes
            params = init_params(d, classes, replace(cfg, seed=seed * 1000 + t * 10 + attempt))
            if cfg.kind == "linear" or np.min(np.abs(f @ params["W1"] + params["b1"])) > 1e-3:
                break
            attempt += 1
        _, analytic = loss_and_grads(params, f, labels, cfg.kind)
        numeric = numeric_grads(params, f, labels, cfg.kind, step)
        gaps.append(max(_relative_gap(analytic[k], numeric[k]) for k in params))
    worst = max(gaps) if gaps else 0.0
    return {"kind": cfg.kind, "trials": trials, "max_rel_diff": worst, "per_trial": gaps,
            "tolerance": tolerance, "passed": worst < tolerance}


def save_head(head: TrainedHead, directory) -> None:
    """One GADCMAT1 file per parameter, a JSON manifest and the training log as CSV."""
    from .io import ensure_dir, write_matrix

    out = ensure_dir(directory)
    files = {}
    for k, v in head.params.items():
        name = f"{k}.bin"
        write_matrix(out / name, v.reshape(v.shape[0], -1) if v.ndim == 2 else v.reshape(1, -1))
        files[k] = name
    manifest = {"config": asdict(head.config), "best_epoch": head.best_epoch, "params": files}
    (out / "head.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    with open(out / "log.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "val_acc"])
        for epoch, loss, acc in head.log:
            w.writerow([epoch, repr(float(loss)), repr(float(acc))])


def load_head(directory) -> TrainedHead:
    from pathlib import Path

    from .io import read_matrix

    root = Path(directory)
    try:
        manifest = json.loads((root / "head.json").read_text())
        cfg = HeadConfig(**manifest["config"])
        params = {}
        for k, name in manifest["params"].items():
            m = read_matrix(root / name)
            params[k] = m.ravel() if k.startswith("b") else m
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"{root}: malformed head manifest ({exc})") from None
    log = []
    if (root / "log.csv").exists():
        with open(root / "log.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                log.append((int(row["epoch"]), float(row["loss"]), float(row["val_acc"])))
    return TrainedHead(params, cfg, log, int(manifest.get("best_epoch", 0)))
