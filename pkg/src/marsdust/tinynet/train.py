"""Supervised training: AdamW on mean-absolute-error over random patches.

Every source of randomness (epoch shuffling, patch offsets, augmentation,
weight init) is keyed off the config seed, so equal seeds give byte-identical
weights files.  Training math runs in float32; weights are float32 on disk.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..degrade import DatasetManifest
from ..errors import ValidationError
from ..raster import load_image
from ..rng import mix64
from . import autodiff as ad
from .autodiff import Tensor
from .model import NetConfig, build_params, graph_forward, init_weights
from .weights import ModelWeights, save_weights

logger = logging.getLogger(__name__)

_INIT_SALT = 0x57E16B7


@dataclass(frozen=True)
class TrainConfig:
    patch: int = 64
    batch: int = 8
    lr: float = 1e-4
    epochs: int = 30
    seed: int = 0
    loss: str = "l1"
    patches_per_image: int = 8  # draws per record per epoch; sets the epoch length
    identity_fraction: float = 0.1  # share of samples fed clean->clean, anchoring "no dust, no change"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.patch % 4:
            raise ValidationError(f"patch must be divisible by 4, got {self.patch}")
        if self.batch < 1:
            raise ValidationError(f"batch must be >= 1, got {self.batch}")
        if not self.lr > 0:
            raise ValidationError(f"lr must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.loss != "l1":
            raise ValidationError(f"unsupported loss {self.loss!r}; only 'l1' is available")
        if self.patches_per_image < 1:
            raise ValidationError("patches_per_image must be >= 1")
        if not 0 <= self.identity_fraction < 1:
            raise ValidationError("identity_fraction must be in [0, 1)")


@dataclass
class TrainReport:
    train_config: dict
    net_config: dict
    epoch_losses: list[float] = field(default_factory=list)
    seconds: float = 0.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "train_config": self.train_config,
                "net_config": self.net_config,
                "epoch_losses": self.epoch_losses,
                "seconds": self.seconds,
            },
            indent=2,
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


class AdamW:
    """Decoupled weight decay Adam; parameters updated in a fixed name order."""

    def __init__(self, params: dict[str, Tensor], lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01):
        self.items = sorted(params.items())
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.items}
        self.v = {n: np.zeros_like(p.data) for n, p in self.items}

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.items:
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= self.lr * (update + self.weight_decay * p.data)

    def zero_grad(self):
        for _, p in self.items:
            p.grad = None


def _load_pairs(manifest: DatasetManifest, patch: int) -> list[tuple[np.ndarray, np.ndarray]]:
    pairs = []
    for rec in manifest.records:
        clean = load_image(rec.clean)
        dusty = load_image(rec.dusty)
        if clean.data.shape != dusty.data.shape:
            raise ValidationError(f"pair shape mismatch for {rec.dusty}")
        if clean.width < patch or clean.height < patch:
            raise ValidationError(
                f"patch {patch} larger than image {clean.width}x{clean.height} ({rec.clean})"
            )
        to_chw = lambda img: np.moveaxis(img.data, 2, 0).astype(np.float32)
        pairs.append((to_chw(clean), to_chw(dusty)))
    return pairs


def _augment_chw(arr: np.ndarray, rot: int, flip: bool) -> np.ndarray:
    out = np.rot90(arr, rot, axes=(1, 2))
    if flip:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out)


def train(
    cfg: TrainConfig, net: NetConfig, manifest: DatasetManifest, out_path
) -> TrainReport:
    """Train on manifest pairs and write the weights file plus a JSON report
    (``<out stem>.report.json`` next to the weights)."""
    if not manifest.records:
        raise ValidationError("manifest is empty; nothing to train on")
    t0 = time.monotonic()
    pairs = _load_pairs(manifest, cfg.patch)
    n = len(pairs)
    weights0 = init_weights(net, mix64(cfg.seed, _INIT_SALT), head_zero=True)
    params = build_params(weights0, net, dtype=np.float32)
    opt = AdamW(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
    steps = math.ceil(n * cfg.patches_per_image / cfg.batch)

    report = TrainReport(train_config=asdict(cfg), net_config=asdict(net))
    for epoch in range(cfg.epochs):
        rng = np.random.Generator(np.random.PCG64(mix64(cfg.seed, epoch)))
        losses = []
        for _ in range(steps):
            xs, ys = [], []
            for _ in range(cfg.batch):
                clean, dusty = pairs[int(rng.integers(0, n))]
                _, h, w = clean.shape
                x0 = int(rng.integers(0, w - cfg.patch + 1))
                y0 = int(rng.integers(0, h - cfg.patch + 1))
                rot = int(rng.integers(0, 4))
                flip = bool(rng.integers(0, 2))
                if rng.random() < cfg.identity_fraction:
                    dusty = clean  # identity anchor: dust-free input must pass through
                sl = np.s_[:, y0 : y0 + cfg.patch, x0 : x0 + cfg.patch]
                xs.append(_augment_chw(dusty[sl], rot, flip))
                ys.append(_augment_chw(clean[sl], rot, flip))
            x = Tensor(np.stack(xs))
            y = Tensor(np.stack(ys))
            out = graph_forward(params, net, x)
            loss = ad.loss_l1(out, y)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        epoch_loss = math.fsum(losses) / len(losses)
        report.epoch_losses.append(epoch_loss)
        logger.info("epoch %d/%d: loss %.6f", epoch + 1, cfg.epochs, epoch_loss)

    trained = ModelWeights()
    for name in sorted(params):
        trained.tensors[name] = params[name].data.astype(np.float32)
    out_path = Path(out_path)
    save_weights(trained, out_path)
    report.seconds = time.monotonic() - t0
    report.save(out_path.with_suffix(".report.json"))
    return report
