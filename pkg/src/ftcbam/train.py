"""SGD training with a step-decay schedule, per-epoch checkpoints and a CSV metrics log."""

from __future__ import annotations

import csv
import math
import os
import time
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import dsp
from .augment import MaskPolicy, apply_masks
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, parse_config_text
from .errors import DataError, NumericError
from .head import arc_loss
from .model import SpeakerNet
from .synth import read_manifest
from .tensor import Tensor, set_precision
from .trials import parse_trials
from .wav import read_wav

METRICS_HEADER = ["step", "epoch", "lr", "loss", "ms_per_step"]


def lr_at(epoch: int, lr0: float = 0.01, decay: float = 0.1, interval: int = 15) -> float:
    return lr0 * decay ** (epoch // interval)


class SGD:
    """Momentum SGD with L2 weight decay: v = mu*v + (g + wd*p); p -= lr*v."""

    def __init__(self, named_params, momentum: float = 0.9, weight_decay: float = 5e-4):
        self.params = OrderedDict(named_params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = OrderedDict((n, np.zeros_like(p.data)) for n, p in self.params.items())

    def step(self, lr: float) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                continue
            v = self.velocity[name]
            v *= self.momentum
            v += p.grad + self.weight_decay * p.data
            p.data -= lr * v

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def mask_policy(cfg: RunConfig, mode: str | None = None, p_apply: float | None = None) -> MaskPolicy:
    return MaskPolicy(p_apply=cfg.mask_p_apply if p_apply is None else p_apply,
                      max_instances=cfg.mask_max_instances, max_freq_bins=cfg.mask_max_freq_bins,
                      max_time_frames=cfg.mask_max_time_frames,
                      mode=cfg.mask_mode if mode is None else mode, contiguous=cfg.mask_contiguous)


def load_spectrogram(path: str, cfg: RunConfig) -> dsp.Spectrogram:
    s = dsp.spectrogram(read_wav(path))
    if cfg.log_compress:
        s.values = np.log1p(s.values)
    return s


@dataclass
class TrainData:
    paths: list[str]
    labels: np.ndarray
    speakers: list[str]


def training_split(corpus_dir: str) -> TrainData:
    """Manifest entries whose speakers do not appear in ``trials.txt``."""
    manifest_path = os.path.join(corpus_dir, "manifest.csv")
    if not os.path.exists(manifest_path):
        raise DataError(f"no manifest.csv in {corpus_dir}")
    manifest = read_manifest(manifest_path)
    spk_of = dict(manifest)
    held = set()
    trials_path = os.path.join(corpus_dir, "trials.txt")
    if os.path.exists(trials_path):
        for t in parse_trials(trials_path):
            held.add(spk_of.get(t.utt_a))
            held.add(spk_of.get(t.utt_b))
    rows = [(p, s) for p, s in manifest if s not in held]
    speakers = sorted({s for _, s in rows})
    if len(speakers) < 2:
        raise DataError("training needs at least two speakers outside the trial list")
    index = {s: i for i, s in enumerate(speakers)}
    return TrainData([os.path.join(corpus_dir, p) for p, _ in rows],
                     np.array([index[s] for _, s in rows]), speakers)


def make_checkpoint(model: SpeakerNet, opt: SGD | None, cfg: RunConfig, rng: np.random.Generator,
                    step: int, speakers: list[str]) -> Checkpoint:
    tensors = OrderedDict((f"model.{k}", v) for k, v in model.state_dict().items())
    if opt is not None:
        tensors.update((f"optim.{k}", v) for k, v in opt.velocity.items())
    header = cfg.to_text() + "".join(f"# speaker {s}\n" for s in speakers)
    return Checkpoint(tensors, header, rng.bit_generator.state, step)


def model_from_checkpoint(ckpt: Checkpoint | str) -> SpeakerNet:
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt)
    cfg = parse_config_text(ckpt.config_text)
    n_classes = sum(1 for line in ckpt.config_text.splitlines() if line.startswith("# speaker "))
    set_precision(cfg.precision)
    model = SpeakerNet(cfg, max(n_classes, 1))
    model.load_state_dict(ckpt.subset("model."))
    return model.eval()


def _batch(specs, idx, cfg: RunConfig, rng: np.random.Generator, policy: MaskPolicy | None):
    crops = []
    for i in idx:
        s = dsp.random_crop(specs[i], cfg.crop_frames, rng)
        s = dsp.normalize_per_bin(s)
        if policy is not None:
            s = apply_masks(s, policy, rng)
        crops.append(s.values)
    return Tensor(np.stack(crops))


@dataclass
class TrainResult:
    out_dir: str
    metrics_path: str
    checkpoints: list[str]
    losses: list[float]
    model: SpeakerNet


def train(corpus_dir: str, cfg: RunConfig, out_dir: str, log=None) -> TrainResult:
    """Train on every manifest speaker not used by the trial list; checkpoint each epoch."""
    set_precision(cfg.precision)
    data = training_split(corpus_dir)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())

    model = SpeakerNet(cfg, len(data.speakers)).train()
    opt = SGD(model.named_parameters(), cfg.momentum, cfg.weight_decay)
    rng = np.random.default_rng([cfg.seed, 2])
    specs = [load_spectrogram(p, cfg) for p in data.paths]
    policy = mask_policy(cfg) if cfg.train_masking else None

    n = len(specs)
    steps_per_epoch = cfg.steps_per_epoch or math.ceil(n / cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    if cfg.max_steps:
        total = min(total, cfg.max_steps)

    metrics_path = os.path.join(out_dir, "metrics.csv")
    ckpt_dir = os.path.join(out_dir, "checkpoints")
    saved, losses = [], []
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for step in range(total):
            t0 = time.perf_counter()
            epoch = step // steps_per_epoch
            lr = lr_at(epoch, cfg.lr0, cfg.lr_decay, cfg.lr_decay_epochs)
            margin = cfg.arc_margin * min(1.0, step / cfg.margin_warmup_steps) \
                if cfg.margin_warmup_steps > 0 else cfg.arc_margin
            idx = rng.choice(n, size=cfg.batch_size, replace=n < cfg.batch_size)
            x = _batch(specs, idx, cfg, rng, policy)
            logits = model(x, target=data.labels[idx], margin=margin)
            loss = arc_loss(logits, data.labels[idx])
            value = float(loss.data)
            if not np.isfinite(value):
                path = os.path.join(ckpt_dir, f"diagnostic_step{step:06d}.ckpt")
                save_checkpoint(make_checkpoint(model, opt, cfg, rng, step, data.speakers), path)
                raise NumericError(f"non-finite loss at step {step}; state saved to {path}")
            opt.zero_grad()
            loss.backward()
            opt.step(lr)
            losses.append(value)
            ms = (time.perf_counter() - t0) * 1000.0
            writer.writerow([step, epoch, f"{lr:.10g}", f"{value:.10g}", f"{ms:.1f}"])
            if log is not None and (step % 50 == 0 or step == total - 1):
                log(f"step {step} epoch {epoch} lr {lr:.3g} loss {value:.4f} ({ms:.0f} ms)")
            last_of_epoch = (step + 1) % steps_per_epoch == 0 or step == total - 1
            if last_of_epoch:
                path = os.path.join(ckpt_dir, f"epoch{epoch:03d}.ckpt")
                save_checkpoint(make_checkpoint(model, opt, cfg, rng, step + 1, data.speakers), path)
                saved.append(path)
                fh.flush()
    final = os.path.join(out_dir, "final.ckpt")
    save_checkpoint(make_checkpoint(model, opt, cfg, rng, total, data.speakers), final)
    saved.append(final)
    return TrainResult(out_dir, metrics_path, saved, losses, model.eval())


def read_metrics(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(r) for r in csv.DictReader(fh)]
