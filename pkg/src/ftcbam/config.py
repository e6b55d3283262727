"""Run configuration as flat ``key = value`` text with ``#`` comments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .errors import ConfigError

HELP = {
    "variant": "attention variant: none | spatial | f | t | ft",
    "aggregation": "frame aggregation: tap | gvlad",
    "vlad_clusters": "GhostVLAD real clusters K",
    "vlad_ghost_clusters": "GhostVLAD ghost clusters G",
    "embed_dim": "embedding width",
    "arc_scale": "ArcSoftmax scale s",
    "arc_margin": "ArcSoftmax angular margin m (radians)",
    "margin_warmup_steps": "steps over which m ramps linearly from 0",
    "width_divisor": "divide every backbone width by this (1 = PRN-50v2)",
    "stage_blocks": "bottleneck blocks per stage, comma separated",
    "attention_reduction": "channel-attention MLP reduction ratio",
    "lr0": "initial learning rate",
    "lr_decay": "learning-rate decay factor",
    "lr_decay_epochs": "epochs between learning-rate decays",
    "momentum": "SGD momentum",
    "weight_decay": "L2 weight decay",
    "batch_size": "utterances per step",
    "epochs": "training epochs",
    "steps_per_epoch": "steps per epoch (0 = one pass over the training utterances)",
    "max_steps": "stop after this many steps (0 = no cap)",
    "crop_frames": "training crop width in frames (199 = 2 s)",
    "log_compress": "apply log(1 + x) before normalization",
    "train_masking": "apply the mask policy to training crops",
    "mask_p_apply": "probability a spectrogram is masked",
    "mask_max_instances": "maximum mask instances per spectrogram",
    "mask_max_freq_bins": "maximum masked frequency bins per instance",
    "mask_max_time_frames": "maximum masked frames per instance",
    "mask_mode": "mask axes: freq | time | freq+time",
    "mask_contiguous": "contiguous bands (true) or scattered indices (false)",
    "ablation_repeats": "repeats per ablation cell",
    "ablation_seed": "base seed for ablation repeats",
    "precision": "float32 | float64",
    "seed": "master random seed",
    "corpus": "corpus directory (manifest.csv, trials.txt)",
    "out_dir": "run output directory",
    "figures": "render matplotlib figures next to CSV outputs",
}


@dataclass
class RunConfig:
    variant: str = "ft"
    aggregation: str = "gvlad"
    vlad_clusters: int = 8
    vlad_ghost_clusters: int = 2
    embed_dim: int = 256
    arc_scale: float = 30.0
    arc_margin: float = 0.2
    margin_warmup_steps: int = 1000
    width_divisor: int = 1
    stage_blocks: str = "3,4,6,3"
    attention_reduction: int = 16
    lr0: float = 0.01
    lr_decay: float = 0.1
    lr_decay_epochs: int = 15
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 32
    epochs: int = 45
    steps_per_epoch: int = 0
    max_steps: int = 0
    crop_frames: int = 199
    log_compress: bool = False
    train_masking: bool = False
    mask_p_apply: float = 0.40
    mask_max_instances: int = 2
    mask_max_freq_bins: int = 30
    mask_max_time_frames: int = 40
    mask_mode: str = "freq+time"
    mask_contiguous: bool = True
    ablation_repeats: int = 5
    ablation_seed: int = 1000
    precision: str = "float32"
    seed: int = 0
    corpus: str = ""
    out_dir: str = "run"
    figures: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.variant not in ("none", "spatial", "f", "t", "ft"):
            raise ConfigError(f"variant must be none|spatial|f|t|ft, got {self.variant!r}")
        if self.aggregation not in ("tap", "gvlad"):
            raise ConfigError(f"aggregation must be tap|gvlad, got {self.aggregation!r}")
        if self.precision not in ("float32", "float64"):
            raise ConfigError("precision must be float32 or float64")
        if self.mask_mode not in ("freq", "time", "freq+time"):
            raise ConfigError("mask_mode must be freq|time|freq+time")
        if self.batch_size < 1 or self.crop_frames < 16 or self.width_divisor < 1:
            raise ConfigError("batch_size, crop_frames (>= 16) and width_divisor must be positive")
        try:
            self.blocks
        except ValueError as exc:
            raise ConfigError(f"stage_blocks must be comma-separated integers: {exc}") from None

    @property
    def blocks(self) -> tuple[int, ...]:
        return tuple(int(v) for v in str(self.stage_blocks).split(","))

    def updated(self, **changes) -> "RunConfig":
        unknown = set(changes) - set(field_names())
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **{k: coerce(k, v) for k, v in changes.items()})

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            v = str(v).lower() if isinstance(v, bool) else v
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def field_names() -> list[str]:
    return [f.name for f in fields(RunConfig)]


def _field_type(key: str):
    t = {f.name: f.type for f in fields(RunConfig)}[key]
    return {"int": int, "float": float, "bool": bool, "str": str}.get(t, t)


def coerce(key: str, value):
    kind = _field_type(key)
    if not isinstance(value, str):
        return kind(value)
    text = value.strip()
    try:
        if kind is bool:
            if text.lower() in ("true", "yes", "1", "on"):
                return True
            if text.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind.__name__}") from None


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in field_names():
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        changes[key] = value
    return (base or RunConfig()).updated(**changes)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base)
