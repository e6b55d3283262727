"""Embedding extraction, cosine trial scoring, EER, and the masking ablation grid."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import dsp
from .augment import MaskPolicy, apply_masks
from .backbone import MIN_FRAMES
from .config import RunConfig
from .errors import ContractError, UnknownUtteranceError
from .model import SpeakerNet
from .tensor import Tensor, no_grad
from .train import load_spectrogram, mask_policy
from .trials import Trial


@dataclass(frozen=True)
class ScoredTrial:
    trial: Trial
    score: float


def prepare_spectrogram(path: str, cfg: RunConfig) -> dsp.Spectrogram:
    """Full-utterance spectrogram, normalized with its own per-bin statistics."""
    s = dsp.normalize_per_bin(load_spectrogram(path, cfg))
    return dsp.repeat_pad(s, MIN_FRAMES)


def embed_spectrogram(model: SpeakerNet, s: dsp.Spectrogram) -> np.ndarray:
    model.eval()
    with no_grad():
        e = model.embed(Tensor(s.values[None])).data[0].astype(np.float64)
    norm = np.linalg.norm(e)
    if norm == 0:
        raise ContractError("embedding has zero norm")
    return e / norm


def extract_embedding(model: SpeakerNet, path: str, policy: MaskPolicy | None = None,
                      rng: np.random.Generator | None = None) -> np.ndarray:
    """Unit-norm embedding of a whole utterance, optionally corrupted by ``policy``."""
    s = prepare_spectrogram(path, model.cfg)
    if policy is not None:
        s = apply_masks(s, policy, rng if rng is not None else np.random.default_rng())
    return embed_spectrogram(model, s)


class EmbeddingCache:
    """Embeddings keyed by utterance id; ids resolve against ``root``."""

    def __init__(self, model: SpeakerNet, root: str):
        self.model = model
        self.root = root
        self.store: dict[str, np.ndarray] = {}

    def path(self, utt: str) -> str:
        p = os.path.join(self.root, utt)
        if not os.path.isfile(p):
            raise UnknownUtteranceError(f"cannot resolve utterance {utt!r} under {self.root}")
        return p

    def __call__(self, utt: str) -> np.ndarray:
        if utt not in self.store:
            self.store[utt] = extract_embedding(self.model, self.path(utt))
        return self.store[utt]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def score_trials(trials: Iterable[Trial], embed: Callable[[str], np.ndarray]) -> list[ScoredTrial]:
    return [ScoredTrial(t, cosine(embed(t.utt_a), embed(t.utt_b))) for t in trials]


def compute_eer(scored: Sequence[ScoredTrial] | None = None, *, target_scores=None,
                nontarget_scores=None) -> tuple[float, float]:
    """Equal error rate by threshold sweep with linear interpolation at the FAR/FRR crossing.

    A trial is accepted when its score is >= the threshold. The sweep visits
    every distinct score plus a final point above the maximum (FAR 0, FRR 1).
    Returns (eer, threshold).
    """
    if scored is not None:
        tar = np.array([s.score for s in scored if s.trial.same], dtype=np.float64)
        non = np.array([s.score for s in scored if not s.trial.same], dtype=np.float64)
    else:
        tar = np.asarray(target_scores, dtype=np.float64)
        non = np.asarray(nontarget_scores, dtype=np.float64)
    if tar.size == 0 or non.size == 0:
        raise ContractError("EER needs at least one same-speaker and one different-speaker trial")

    thresholds = np.unique(np.concatenate([tar, non]))
    tar_sorted, non_sorted = np.sort(tar), np.sort(non)
    frr = np.searchsorted(tar_sorted, thresholds, side="left") / tar.size
    far = 1.0 - np.searchsorted(non_sorted, thresholds, side="left") / non.size
    frr = np.append(frr, 1.0)
    far = np.append(far, 0.0)
    thresholds = np.append(thresholds, thresholds[-1])

    d = far - frr
    j = int(np.argmax(d <= 0))          # first sweep point where FAR no longer exceeds FRR
    if j == 0 or d[j] == 0:
        return float(far[j]), float(thresholds[j])
    i = j - 1
    alpha = d[i] / (d[i] - d[j])
    eer = far[i] + alpha * (far[j] - far[i])
    thr = thresholds[i] + alpha * (thresholds[j] - thresholds[i])
    return float(eer), float(thr)


ABLATION_POLICIES = ("freq", "time", "freq+time")


@dataclass
class AblationRow:
    variant: str
    policy: str
    seed: int
    eer: float
    threshold: float


def ablate(model: SpeakerNet, trials: Sequence[Trial], root: str, cfg: RunConfig,
           policies: Sequence[str] = ABLATION_POLICIES, repeats: int | None = None,
           base_seed: int | None = None, p_apply: float | None = None,
           log=None) -> list[AblationRow]:
    """Clean EER plus ``repeats`` corrupted EERs per masking mode.

    Each repeat corrupts every trial utterance independently (one mask draw
    per utterance per repeat) before embedding.
    """
    repeats = cfg.ablation_repeats if repeats is None else repeats
    base_seed = cfg.ablation_seed if base_seed is None else base_seed
    cache = EmbeddingCache(model, root)
    utts = sorted({t.utt_a for t in trials} | {t.utt_b for t in trials})
    specs = {u: prepare_spectrogram(cache.path(u), model.cfg) for u in utts}
    clean = {u: embed_spectrogram(model, s) for u, s in specs.items()}
    variant = model.cfg.variant
    eer, thr = compute_eer(score_trials(trials, clean.__getitem__))
    rows = [AblationRow(variant, "clean", -1, eer, thr)]
    for p_i, mode in enumerate(policies):
        policy = mask_policy(cfg, mode=mode, p_apply=p_apply)
        for r in range(repeats):
            seed = base_seed + 100 * p_i + r
            rng = np.random.default_rng(seed)
            embs = {}
            for u in utts:
                corrupted = apply_masks(specs[u], policy, rng)
                embs[u] = clean[u] if corrupted is specs[u] else embed_spectrogram(model, corrupted)
            eer, thr = compute_eer(score_trials(trials, embs.__getitem__))
            rows.append(AblationRow(variant, mode, seed, eer, thr))
            if log is not None:
                log(f"{variant} {mode} seed {seed}: EER {100 * eer:.3f}%")
    return rows


def summarize(rows: Sequence[AblationRow]) -> list[dict]:
    """Mean and standard deviation of EER per (variant, policy) cell."""
    cells: dict[tuple[str, str], list[float]] = {}
    seeds: dict[tuple[str, str], list[int]] = {}
    for r in rows:
        cells.setdefault((r.variant, r.policy), []).append(r.eer)
        seeds.setdefault((r.variant, r.policy), []).append(r.seed)
    return [{"variant": v, "policy": p, "n": len(e), "mean_eer": float(np.mean(e)),
             "std_eer": float(np.std(e)), "seeds": seeds[(v, p)]}
            for (v, p), e in cells.items()]
