"""Deterministic synthetic speaker corpus.

Each speaker is a pulse-train source at a characteristic f0, tilted by a
one-pole low-pass and shaped by three two-pole formant resonators. Utterances
jitter f0 and formants, add vibrato and a syllable-rate envelope, and mix in
low-level noise.
"""

from __future__ import annotations

import csv
import itertools
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .dsp import SAMPLE_RATE
from .errors import ContractError, DataError
from .trials import Trial, write_trials
from .wav import write_wav

MIN_F0_GAP = 8.0
MIN_FORMANT_GAP = 80.0


@dataclass(frozen=True)
class SynthSpeakerSpec:
    f0: float
    formants: tuple[float, float, float]
    bandwidths: tuple[float, float, float]
    rolloff: float                 # one-pole low-pass coefficient on the source
    f0_jitter: float = 0.04        # per-utterance relative f0 spread
    formant_jitter: float = 0.03   # per-utterance relative formant spread

    def distinct_from(self, other: "SynthSpeakerSpec") -> bool:
        if abs(self.f0 - other.f0) >= MIN_F0_GAP:
            return True
        return any(abs(a - b) >= MIN_FORMANT_GAP for a, b in zip(self.formants, other.formants))


@dataclass
class Corpus:
    root: str
    manifest: list[tuple[str, str]]         # (relative path, speaker id)
    trials: list[Trial]
    speakers: dict[str, SynthSpeakerSpec] = field(default_factory=dict)

    @property
    def test_speakers(self) -> set[str]:
        spk = dict(self.manifest)
        return {spk[t.utt_a] for t in self.trials} | {spk[t.utt_b] for t in self.trials}


def draw_speaker(rng: np.random.Generator) -> SynthSpeakerSpec:
    return SynthSpeakerSpec(
        f0=float(rng.uniform(90.0, 260.0)),
        formants=(float(rng.uniform(300, 900)), float(rng.uniform(950, 2400)),
                  float(rng.uniform(2500, 3600))),
        bandwidths=tuple(float(b) for b in rng.uniform(60, 180, size=3)),
        rolloff=float(rng.uniform(0.6, 0.95)),
    )


def draw_speakers(n: int, rng: np.random.Generator) -> list[SynthSpeakerSpec]:
    speakers: list[SynthSpeakerSpec] = []
    while len(speakers) < n:
        cand = draw_speaker(rng)
        if all(cand.distinct_from(s) for s in speakers):
            speakers.append(cand)
    return speakers


def _resonator(freq: float, bw: float, fs: int) -> tuple[np.ndarray, np.ndarray]:
    r = np.exp(-np.pi * bw / fs)
    theta = 2 * np.pi * freq / fs
    a = np.array([1.0, -2 * r * np.cos(theta), r * r])
    return np.array([1.0 - r]), a


def synth_utterance(spk: SynthSpeakerSpec, seconds: float, rng: np.random.Generator,
                    fs: int = SAMPLE_RATE) -> np.ndarray:
    n = int(round(seconds * fs))
    t = np.arange(n) / fs
    f0 = spk.f0 * (1 + spk.f0_jitter * rng.uniform(-1, 1))
    vib_rate, vib_phase = rng.uniform(3, 7), rng.uniform(0, 2 * np.pi)
    contour = f0 * (1 + 0.04 * np.sin(2 * np.pi * vib_rate * t + vib_phase)
                    + 0.01 * rng.standard_normal(n).cumsum() / np.sqrt(n))
    phase = np.cumsum(contour / fs)
    source = np.zeros(n)
    source[1:][np.diff(np.floor(phase)) > 0] = 1.0
    source = lfilter([1.0], [1.0, -spk.rolloff], source)
    voiced = source
    for freq, bw in zip(spk.formants, spk.bandwidths):
        freq *= 1 + spk.formant_jitter * rng.uniform(-1, 1)
        b, a = _resonator(freq, bw, fs)
        voiced = lfilter(b, a, voiced)
    # syllable-rate envelope: smoothed random gate around 4 Hz
    n_syll = max(2, int(seconds * 4))
    knots = np.clip(rng.uniform(-0.3, 1.2, size=n_syll + 1), 0, 1)
    env = np.interp(t, np.linspace(0, seconds, n_syll + 1), knots)
    voiced *= env
    voiced /= np.sqrt(np.mean(voiced ** 2)) + 1e-12
    noise = 0.01 * rng.standard_normal(n)
    sig = voiced + noise
    return 0.5 * sig / np.max(np.abs(sig))


def balanced_trials(groups: dict[str, list[str]], rng: np.random.Generator) -> list[Trial]:
    """All same-speaker pairs plus an equal number of sampled different-speaker pairs."""
    same = [Trial(True, a, b) for utts in groups.values() for a, b in itertools.combinations(utts, 2)]
    cross = [(a, b) for s1, s2 in itertools.combinations(sorted(groups), 2)
             for a in groups[s1] for b in groups[s2]]
    if len(cross) < len(same):
        raise ContractError("not enough different-speaker pairs for a balanced list")
    pick = rng.choice(len(cross), size=len(same), replace=False)
    diff = [Trial(False, *cross[i]) for i in sorted(pick)]
    trials = same + diff
    order = rng.permutation(len(trials))
    return [trials[i] for i in order]


def synth_corpus(out_dir, n_speakers: int = 20, utts_per_speaker: int = 10,
                 seconds_per_utt: float = 3.0, seed: int = 7, test_speakers: int | None = None) -> Corpus:
    """Write WAVs, ``manifest.csv`` (path,speaker_id) and ``trials.txt`` under ``out_dir``.

    The trial list covers the last ``test_speakers`` speakers only (default a
    quarter, at least two); the others are left for training.
    """
    if n_speakers < 2:
        raise ContractError("need at least two speakers")
    if test_speakers is None:
        test_speakers = max(2, n_speakers // 4)
    if not 2 <= test_speakers <= n_speakers:
        raise ContractError("test_speakers must be between 2 and n_speakers")
    root = os.path.abspath(out_dir)
    os.makedirs(root, exist_ok=True)
    specs = draw_speakers(n_speakers, np.random.default_rng([seed, 0]))
    manifest = []
    speakers = {}
    for s, spk in enumerate(specs):
        sid = f"spk{s:03d}"
        speakers[sid] = spk
        for u in range(utts_per_speaker):
            rel = f"wav/{sid}/utt{u:03d}.wav"
            audio = synth_utterance(spk, seconds_per_utt, np.random.default_rng([seed, 1, s, u]))
            write_wav(os.path.join(root, rel), audio)
            manifest.append((rel, sid))

    with open(os.path.join(root, "manifest.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "speaker_id"])
        w.writerows(manifest)

    held_out = sorted(speakers)[-test_speakers:]
    groups = {sid: [p for p, s in manifest if s == sid] for sid in held_out}
    trials = balanced_trials(groups, np.random.default_rng([seed, 2]))
    write_trials(os.path.join(root, "trials.txt"), trials)

    with open(os.path.join(root, "speakers.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["speaker_id", "f0", "f1", "f2", "f3", "b1", "b2", "b3", "rolloff"])
        for sid, spk in speakers.items():
            w.writerow([sid, f"{spk.f0:.3f}", *(f"{f:.3f}" for f in spk.formants),
                        *(f"{b:.3f}" for b in spk.bandwidths), f"{spk.rolloff:.4f}"])
    return Corpus(root, manifest, trials, speakers)


def read_manifest(path) -> list[tuple[str, str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["path", "speaker_id"]:
        raise DataError(f"{path}: manifest must start with header 'path,speaker_id'")
    return [(r[0], r[1]) for r in rows[1:] if r]
