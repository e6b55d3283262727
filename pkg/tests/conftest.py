import os

import numpy as np
import pytest

from ftcbam.config import RunConfig
from ftcbam.synth import synth_corpus
from ftcbam.tensor import Tensor, set_precision
from ftcbam.train import train

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True)
def float64_mode():
    set_precision("float64")
    yield
    set_precision("float64")


def rand_tensor(rng, *shape, scale=1.0, grad=True):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=grad)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """6 speakers x 4 one-second utterances; the last 2 speakers form the trial list."""
    root = tmp_path_factory.mktemp("corpus")
    return synth_corpus(root, n_speakers=6, utts_per_speaker=4, seconds_per_utt=1.0, seed=3)


MICRO = dict(width_divisor=8, stage_blocks="1,1,1,1", batch_size=4, epochs=1, steps_per_epoch=3,
             crop_frames=48, vlad_clusters=2, vlad_ghost_clusters=1, embed_dim=16,
             margin_warmup_steps=2, precision="float64")


@pytest.fixture(scope="session")
def micro_run(small_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = RunConfig(variant="ft", **MICRO)
    result = train(small_corpus.root, cfg, str(out))
    set_precision("float64")
    return result


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def corpus_path(corpus, rel):
    return os.path.join(corpus.root, rel)


def seeds(n=20, base=0):
    return [np.random.default_rng([base, i]) for i in range(n)]
