"""``ftcbam`` command line: one entry point, one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import __version__
from .backbone import MIN_FRAMES, attention_delta, expected_shapes, param_breakdown
from .config import HELP, RunConfig, field_names, load_config
from .dsp import normalize_per_bin, repeat_pad
from .errors import DataError, FtCbamError, UsageError
from .evaluate import (ABLATION_POLICIES, EmbeddingCache, ScoredTrial, ablate, compute_eer,
                       extract_embedding, score_trials, summarize)
from .model import SpeakerNet, backbone_config
from .synth import synth_corpus
from .tensor import Tensor, no_grad, set_precision
from .train import load_spectrogram, model_from_checkpoint, read_metrics, train
from .trials import Trial, parse_trials


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (override --config file values)")
    g.add_argument("--config", help="key = value file; flags given here take precedence")
    for key in field_names():
        g.add_argument(_flag(key), dest=f"cfg_{key}", default=None, metavar="V", help=HELP[key])


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    changes = {k: getattr(args, f"cfg_{k}") for k in field_names()
               if getattr(args, f"cfg_{k}", None) is not None}
    return cfg.updated(**changes)


def _echo_config(cfg: RunConfig, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())


def _corpus_trials(corpus: str, trials: str | None) -> list[Trial]:
    path = trials or os.path.join(corpus, "trials.txt")
    if not os.path.isfile(path):
        raise DataError(f"trial list not found: {path}")
    return parse_trials(path)


def _write_scores(path: str, scored: list[ScoredTrial]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "utt_a", "utt_b", "score"])
        for s in scored:
            w.writerow([s.trial.label, s.trial.utt_a, s.trial.utt_b, repr(s.score)])


def read_scores(path: str) -> list[ScoredTrial]:
    if not os.path.isfile(path):
        raise DataError(f"score file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return [ScoredTrial(Trial(r["label"] == "1", r["utt_a"], r["utt_b"]), float(r["score"]))
                for r in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: expected columns label,utt_a,utt_b,score ({exc})") from None


# -- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    c = synth_corpus(args.out, args.speakers, args.utts, args.seconds, args.seed, args.test_speakers)
    print(f"wrote {len(c.manifest)} utterances from {len(c.speakers)} speakers and "
          f"{len(c.trials)} trials to {c.root}")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    if not cfg.corpus:
        raise UsageError("train needs --corpus (or corpus = ... in the config file)")
    log = None if args.quiet else (lambda m: print(m, flush=True))
    result = train(cfg.corpus, cfg, cfg.out_dir, log=log)
    if cfg.figures:
        from .plotting import loss_curve
        loss_curve(read_metrics(result.metrics_path), os.path.join(cfg.out_dir, "loss.png"))
    print(f"final checkpoint {result.checkpoints[-1]}")
    return 0


def cmd_embed(args) -> int:
    model = model_from_checkpoint(args.checkpoint)
    e = extract_embedding(model, args.wav)
    if args.out:
        np.savetxt(args.out, e[None], delimiter=",", fmt="%.9g")
    else:
        print(",".join(f"{v:.9g}" for v in e))
    return 0


def cmd_score(args) -> int:
    model = model_from_checkpoint(args.checkpoint)
    trials = _corpus_trials(args.corpus, args.trials)
    scored = score_trials(trials, EmbeddingCache(model, args.corpus))
    _write_scores(args.out, scored)
    print(f"scored {len(scored)} trials into {args.out}")
    return 0


def cmd_eer(args) -> int:
    if args.scores:
        scored = read_scores(args.scores)
    elif args.checkpoint and args.corpus:
        model = model_from_checkpoint(args.checkpoint)
        scored = score_trials(_corpus_trials(args.corpus, args.trials), EmbeddingCache(model, args.corpus))
    else:
        raise UsageError("eer needs --scores FILE or --checkpoint with --corpus")
    eer, thr = compute_eer(scored)
    print(f"EER {100 * eer:.3f}% threshold {thr:.6f}")
    if args.figure:
        from .plotting import score_histogram
        tar = np.array([s.score for s in scored if s.trial.same])
        non = np.array([s.score for s in scored if not s.trial.same])
        score_histogram(tar, non, eer, thr, args.figure)
    return 0


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    if not cfg.corpus:
        raise UsageError("ablate needs --corpus")
    trials = _corpus_trials(cfg.corpus, args.trials)
    _echo_config(cfg, cfg.out_dir)
    rows = []
    for path in args.checkpoint:
        model = model_from_checkpoint(path)
        rows += ablate(model, trials, cfg.corpus, cfg, args.policies, cfg.ablation_repeats,
                       cfg.ablation_seed, args.p_apply, log=None if args.quiet else print)
    out = os.path.join(cfg.out_dir, "ablation.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "policy", "seed", "eer", "threshold"])
        for r in rows:
            w.writerow([r.variant, r.policy, r.seed, repr(r.eer), repr(r.threshold)])
    summary = summarize(rows)
    with open(os.path.join(cfg.out_dir, "ablation_summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "policy", "n", "mean_eer", "std_eer", "seeds"])
        for s in summary:
            w.writerow([s["variant"], s["policy"], s["n"], repr(s["mean_eer"]), repr(s["std_eer"]),
                        " ".join(str(v) for v in s["seeds"])])
    for s in summary:
        print(f"{s['variant']:>8} {s['policy']:>10}  EER {100 * s['mean_eer']:.3f}% "
              f"+/- {100 * s['std_eer']:.3f} (n={s['n']})")
    if cfg.figures:
        from .plotting import ablation_bars
        ablation_bars(summary, os.path.join(cfg.out_dir, "ablation.png"))
    return 0


def cmd_params(args) -> int:
    cfg = resolve_config(args)
    model = SpeakerNet(cfg, args.classes)
    parts = param_breakdown(model.backbone)
    for name, n in parts.items():
        if name != "total":
            print(f"{name:<12}{n:>12,}")
    print(f"{'total':<12}{parts['total']:>12,}  ({parts['total'] / 1e6:.2f} M, backbone)")
    bcfg = backbone_config(cfg)
    print(f"attention delta over variant none: {attention_delta(bcfg, cfg.variant):,}")
    if args.full:
        for name in ("aggregator", "embedding", "head"):
            print(f"{name:<12}{getattr(model, name).param_count():>12,}")
        print(f"{'model':<12}{model.param_count():>12,}")
    return 0


def _shape_text(shape) -> str:
    return " × ".join(str(v) for v in shape)


def cmd_shapes(args) -> int:
    cfg = resolve_config(args)
    set_precision(cfg.precision)
    bcfg = backbone_config(cfg)
    if args.no_forward:
        rows = expected_shapes(bcfg, args.frames)
    else:
        model = SpeakerNet(cfg, 2).eval()
        rows = []
        with no_grad():
            model.backbone(Tensor(np.zeros((1, 1, bcfg.freq_bins, args.frames))), trace=rows)
    for label, shape in rows:
        print(f"{label:<16}{_shape_text(shape)}")
    return 0


def cmd_attn_dump(args) -> int:
    model = model_from_checkpoint(args.checkpoint)
    variant = model.cfg.variant
    s = repeat_pad(normalize_per_bin(load_spectrogram(args.wav, model.cfg)), MIN_FRAMES)
    blocks = model.backbone.attention_blocks
    for b in blocks:
        b.record_maps = True
    with no_grad():
        model.backbone(Tensor(s.values[None]))
    os.makedirs(args.out_dir, exist_ok=True)
    dumped = []
    for i, b in enumerate(blocks):
        b.record_maps = False
        maps = {k: np.squeeze(v) for k, v in b.last_maps.items()}
        dumped.append(maps)
        for kind, m in maps.items():
            path = os.path.join(args.out_dir, f"block{i:02d}_{kind}.csv")
            m2 = np.atleast_2d(m)
            if kind in ("freq", "temp", "channel"):
                m2 = m.reshape(-1, 1)
            axis = {"freq": "bin", "temp": "frame", "channel": "channel", "spatial": "bin"}[kind]
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                if kind == "spatial":
                    w.writerow([axis] + [f"block{i}_{variant}_frame{j}" for j in range(m2.shape[1])])
                else:
                    w.writerow([axis, f"block{i}_{variant}_{kind}"])
                for r, row in enumerate(m2):
                    w.writerow([r] + [f"{v:.9g}" for v in row])
    print(f"wrote attention maps for {len(blocks)} blocks ({variant}) to {args.out_dir}")
    if not args.no_figure and variant != "none":
        from .plotting import attention_maps
        attention_maps(dumped, variant, os.path.join(args.out_dir, "attention.png"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    keys = "\n".join(f"  {k:<22}{HELP[k]}" for k in field_names())
    parser = _Parser(prog="ftcbam", formatter_class=argparse.RawDescriptionHelpFormatter,
                     description="Speaker-embedding toolkit with axis-restricted CBAM attention.",
                     epilog="configuration keys (file 'key = value' or --key-name flag):\n" + keys)
    parser.add_argument("--version", action="version", version=f"ftcbam {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write the seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--speakers", type=int, default=20)
    p.add_argument("--utts", type=int, default=10)
    p.add_argument("--seconds", type=float, default=3.0)
    p.add_argument("--test-speakers", type=int, default=None)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model; writes metrics.csv and checkpoints")
    p.add_argument("--quiet", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="print the unit-norm embedding of one WAV file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--out", help="write CSV here instead of standard output")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("score", help="cosine-score a trial list into a CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--trials", help="trial list (default CORPUS/trials.txt)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eer", help="equal error rate from a score CSV or a checkpoint")
    p.add_argument("--scores")
    p.add_argument("--checkpoint")
    p.add_argument("--corpus")
    p.add_argument("--trials")
    p.add_argument("--figure", help="write a score histogram here")
    p.set_defaults(func=cmd_eer)

    p = sub.add_parser("ablate", help="masking ablation grid over one or more checkpoints")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--trials")
    p.add_argument("--policies", nargs="+", choices=ABLATION_POLICIES, default=list(ABLATION_POLICIES))
    p.add_argument("--p-apply", type=float, default=None)
    p.add_argument("--quiet", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("params", help="parameter counts per module")
    p.add_argument("--classes", type=int, default=2, help="speaker classes for the head")
    p.add_argument("--full", action="store_true", help="also count aggregation, embedding and head")
    _add_config_flags(p)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("shapes", help="backbone shape trace for T input frames")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--no-forward", action="store_true", help="print the closed-form trace only")
    _add_config_flags(p)
    p.set_defaults(func=cmd_shapes)

    p = sub.add_parser("attn-dump", help="per-block attention map CSVs for one utterance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_attn_dump)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FtCbamError as exc:
        print(f"ftcbam {args.command}: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", 1)
    except FileNotFoundError as exc:
        print(f"ftcbam {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
