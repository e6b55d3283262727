"""Figures rendered next to the CSV outputs (loss curve, attention maps, ablation bars, scores)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
}


def _figure(width=5.0, height=3.2, ncols=1):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(1, ncols, figsize=(width, height))
    return fig, ax


def _save(fig, path) -> str:
    with plt.rc_context(STYLE):
        fig.savefig(path)
    plt.close(fig)
    return str(path)


def loss_curve(metrics: list[dict], path) -> str:
    steps = np.array([int(r["step"]) for r in metrics])
    loss = np.array([float(r["loss"]) for r in metrics])
    fig, ax = _figure()
    ax.plot(steps, loss, lw=0.6, color="0.6", label="per step")
    if len(loss) >= 10:
        k = max(5, len(loss) // 50)
        smooth = np.convolve(loss, np.ones(k) / k, mode="valid")
        ax.plot(steps[k - 1:], smooth, lw=1.4, color="C0", label=f"mean of {k}")
    ax.set_xlabel("step")
    ax.set_ylabel("training loss")
    ax.legend(frameon=False)
    return _save(fig, path)


def attention_maps(blocks: list[dict], variant: str, path) -> str:
    """Axis maps for every block; frequency maps on the left, temporal on the right."""
    kinds = [k for k in ("freq", "temp", "spatial") if any(k in b for b in blocks)]
    if not kinds:
        kinds = ["channel"]
    fig, axes = _figure(width=3.2 * len(kinds), height=3.0, ncols=len(kinds))
    axes = np.atleast_1d(axes)
    for ax, kind in zip(axes, kinds):
        for i, b in enumerate(blocks):
            if kind not in b:
                continue
            m = np.asarray(b[kind])
            if kind == "spatial":
                m = m.mean(axis=0)
            ax.plot(np.linspace(0, 1, m.size), m.ravel(), lw=0.8,
                    color=plt.cm.viridis(i / max(1, len(blocks) - 1)))
        ax.set_xlabel({"freq": "relative frequency bin", "temp": "relative frame",
                       "spatial": "relative frame", "channel": "relative channel"}[kind])
        ax.set_ylabel("attention weight")
        ax.set_title(f"{variant}: {kind} map per block (dark = early)")
        ax.set_ylim(0, 1)
    return _save(fig, path)


def ablation_bars(summary: list[dict], path) -> str:
    variants = sorted({r["variant"] for r in summary})
    policies = list(dict.fromkeys(r["policy"] for r in summary))
    cell = {(r["variant"], r["policy"]): r for r in summary}
    fig, ax = _figure(width=1.6 + 1.2 * len(policies))
    width = 0.8 / len(variants)
    x = np.arange(len(policies))
    for j, v in enumerate(variants):
        means = [100 * cell[(v, p)]["mean_eer"] if (v, p) in cell else np.nan for p in policies]
        stds = [100 * cell[(v, p)]["std_eer"] if (v, p) in cell else 0.0 for p in policies]
        ax.bar(x + (j - (len(variants) - 1) / 2) * width, means, width, yerr=stds,
               capsize=2, label=v)
    ax.set_xticks(x, policies)
    ax.set_ylabel("EER (%)")
    ax.legend(frameon=False, title="variant")
    return _save(fig, path)


def score_histogram(target: np.ndarray, nontarget: np.ndarray, eer: float, threshold: float, path) -> str:
    fig, ax = _figure()
    bins = np.linspace(-1, 1, 61)
    ax.hist(nontarget, bins=bins, alpha=0.6, label="different speaker")
    ax.hist(target, bins=bins, alpha=0.6, label="same speaker")
    ax.axvline(threshold, color="k", lw=0.8, ls="--")
    ax.set_xlabel("cosine score")
    ax.set_ylabel("trials")
    ax.set_title(f"EER {100 * eer:.3f}% at threshold {threshold:.4f}")
    ax.legend(frameon=False)
    return _save(fig, path)
