"""Render experiment CSV rows as matplotlib figures next to the data files.

The CSV stays the canonical output; these plots are a convenience rendering
of each experiment kind (success/accuracy curves, averaging bars, calibration
curves, gradient-divergence trends).
"""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _group(rows, key_fn, value_fn):
    groups = defaultdict(list)
    for row in rows:
        value = value_fn(row)
        if value is not None:
            groups[key_fn(row)].append(value)
    return dict(sorted(groups.items()))


def _sigma_labels(values) -> list[str]:
    return ["0" if v == 0 else f"{v:g}" for v in values]


def _mean_std(groups):
    keys = list(groups)
    means = np.array([np.mean(groups[k]) for k in keys])
    stds = np.array([np.std(groups[k]) for k in keys])
    return keys, means, stds


def plot_asr_vs_variance(rows, path: str) -> str:
    """ASR (solid) and defended accuracy (dashed) against the noise variance."""
    asr = _group(rows, lambda r: r.sigma2, lambda r: r.asr)
    acc = _group(rows, lambda r: r.sigma2, lambda r: r.accuracy)
    fig, ax = plt.subplots(figsize=(6, 4))
    keys, means, stds = _mean_std(asr)
    xs = np.arange(len(keys))
    ax.errorbar(xs, means, yerr=stds, fmt="-o", capsize=3, label="attack success rate")
    if acc:
        akeys, ameans, astds = _mean_std(acc)
        ax.errorbar(np.arange(len(akeys)), ameans, yerr=astds, fmt="--s",
                    capsize=3, label="test accuracy")
    ax.set_xticks(xs)
    ax.set_xticklabels(_sigma_labels(keys))
    ax.set_xlabel("noise variance $\\sigma^2$")
    ax.set_ylabel("rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_adaptive_averaging(rows, path: str) -> str:
    """Grouped bars: ASR per noise level, one bar per averaging count."""
    by_avg = defaultdict(lambda: defaultdict(list))
    for row in rows:
        if row.asr is not None:
            by_avg[row.avg_samples][row.sigma2].append(row.asr)
    sigmas = sorted({s for d in by_avg.values() for s in d})
    avgs = sorted(by_avg)
    xs = np.arange(len(sigmas))
    width = 0.8 / max(len(avgs), 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, avg in enumerate(avgs):
        means = [np.mean(by_avg[avg].get(s, [0.0])) for s in sigmas]
        stds = [np.std(by_avg[avg].get(s, [0.0])) for s in sigmas]
        ax.bar(xs + (i - (len(avgs) - 1) / 2) * width, means, width,
               yerr=stds, capsize=2, label=f"{avg} samples")
    ax.set_xticks(xs)
    ax.set_xticklabels(_sigma_labels(sigmas))
    ax.set_xlabel("noise variance $\\sigma^2$")
    ax.set_ylabel("attack success rate")
    ax.set_ylim(0, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_accuracy_vs_variance(rows, path: str) -> str:
    acc = _group(rows, lambda r: r.sigma2, lambda r: r.accuracy)
    keys, means, stds = _mean_std(acc)
    xs = np.arange(len(keys))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(xs, means, yerr=stds, fmt="--s", capsize=3)
    ax.set_xticks(xs)
    ax.set_xticklabels(_sigma_labels(keys))
    ax.set_xlabel("noise variance $\\sigma^2$")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_grad_error_vs_variance(rows, path: str) -> str:
    div = _group(rows, lambda r: r.sigma2, lambda r: r.mean_l2_distortion)
    keys, means, stds = _mean_std(div)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(np.arange(len(keys)), means, yerr=stds, fmt="-o", capsize=3)
    ax.set_xticks(np.arange(len(keys)))
    ax.set_xticklabels(_sigma_labels(keys))
    ax.set_yscale("log")
    ax.set_xlabel("noise variance $\\sigma^2$")
    ax.set_ylabel("L2 gradient divergence")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_calibration_curve(rows, path: str) -> str:
    """Calibrated variance against the confidence gap, one curve per K."""
    by_k = defaultdict(list)
    for row in rows:
        by_k[row.k].append((row.delta, row.sigma2))
    fig, ax = plt.subplots(figsize=(6, 4))
    for k in sorted(by_k, reverse=True):
        pts = sorted(by_k[k])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "-o", markersize=3,
                label=f"K = {k:g}")
    ax.set_xlabel("confidence gap $\\delta$")
    ax.set_ylabel("max variance $\\sigma^2$")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


_PLOTTERS = {
    "asr_vs_variance": plot_asr_vs_variance,
    "adaptive_averaging": plot_adaptive_averaging,
    "accuracy_vs_variance": plot_accuracy_vs_variance,
    "grad_error_vs_variance": plot_grad_error_vs_variance,
    "calibration_curve": plot_calibration_curve,
}


def render_experiment(kind: str, rows, csv_path: str) -> str:
    """Render the figure for ``kind`` next to its CSV (same stem, .png)."""
    if kind not in _PLOTTERS:
        raise ValueError(f"no figure defined for kind {kind!r}")
    stem = csv_path[:-4] if csv_path.endswith(".csv") else csv_path
    return _PLOTTERS[kind](rows, stem + ".png")
