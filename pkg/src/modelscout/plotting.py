"""Figures for benchmark reports, written as PNG next to the text and JSON output."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "figure.figsize": (5.5, 3.2),
}

COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#7f7f7f"]


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def pcc_figure(report, path: Path) -> Path:
    names = list(report.strategies)
    signed = [report.strategies[n]["pcc_mean"] for n in names]
    absolute = [report.strategies[n]["abs_pcc_mean"] for n in names]
    x = np.arange(len(names))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(x - 0.2, [np.nan if v is None else v for v in signed], 0.4, label="PCC", color=COLORS[0])
        ax.bar(x + 0.2, [np.nan if v is None else v for v in absolute], 0.4, label="|PCC|", color=COLORS[1])
        ax.axhline(0.0, color="black", lw=0.6)
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=20, ha="right")
        ax.set_ylim(-1.05, 1.05)
        ax.set_ylabel("correlation with target accuracy")
        ax.legend(frameon=False)
        return _save(fig, path)


def topk_figure(report, path: Path) -> Path:
    names = list(report.strategies)
    ks = report.config["ks"]
    x = np.arange(len(names))
    width = 0.8 / max(1, len(ks))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, k in enumerate(ks):
            vals = [report.strategies[n]["top_k_error"].get(str(k), np.nan) for n in names]
            ax.bar(x - 0.4 + width * (i + 0.5), vals, width, label=f"top-{k}", color=COLORS[i % len(COLORS)])
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=20, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("error rate")
        ax.legend(frameon=False)
        return _save(fig, path)


def latency_figure(report, path: Path) -> Path:
    labels, values = [], []
    for name, s in report.strategies.items():
        q = s["latency_s"]["query"]
        if q is not None:
            labels.append(name)
            values.append(1000 * q)
    am = report.adaptivity_modes
    if am:
        labels.append("adaptivity-pairwise")
        values.append(1000 * am["pairwise_query_s"])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        y = np.arange(len(labels))
        ax.barh(y, values, color=COLORS[2])
        ax.set_yticks(y)
        ax.set_yticklabels(labels)
        ax.set_xscale("log")
        ax.set_xlabel("median query latency per scenario (ms)")
        ax.invert_yaxis()
        return _save(fig, path)


def render_report_figures(report, out_dir) -> dict:
    out_dir = Path(out_dir)
    return {
        "fig_pcc": str(pcc_figure(report, out_dir / "pcc.png")),
        "fig_topk": str(topk_figure(report, out_dir / "topk_error.png")),
        "fig_latency": str(latency_figure(report, out_dir / "latency.png")),
    }
