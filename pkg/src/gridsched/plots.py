"""Figure rendering for aggregated run reports. Headless (Agg) only."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def save_metric_scatter(path, metric_name: str, metric_values, costs,
                        labels=None) -> None:
    """Scatter of realized cost against one error metric across runs."""
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(metric_values, costs, color="tab:blue")
    if labels is not None:
        for x, y, text in zip(metric_values, costs, labels):
            ax.annotate(str(text), (x, y), fontsize=7,
                        textcoords="offset points", xytext=(4, 2))
    ax.set_xlabel(metric_name)
    ax.set_ylabel("cost ($)")
    ax.set_title(f"cost vs {metric_name}")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_correlation_bars(path, correlations: dict[str, float]) -> None:
    """Bar chart of the Pearson correlation of each metric with cost."""
    names = list(correlations)
    values = [correlations[n] for n in names]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(names, values, color="tab:orange")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_ylabel("Pearson correlation with cost")
    ax.set_ylim(-1.05, 1.05)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
