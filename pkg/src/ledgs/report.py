"""Report rendering: CSV tables plus matplotlib figures written next to
every CLI output. Agg backend only; figures carry no timestamps so report
artifacts stay byte-reproducible."""

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_SAVE_KW = {"dpi": 110, "metadata": {"Software": None}}


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def metric_bars(path, labels, series, title=""):
    """Grouped bar chart: series maps metric name -> list of values
    aligned with labels (one bar group per label)."""
    names = list(series)
    fig, axes = plt.subplots(1, len(names), figsize=(4.2 * len(names), 3.4))
    if len(names) == 1:
        axes = [axes]
    for ax, name in zip(axes, names):
        ax.bar(range(len(labels)), series[name], color="#4878a8")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
        ax.set_title(name)
        ax.grid(axis="y", alpha=0.3)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def loss_curves(path, log, keys=None):
    """Per-epoch loss curves from a training log (list of dicts)."""
    if not log:
        return
    keys = keys or [k for k in log[0] if k not in ("epoch", "n_gaussians")]
    fig, ax = plt.subplots(figsize=(6.2, 4.0))
    epochs = [row["epoch"] for row in log]
    for key in keys:
        if key in log[0]:
            ax.plot(epochs, [row.get(key, float("nan")) for row in log], label=key, linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def relevance_heatmap(path, values, title=""):
    """Relevance map in [-1, 1] as a diverging heatmap with colorbar."""
    fig, ax = plt.subplots(figsize=(5.4, 4.2))
    im = ax.imshow(values, cmap="magma", vmin=-1.0, vmax=1.0)
    ax.set_title(title, fontsize=9)
    ax.axis("off")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
