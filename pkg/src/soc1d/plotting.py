"""SVG figures derived from the CSV/JSON outputs. Nothing here is a data product."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import BoundaryNorm, ListedColormap  # noqa: E402

# P, 2S, 1S, EMPTY, then grey for cells without a physical label
PHASE_ORDER = ("P", "2S", "1S", "EMPTY", "NC", "FAIL")
PHASE_COLORS = ("#d62728", "#1f77b4", "#2ca02c", "#f2f2f2", "#7f7f7f", "#000000")


def _save(fig, path):
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)


def _edges(x):
    x = np.asarray(x, dtype=float)
    if x.size == 1:
        return np.array([x[0] - 0.5, x[0] + 0.5])
    mid = 0.5 * (x[1:] + x[:-1])
    return np.concatenate([[2 * x[0] - mid[0]], mid, [2 * x[-1] - mid[-1]]])


def line_plot(x, ys, path, xlabel, ylabel, labels=None, title=None):
    """ys: (len(x), n_lines) or a 1D array."""
    ys = np.asarray(ys)
    if ys.ndim == 1:
        ys = ys[:, None]
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for j in range(ys.shape[1]):
        ax.plot(x, ys[:, j], lw=1.2, label=None if labels is None else labels[j])
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if labels is not None:
        ax.legend(frameon=False, fontsize="small")
    _save(fig, path)


def heatmap(x, y, z, path, xlabel, ylabel, cbar_label, title=None, discrete=False):
    """z has shape (len(y), len(x)); linear colour scale."""
    fig, ax = plt.subplots(figsize=(5, 4))
    z = np.ma.masked_invalid(np.asarray(z, dtype=float))
    if discrete:
        levels = np.arange(np.nanmin(z) - 0.5, np.nanmax(z) + 1.5) if z.count() else [0, 1]
        mesh = ax.pcolormesh(_edges(x), _edges(y), z, cmap="viridis",
                             norm=BoundaryNorm(levels, plt.get_cmap("viridis").N))
    else:
        mesh = ax.pcolormesh(_edges(x), _edges(y), z, cmap="viridis")
    fig.colorbar(mesh, ax=ax, label=cbar_label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    _save(fig, path)


def phase_map(b, mu, phases, path, title=None):
    """Categorical map of phase labels, shape (len(mu), len(b))."""
    idx = np.vectorize(lambda s: PHASE_ORDER.index(s) if s in PHASE_ORDER else len(PHASE_ORDER) - 1)(
        np.asarray(phases, dtype=object)
    ).astype(float)
    cmap = ListedColormap(PHASE_COLORS)
    norm = BoundaryNorm(np.arange(len(PHASE_ORDER) + 1) - 0.5, cmap.N)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.pcolormesh(_edges(b), _edges(mu), idx, cmap=cmap, norm=norm)
    present = [i for i, name in enumerate(PHASE_ORDER) if np.any(idx == i)]
    handles = [plt.Rectangle((0, 0), 1, 1, color=PHASE_COLORS[i], ec="k", lw=0.3) for i in present]
    ax.legend(handles, [PHASE_ORDER[i] for i in present], loc="upper left",
              bbox_to_anchor=(1.01, 1.0), frameon=False, fontsize="small")
    ax.set_xlabel("B (T)")
    ax.set_ylabel(r"$\mu$ (meV)")
    if title:
        ax.set_title(title)
    _save(fig, path)
