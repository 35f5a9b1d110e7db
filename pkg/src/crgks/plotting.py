"""Figures for solver runs, rendered to files with the Agg backend."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .operators import vector_to_image  # noqa: E402

__all__ = ["plot_convergence", "plot_reconstructions", "plot_weights"]

METHOD_LABELS = {
    "l2": r"$\ell_2$-RMM-GKS",
    "l1": r"$\ell_1$-RMM-GKS",
    "cr-l2": r"CR-$\ell_2$-RMM-GKS",
    "cr-l1": r"CR-$\ell_1$-RMM-GKS",
}

# PNG metadata would otherwise embed the library version
_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def _label(method: str) -> str:
    return METHOD_LABELS.get(method, method)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def plot_convergence(curves: Mapping[str, np.ndarray], path, title: str = "") -> Path:
    """RRE against total iterations, one line per method, log scale."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    longest = max((np.size(r) for r in curves.values()), default=0)
    for method, rre in curves.items():
        rre = np.asarray(rre, dtype=float)
        if rre.size == 0 or np.all(np.isnan(rre)):
            continue
        (line,) = ax.semilogy(np.arange(1, rre.size + 1), rre, label=_label(method), lw=1.4)
        if rre.size < longest:
            # a method that stopped early keeps its final error
            ax.semilogy([rre.size, longest], [rre[-1], rre[-1]], ls=":", color=line.get_color(), lw=1.4)
    ax.set_xlabel("total iterations")
    ax.set_ylabel("RRE")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_reconstructions(
    x_true,
    solutions: Mapping[str, np.ndarray],
    path,
    image_shape: tuple[int, int] | None = None,
    data=None,
    data_shape: tuple[int, int] | None = None,
) -> Path:
    """Ground truth next to each reconstruction.

    1D signals share one axis; images get one panel each, preceded by the
    sinogram when ``data`` and ``data_shape`` are given.
    """
    if image_shape is None:
        fig, ax = plt.subplots(figsize=(7.0, 4.0))
        if x_true is not None:
            ax.plot(x_true, "k-", lw=2.0, label="true")
        for method, x in solutions.items():
            ax.plot(x, lw=1.0, label=_label(method))
        ax.set_xlabel("index")
        ax.legend(frameon=False, fontsize="small")
        fig.tight_layout()
        return _save(fig, path)

    n_y, n_x = image_shape
    panels = []
    if data is not None and data_shape is not None:
        panels.append(("sinogram", np.asarray(data).reshape(data_shape), None))
    if x_true is not None:
        panels.append(("true", vector_to_image(x_true, n_x, n_y), (0.0, 1.0)))
    for method, x in solutions.items():
        panels.append((_label(method), vector_to_image(x, n_x, n_y), (0.0, 1.0)))
    fig, axes = plt.subplots(1, len(panels), figsize=(2.4 * len(panels), 2.8), squeeze=False)
    for ax, (name, img, clim) in zip(axes[0], panels):
        kw = {} if clim is None else {"vmin": clim[0], "vmax": clim[1]}
        ax.imshow(img, cmap="gray", aspect="auto" if clim is None else "equal", **kw)
        ax.set_title(name, fontsize="small")
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    return _save(fig, path)


def plot_weights(d, path, image_shape: tuple[int, int] | None = None) -> Path:
    """Final cumulative weights; for images the two gradient blocks side by side."""
    d = np.asarray(d, dtype=float)
    if image_shape is None:
        fig, ax = plt.subplots(figsize=(6.0, 3.0))
        ax.plot(np.arange(d.size), d, "k.-", ms=3, lw=0.8)
        ax.set_ylim(-0.05, 1.05)
        ax.set_xlabel("difference index")
        ax.set_ylabel("d")
        fig.tight_layout()
        return _save(fig, path)

    n_y, n_x = image_shape
    half = d.size // 2
    fig, axes = plt.subplots(1, 2, figsize=(6.0, 3.0))
    for ax, block, name in zip(axes, (d[:half], d[half:]), ("horizontal", "vertical")):
        im = ax.imshow(vector_to_image(block, n_x, n_y), cmap="viridis", vmin=0.0, vmax=1.0)
        ax.set_title(name, fontsize="small")
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im, ax=list(axes), shrink=0.8)
    return _save(fig, path)
