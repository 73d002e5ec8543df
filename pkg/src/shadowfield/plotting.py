"""Matplotlib figures written next to the CSV outputs (Agg backend, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_profile(rows, path, axis_label="coordinate [m]"):
    c = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.step(c, [r[2] for r in rows], where="mid", color="0.4", label="ray cast")
    ax.plot(c, [r[1] for r in rows], "o-", ms=3, label="shadow field")
    ax.set_xlabel(axis_label)
    ax.set_ylabel("visibility")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(loc="best")
    _save(fig, path)


def plot_slice(fslice, path, path_xy=None, occupied_xy=None, title=None):
    """Field slice as an image; optional end-effector path and obstacle cells."""
    geo = fslice.geometry
    axes = [a for a in range(3) if a != fslice.axis]
    lo = [geo.origin[a] - 0.5 / geo.resolution for a in axes]
    hi = [lo[i] + geo.dims[a] / geo.resolution for i, a in enumerate(axes)]
    fig, ax = plt.subplots(figsize=(5, 5))
    im = ax.imshow(fslice.values.T, origin="lower", cmap="gray", vmin=0, vmax=1,
                   extent=(lo[0], hi[0], lo[1], hi[1]))
    if occupied_xy is not None and len(occupied_xy):
        ax.plot(occupied_xy[:, 0], occupied_xy[:, 1], "s", color="tab:red", ms=2, alpha=0.4)
    if path_xy is not None:
        ax.plot(path_xy[:, 0], path_xy[:, 1], "-", color="tab:orange", lw=2)
        ax.plot(path_xy[0, 0], path_xy[0, 1], "o", color="tab:orange")
    ax.set_xlabel("xyz"[axes[0]] + " [m]")
    ax.set_ylabel("xyz"[axes[1]] + " [m]")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    _save(fig, path)


def plot_bench(rows, path, slope=None):
    cells = np.array([r.cells for r in rows])
    t = np.array([r.mean_seconds for r in rows])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(cells, t * 1e3, "o-")
    ax.loglog(cells, t[0] * 1e3 * cells / cells[0], "--", color="0.5", label="linear")
    ax.set_xlabel("cells")
    ax.set_ylabel("update time [ms]")
    if slope is not None:
        ax.set_title(f"log-log slope {slope:.2f}")
    ax.legend()
    _save(fig, path)


def plot_plan_log(logs, path):
    steps = [e.step for e in logs]
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 4.5), sharex=True)
    a1.plot(steps, [e.F for e in logs], label="field at ee")
    a1.plot(steps, [e.ec for e in logs], label="error complement")
    a1.set_ylim(-0.05, 1.05)
    a1.legend(loc="lower right")
    a2.semilogy(steps, [max(e.cost_total, 1e-12) for e in logs])
    a2.set_xlabel("step")
    a2.set_ylabel("horizon cost")
    _save(fig, path)
