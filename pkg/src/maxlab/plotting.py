"""PNG figures for scenario reports (matplotlib, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .grid import to_nodes  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _positive(y):
    y = np.asarray(y, dtype=float)
    return np.where(y > 0, y, np.nan)


def plot_energies(record, path, fit=None):
    """Energy hierarchy, dissipation and Sobolev energy on a log scale."""
    t = record.t
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for k in range(4):
        ax.semilogy(t, _positive(record.series(f"e{k}")), label=f"e{k}")
    ax.semilogy(t, _positive(record.series("d0")), "--", label="d0")
    ax.semilogy(t, _positive(record.series("z3")), "k", lw=1.6, label="z")
    if fit is not None:
        e0 = record.series("e0")
        ax.semilogy(t, fit.M * e0[0] * np.exp(-fit.omega * t), ":", color="gray",
                    label=f"fit e0, omega={fit.omega:.3f}")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend(ncol=2, fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_divergence(record, path):
    t = record.t
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.semilogy(t, _positive(record.series("div_mag")), label="magnetic divergence")
    ax.semilogy(t, _positive(record.series("div_elec")), label="electric relation residual")
    ax.semilogy(t, _positive(record.series("bnd_tan_E")), label="tangential E on boundary")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_commutators(record, path):
    t = record.t
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for name in ("f2", "f3", "g2", "g3"):
        ax.semilogy(t, _positive(record.series(name)), label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("L2 norm")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_convergence(rows, x, ys, path, xlabel=None, loglog=True):
    """Convergence table as lines of ``ys`` against ``x``."""
    xs = np.array([r[x] for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    for y in ys:
        vals = _positive([r[y] for r in rows])
        if loglog:
            ax.loglog(xs, vals, "o-", label=y)
        else:
            ax.plot(xs, vals, "o-", label=y)
    ax.set_xlabel(xlabel or x)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    return _save(fig, path)


def plot_slice(grid, u, path, axis=2, title=None):
    """Magnitude of ``u`` on the middle node plane normal to ``axis``."""
    nodes = to_nodes(grid, u) if u.loc != "node" else u
    mag = np.sqrt(sum(c**2 for c in nodes.comps))
    plane = np.take(mag, grid.shape[axis] // 2, axis=axis)
    keep = [a for a in range(3) if a != axis]
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(plane.T, origin="lower", cmap="viridis",
                   extent=(0, grid.extents[keep[0]], 0, grid.extents[keep[1]]))
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("xyz"[keep[0]])
    ax.set_ylabel("xyz"[keep[1]])
    if title:
        ax.set_title(title)
    return _save(fig, path)
