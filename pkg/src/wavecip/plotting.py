"""Figures from the CSV tables written by the reconstruct command.

``write_plot_script`` drops a standalone script next to the CSVs so the
figures can be regenerated without the package; ``render`` produces the
same PNGs directly.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SCRIPT = '''\
"""Regenerate figures from slices.csv and fourier.csv in this directory."""
import csv
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
rows = list(csv.DictReader(open(here / "slices.csv")))
fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for ax, axis in zip(axes, ("x", "y")):
    sel = [r for r in rows if r["axis"] == axis]
    s = [float(r["s"]) for r in sel]
    for key, style in (("c1_true", "k-"), ("c1_reference", "b--"), ("c1_est", "r.-")):
        ax.plot(s, [float(r[key]) for r in sel], style, label=key)
    ax.set_xlabel(axis)
    ax.legend()
fig.tight_layout()
fig.savefig(here / "slices.png", dpi=120)
'''


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_slices(rows, path):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, axis in zip(axes, ("x", "y")):
        sel = [r for r in rows if r["axis"] == axis]
        s = [float(r["s"]) for r in sel]
        for key, style in (("c1_true", "k-"), ("c1_reference", "b--"), ("c1_est", "r.-")):
            ax.plot(s, [float(r[key]) for r in sel], style, label=key.replace("_", " "))
        ax.set_xlabel(f"{axis} (centre line)")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fourier(rows, path):
    ex = np.array([float(r["eta_x"]) for r in rows])
    ey = np.array([float(r["eta_y"]) for r in rows])
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.2))
    vmax = max(max(float(r["abs_F"]) for r in rows), max(float(r["abs_oracle"]) for r in rows))
    for ax, key, title in ((axes[0], "abs_F", "|F| estimated"), (axes[1], "abs_oracle", "|F| quadrature")):
        v = np.array([float(r[key]) for r in rows])
        sc = ax.scatter(ex / np.pi, ey / np.pi, c=v, s=60, marker="s", vmin=0, vmax=vmax, cmap="viridis")
        ax.set_title(title)
        ax.set_xlabel("eta_x / pi")
        ax.set_ylabel("eta_y / pi")
        ax.set_aspect("equal")
        fig.colorbar(sc, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fields(grid, fields, path):
    fig, axes = plt.subplots(1, len(fields), figsize=(4.2 * len(fields), 3.8))
    lo = min(float(f.min()) for f in fields.values())
    hi = max(float(f.max()) for f in fields.values())
    for ax, (name, f) in zip(np.atleast_1d(axes), fields.items()):
        im = ax.imshow(f.T, origin="lower", extent=(0, grid.Lx, 0, grid.Ly), vmin=lo, vmax=hi, cmap="magma")
        ax.set_title(name)
        fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_plot_script(out):
    p = Path(out) / "plot_slices.py"
    p.write_text(SCRIPT)
    return p


def render(out, grid=None, fields=None):
    """Render PNGs from the CSVs in ``out``; returns the written paths."""
    out = Path(out)
    written = []
    if (out / "slices.csv").exists():
        plot_slices(_read(out / "slices.csv"), out / "slices.png")
        written.append(out / "slices.png")
    if (out / "fourier.csv").exists():
        plot_fourier(_read(out / "fourier.csv"), out / "fourier.png")
        written.append(out / "fourier.png")
    if grid is not None and fields:
        plot_fields(grid, fields, out / "fields.png")
        written.append(out / "fields.png")
    return written
