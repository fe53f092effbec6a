"""Figures from an experiment's CSV outputs (companion to the runner, not part of any audit)."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_decay(path: Path, dest: Path) -> Path:
    by_q = defaultdict(list)
    for r in _read(path):
        if float(r["t"]) > 0:
            by_q[r["q"]].append((float(r["t"]), float(r["norm"]), float(r["envelope"])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for q, pts in sorted(by_q.items(), key=lambda kv: float(kv[0])):
        t, n, e = zip(*pts)
        line, = ax.loglog(t, n, label=f"q = {float(q):g}")
        ax.loglog(t, e, "--", color=line.get_color(), alpha=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\|w(t)\|_q$ (dashed: envelope)")
    ax.legend()
    return _save(fig, dest / "decay.png")


def plot_diagnostics(path: Path, dest: Path) -> Path:
    rows = _read(path)
    t = [float(r["t"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    for col in ("l2", "l3", "l6"):
        ax.plot(t, [float(r[col]) for r in rows], label=col)
    ax.set_xlabel("t")
    ax.set_ylabel("norm")
    ax.legend()
    return _save(fig, dest / "diagnostics.png")


def plot_weakstrong(path: Path, dest: Path) -> Path:
    by_pair = defaultdict(list)
    for r in _read(path):
        by_pair[r["res_pair"]].append((float(r["t"]), float(r["E"])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for pair, pts in by_pair.items():
        t, e = zip(*pts)
        ax.semilogy(t, [max(x, 1e-300) for x in e], label=pair)
    ax.set_xlabel("t")
    ax.set_ylabel("E(t)")
    ax.legend()
    return _save(fig, dest / "weakstrong.png")


def plot_resolvent(path: Path, dest: Path) -> Path:
    rows = _read(path)
    fig, ax = plt.subplots(figsize=(5, 5))
    sc = ax.scatter([float(r["re_lambda"]) for r in rows], [float(r["im_lambda"]) for r in rows],
                    c=[float(r["ratio"]) for r in rows], cmap="viridis")
    fig.colorbar(sc, ax=ax, label="ratio")
    ax.set_xscale("symlog", linthresh=0.1)
    ax.set_yscale("symlog", linthresh=0.1)
    ax.set_xlabel("Re lambda")
    ax.set_ylabel("Im lambda")
    return _save(fig, dest / "resolvent.png")


_PLOTTERS = {
    "decay.csv": plot_decay,
    "trajectory/diagnostics.csv": plot_diagnostics,
    "weakstrong.csv": plot_weakstrong,
    "resolvent.csv": plot_resolvent,
}


def render(out_dir: str | Path) -> list[Path]:
    """Render a PNG next to each recognized CSV in ``out_dir``; returns written files."""
    root = Path(out_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"no output directory {root}")
    written = []
    for rel, fn in _PLOTTERS.items():
        src = root / rel
        if src.exists():
            written.append(fn(src, root))
    return written
