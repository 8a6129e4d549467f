#!/usr/bin/env python3
"""
Static SVG line charts for sweep tables.

Output bytes depend only on the input rows: the SVG id salt is fixed and
the Date metadata is dropped. Each group's data line carries the SVG id
`series-<group>`.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from sensing.utils import InputError  # noqa: E402

SVG_SALT = "sensing-charts"


def _column(rows, col):
    missing = [i for i, r in enumerate(rows) if col not in r]
    if missing:
        raise InputError(f"column {col!r} missing from row {missing[0]}")
    return [r[col] for r in rows]


def render_svg_lines(rows, x_col, y_col, group_col, path, std_col=None, title=None, log_y=False):
    """One line per distinct group value, error bars from `std_col` when given."""
    if not rows:
        raise InputError("no rows to plot")
    for col in (x_col, y_col, group_col) + ((std_col,) if std_col else ()):
        _column(rows, col)

    groups = {}
    for r in rows:
        groups.setdefault(str(r[group_col]), []).append(r)
    for name, members in groups.items():
        points = [m for m in members if m[y_col] is not None and m[y_col] != ""]
        if not points:
            raise InputError(f"group {name!r} has no {y_col} values")

    plt.rcParams["svg.hashsalt"] = SVG_SALT
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted(groups):
        members = sorted((m for m in groups[name] if m[y_col] not in (None, "")), key=lambda m: float(m[x_col]))
        xs = [float(m[x_col]) for m in members]
        ys = [float(m[y_col]) for m in members]
        if std_col:
            errs = [float(m[std_col]) for m in members]
            container = ax.errorbar(xs, ys, yerr=errs, marker="o", markersize=3, capsize=2, label=name)
            line = container.lines[0]
        else:
            (line,) = ax.plot(xs, ys, marker="o", markersize=3, label=name)
        line.set_gid(f"series-{name}")

    if log_y:
        ax.set_yscale("log", nonpositive="mask")
    ax.set_xlabel(x_col)
    ax.set_ylabel(y_col)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    legend = ax.legend(title=group_col, fontsize="small")
    handles = getattr(legend, "legend_handles", None) or getattr(legend, "legendHandles", [])
    for handle, name in zip(handles, sorted(groups)):
        handle.set_gid(f"legend-{name}")
    fig.tight_layout()

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
