"""Headless figure builders, one per spec kind.

Rendering is read-only on its inputs and deterministic: fixed style, fixed
dpi, and matplotlib's Agg backend produce byte-identical PNGs for identical
inputs. The config-echo hash from the sidecar is embedded both as a caption
footer and in the PNG metadata.
"""

import os
import warnings

import matplotlib

matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .spec import (FigureSpec, read_config_hash, read_fit_json,
                   read_metrics_csv, read_points_csv, resolve_sidecar)

_FIGSIZE = (6.4, 4.2)
_DPI = 120

_TITLES = {
    "drift": "weight drift",
    "sparsity_cliff": "accuracy vs sparsity",
    "ranges": "post-activation ranges",
    "gradient_bias": "gradient mean per layer",
}


def _group_label(keys, values):
    return ", ".join(f"{k} {v}" for k, v in zip(keys, values))


def _series(rows, metric, group_by, take_abs):
    """group label -> (steps, seed-averaged values), sorted by step."""
    acc: dict = {}
    for r in rows:
        if r.metric != metric:
            continue
        g = tuple(getattr(r, k) for k in group_by)
        acc.setdefault(g, {}).setdefault(r.step, []).append(r.value)
    out = {}
    for g in sorted(acc):
        steps = sorted(acc[g])
        vals = np.array([np.mean(acc[g][s]) for s in steps])
        if take_abs:
            vals = np.abs(vals)
        out[_group_label(group_by, g)] = (np.array(steps), vals)
    return out


def _warn_empty(spec, what):
    warnings.warn(f"{spec.csv[0]}: no rows for {what}; writing empty axes",
                  stacklevel=3)


def _draw_drift(spec, ax):
    plotted = []
    metric = spec.plotted_metric()
    for path in spec.csv:
        prefix = f"{os.path.basename(path)}: " if len(spec.csv) > 1 else ""
        for label, (steps, vals) in _series(read_metrics_csv(path), metric,
                                            spec.group_by,
                                            spec.take_absolute()).items():
            ax.plot(steps, vals, label=prefix + label)
            plotted.append(vals)
    if not plotted:
        _warn_empty(spec, f"metric {metric!r}")
        return
    # log axes only for magnitude plots; signed plots keep zero reachable
    if spec.take_absolute() and all(np.all(v > 0.0) for v in plotted):
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel(("|" + metric + "|") if spec.take_absolute() else metric)
    ax.legend(fontsize=8)


def _draw_gradient_bias(spec, ax):
    _draw_drift(spec, ax)
    ax.axhline(0.0, color="k", lw=0.6, alpha=0.5)


def _draw_ranges(spec, ax):
    rows = read_metrics_csv(spec.csv[0])
    top = _series(rows, "input_range_max", spec.group_by, False)
    bot = _series(rows, "input_range_min", spec.group_by, False)
    if not top:
        _warn_empty(spec, "input_range_max/input_range_min")
        return
    for i, label in enumerate(top):
        color = f"C{i}"
        steps, hi = top[label]
        ax.plot(steps, hi, label=f"{label} max", color=color)
        if label in bot:
            lo_steps, lo = bot[label]
            ax.plot(lo_steps, lo, label=f"{label} min", color=color, ls="--")
            ax.fill_between(steps, lo, hi, color=color, alpha=0.15, lw=0)
    ax.set_xlabel("step")
    ax.set_ylabel("post-activation range")
    ax.legend(fontsize=8)


def _draw_cliff(spec, ax):
    pts = read_points_csv(spec.csv[0])
    if not pts:
        _warn_empty(spec, "sweep points")
        return
    s = np.array([p for p, _ in pts])
    a = np.array([q for _, q in pts])
    ax.scatter(s, a, s=18, label="sweep points", zorder=3)
    if spec.fit is not None:
        fit = read_fit_json(spec.fit)
        # grid starts exactly at 0 so the curve anchors at (0, A)
        grid = np.linspace(0.0, float(s.max()), 200)
        curve = fit["A"] - fit["B"] * np.power(grid, fit["N"])
        ax.plot(grid, curve,
                label=f"A - B s^N (A={fit['A']:.3f}, B={fit['B']:.3f}, "
                      f"N={fit['N']:.2f})")
    ax.set_xlabel("s")
    ax.set_ylabel("a")
    ax.legend(fontsize=8)


_DRAW = {
    "drift": _draw_drift,
    "sparsity_cliff": _draw_cliff,
    "ranges": _draw_ranges,
    "gradient_bias": _draw_gradient_bias,
}


def build_figure(spec: FigureSpec):
    """The figure object plus the provenance hash, without saving."""
    config_hash = read_config_hash(resolve_sidecar(spec))
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    _DRAW[spec.kind](spec, ax)
    ax.set_title(_TITLES[spec.kind])
    fig.text(0.01, 0.005, f"config {config_hash[:12]}", fontsize=6,
             color="0.4")
    fig.tight_layout(rect=(0, 0.02, 1, 1))
    return fig, config_hash


def render(spec: FigureSpec) -> str:
    """Write the figure for a validated spec; returns the output path."""
    fig, config_hash = build_figure(spec)
    try:
        d = os.path.dirname(spec.out)
        if d:
            os.makedirs(d, exist_ok=True)
        fig.savefig(spec.out,
                    metadata={"Description": f"config-echo sha256 {config_hash}"})
    finally:
        plt.close(fig)
    return spec.out
