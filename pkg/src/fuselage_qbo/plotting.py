"""SVG figures of regret and incumbent curves."""

from __future__ import annotations

import warnings
from collections import OrderedDict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = {
    "cumulative_regret": ("cumulative_regret", "Cumulative regret"),
    "incumbent_mae": ("incumbent_mae", "Best MAE so far (in)"),
}
ALIASES = {"regret": "cumulative_regret", "mae": "incumbent_mae"}

STYLE = {
    "font.size": 10,
    "axes.labelsize": 11,
    "legend.fontsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.6,
    "svg.fonttype": "none",
    "svg.hashsalt": "fuselage-qbo",
}
COLORS = {"qbo": "#e66101", "classic": "#2b5d9c"}


def _kind(kind):
    kind = ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown plot kind {kind!r}")
    return kind


def curve_bands(traces, kind):
    """Per-label mean curve and pointwise min/max envelope.

    ``traces`` is an iterable of objects with ``label`` and a per-query
    array attribute named by ``kind``.  Curves of unequal length are
    truncated to the shortest one in their group, with a warning.
    Returns ``{label: (x, mean, lo, hi, n_traces)}`` in first-seen order.
    """
    column = KINDS[_kind(kind)][0]
    groups = OrderedDict()
    for tr in traces:
        groups.setdefault(tr.label, []).append(np.asarray(getattr(tr, column), dtype=float))
    bands = OrderedDict()
    for label, curves in groups.items():
        n = min(len(c) for c in curves)
        if any(len(c) != n for c in curves):
            warnings.warn(f"{label}: traces of unequal length truncated to {n} queries",
                          stacklevel=2)
        Y = np.vstack([c[:n] for c in curves]) if n else np.zeros((len(curves), 0))
        x = np.arange(1, n + 1)
        bands[label] = (x, Y.mean(axis=0), Y.min(axis=0), Y.max(axis=0), len(curves))
    return bands


def plot(traces, kind, path):
    """Line chart of mean curve per label, shaded min/max across runs."""
    traces = list(traces)
    if not traces:
        raise ValueError("plot needs at least one trace")
    kind = _kind(kind)
    bands = curve_bands(traces, kind)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for label, (x, mean, lo, hi, n) in bands.items():
            color = COLORS.get(label.split()[0])
            line, = ax.plot(x, mean, color=color, label=label)
            if n > 1:
                ax.fill_between(x, lo, hi, color=line.get_color(), alpha=0.2, linewidth=0)
        ax.set_xlabel("Charged queries")
        ax.set_ylabel(KINDS[kind][1])
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
