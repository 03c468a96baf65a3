"""Tabular output shared by all methods, and minimal SVG line plots.

Every CDF result, whatever produced it, is written with the columns
``t, pi, cdf, absorb_cdf, evidence, undetermined, mu_<sp>..., var_<sp>...``.
Columns a method cannot provide are left empty (NaN). ``undetermined`` is
the probability of not yet being decided after the check at ``t``.
Globally formulae get an extra ``globally_prob`` column.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .cme import ExactCdf
from .engine import FptResult
from .ssa import EmpiricalCdf

BASE_COLUMNS = ("t", "pi", "cdf", "absorb_cdf", "evidence", "undetermined")


@dataclass(frozen=True)
class Table:
    columns: tuple
    data: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


def _increments(cdf):
    cdf = np.asarray(cdf, dtype=float)
    return np.diff(cdf, prepend=0.0)


def result_table(result, species=()) -> Table:
    """Shared-schema table for an engine, exact or Monte Carlo result."""
    species = tuple(species) or tuple(getattr(result, "species", ()))
    t = np.asarray(result.times, dtype=float)
    nan = np.full(t.size, np.nan)
    mu = np.full((t.size, len(species)), np.nan)
    var = np.full((t.size, len(species)), np.nan)
    if isinstance(result, FptResult):
        cols = [t, result.pi, result.cdf, result.absorb_cdf, result.evidence, result.undetermined[1:]]
        if species:
            mu, var = result.mu, result.variances
    elif isinstance(result, ExactCdf):
        cols = [t, _increments(result.cdf), result.cdf, result.absorb_cdf, nan, result.undetermined]
    elif isinstance(result, EmpiricalCdf):
        cols = [t, _increments(result.fraction), result.fraction, result.absorb_fraction, nan,
                1.0 - result.absorb_fraction]
    else:
        raise TypeError(f"cannot tabulate {type(result).__name__}")
    names = list(BASE_COLUMNS) + [f"mu_{s}" for s in species] + [f"var_{s}" for s in species]
    data = np.column_stack(cols + [mu.reshape(t.size, -1), var.reshape(t.size, -1)])
    if getattr(result, "negated", False):
        names.append("globally_prob")
        data = np.column_stack([data, result.satisfaction])
    return Table(tuple(names), data)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return ""
    return format(v, ".17g")


def table_csv(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.data:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def table_json(table: Table, **meta) -> str:
    out = dict(meta)
    for name, col in zip(table.columns, table.data.T):
        out[name] = [None if math.isnan(v) else float(v) for v in col]
    return json.dumps(out, indent=1, sort_keys=False) + "\n"


def write_table(table: Table, path: str, fmt: str = "csv", **meta) -> None:
    text = table_csv(table) if fmt == "csv" else table_json(table, **meta)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_csv(path: str) -> Table:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = tuple(rows[0]), rows[1:]
    data = np.array([[float(v) if v != "" else np.nan for v in r] for r in body], dtype=float)
    return Table(header, data.reshape(len(body), len(header)))


def comparison_table(times, sbi=None, ssa: EmpiricalCdf | None = None, exact=None) -> Table:
    """Per-time CDFs of the methods that ran, with pairwise absolute differences."""
    names, cols = ["t"], [np.asarray(times, dtype=float)]
    curves = {}
    if sbi is not None:
        curves["sbi"] = np.asarray(sbi.cdf)
    if ssa is not None:
        curves["ssa"] = np.asarray(ssa.cdf)
    if exact is not None:
        curves["exact"] = np.asarray(exact.cdf)
    for k, v in curves.items():
        names.append(k)
        cols.append(v)
    if ssa is not None:
        names += ["ssa_lower", "ssa_upper", "ssa_half_width"]
        cols += [ssa.lower, ssa.upper, np.full(len(times), ssa.half_width)]
    keys = list(curves)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            names.append(f"abs_{a}_{b}")
            cols.append(np.abs(curves[a] - curves[b]))
    return Table(tuple(names), np.column_stack(cols))


# -- SVG ------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def svg_plot(series: dict, title: str = "", xlabel: str = "t", ylabel: str = "probability",
             width: int = 640, height: int = 400, ylim=(0.0, 1.0), bands: dict | None = None) -> str:
    """Line plot of ``{label: (x, y)}`` as a standalone SVG document.

    ``bands`` maps a label to ``(x, lower, upper)`` drawn as a shaded area.
    """
    left, right, top, bottom = 60, 150, 30, 45
    pw, ph = width - left - right, height - top - bottom
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()]) if series else np.zeros(1)
    x0, x1 = float(np.nanmin(xs)), float(np.nanmax(xs))
    if x1 <= x0:
        x1 = x0 + 1.0
    y0, y1 = ylim

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.1f}" y1="{top + ph}" x2="{px(t):.1f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px(t):.1f}" y="{top + ph + 16}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{left - 4}" y1="{py(t):.1f}" x2="{left}" y2="{py(t):.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 7}" y="{py(t) + 4:.1f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    labels = list(series)
    for label, (x, lo, hi) in (bands or {}).items():
        color = _PALETTE[labels.index(label) % len(_PALETTE)] if label in labels else "#999999"
        pts = [f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, hi)]
        pts += [f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[::-1], lo[::-1])]
        out.append(f'<polygon points="{" ".join(pts)}" fill="{color}" fill-opacity="0.15" stroke="none"/>')
    for k, (label, (x, y)) in enumerate(series.items()):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y) if np.isfinite(b))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        ly = top + 14 + 18 * k
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 37}" y="{ly + 4}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path: str, series: dict, **kwargs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg_plot(series, **kwargs))


def trajectory_table(trajectory) -> Table:
    names = ("t",) + tuple(trajectory.species)
    return Table(names, np.column_stack([trajectory.times, trajectory.states.astype(float)]))


def moment_table(times, mu, sigma, species) -> Table:
    """``t, mu_<sp>..., Sigma_<a>_<b>...`` (upper triangle, row major)."""
    n = len(species)
    names = ["t"] + [f"mu_{s}" for s in species]
    cols = [np.asarray(times, dtype=float), np.asarray(mu).reshape(len(times), n)]
    for i in range(n):
        for j in range(i, n):
            names.append(f"Sigma_{species[i]}_{species[j]}")
            cols.append(np.asarray(sigma)[:, i, j][:, None])
    return Table(tuple(names), np.column_stack(cols))
