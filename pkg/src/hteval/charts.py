"""Self-contained SVG charts for the emitted plot-data CSVs.

Purely cosmetic: every number drawn comes from the input CSV. Output is a
deterministic function of the input bytes.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import UnknownKind
from .fileio import atomic_write_text

KINDS = ("subgroup_ate", "outcome_ite_curves", "benefit_harm_density", "calibration", "roc",
         "ite_density")
WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 64, 170, 36, 48
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _num(cell: str) -> float | None:
    if cell is None or cell == "-" or cell == "":
        return None
    v = float(cell)
    return v if math.isfinite(v) else None


class _Canvas:
    def __init__(self, title, xlabel, ylabel, xs, ys):
        xs = [v for v in xs if v is not None]
        ys = [v for v in ys if v is not None]
        if not xs or not ys:
            raise UnknownKind("table has no plottable rows")
        self.x0, self.x1 = self._span(min(xs), max(xs))
        self.y0, self.y1 = self._span(min(ys), max(ys))
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        ]
        self._axes(xlabel, ylabel)
        self.legend = []

    @staticmethod
    def _span(lo, hi):
        if hi == lo:
            pad = abs(lo) * 0.1 or 0.5
            return lo - pad, hi + pad
        pad = (hi - lo) * 0.05
        return lo - pad, hi + pad

    def px(self, x):
        return LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)

    def py(self, y):
        return HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)

    def _axes(self, xlabel, ylabel):
        xr, yb = WIDTH - RIGHT, HEIGHT - BOTTOM
        p = self.parts
        p.append(f'<line x1="{LEFT}" y1="{yb}" x2="{xr}" y2="{yb}" stroke="black"/>')
        p.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{yb}" stroke="black"/>')
        for k in range(6):
            xv = self.x0 + (self.x1 - self.x0) * k / 5
            yv = self.y0 + (self.y1 - self.y0) * k / 5
            p.append(f'<text x="{self.px(xv):.2f}" y="{yb + 16}" text-anchor="middle">{xv:.3g}</text>')
            p.append(f'<text x="{LEFT - 6}" y="{self.py(yv) + 4:.2f}" text-anchor="end">{yv:.3g}</text>')
        p.append(f'<text x="{(LEFT + xr) / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
        p.append(f'<text x="14" y="{(TOP + yb) / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {(TOP + yb) / 2:.1f})">{escape(ylabel)}</text>')

    def color(self, label):
        if label not in self.legend:
            self.legend.append(label)
        return PALETTE[self.legend.index(label) % len(PALETTE)]

    def line(self, xs, ys, label, dash=False):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys)
                       if x is not None and y is not None)
        extra = ' stroke-dasharray="5,3"' if dash else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{self.color(label)}" '
                          f'stroke-width="1.5"{extra}/>')

    def band(self, xs, lo, hi, label):
        pts = [(x, v) for x, v in zip(xs, lo)] + [(x, v) for x, v in zip(reversed(xs), reversed(hi))]
        s = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in pts if y is not None)
        self.parts.append(f'<polygon points="{s}" fill="{self.color(label)}" fill-opacity="0.15" stroke="none"/>')

    def vbar(self, x, lo, hi, label):
        if lo is None or hi is None:
            return
        self.parts.append(f'<line x1="{self.px(x):.2f}" y1="{self.py(lo):.2f}" x2="{self.px(x):.2f}" '
                          f'y2="{self.py(hi):.2f}" stroke="{self.color(label)}"/>')

    def dots(self, xs, ys, label):
        c = self.color(label)
        for x, y in zip(xs, ys):
            if x is not None and y is not None:
                self.parts.append(f'<circle cx="{self.px(x):.2f}" cy="{self.py(y):.2f}" r="2.5" fill="{c}"/>')

    def hline(self, y):
        if self.y0 <= y <= self.y1:
            self.parts.append(f'<line x1="{LEFT}" y1="{self.py(y):.2f}" x2="{WIDTH - RIGHT}" '
                              f'y2="{self.py(y):.2f}" stroke="gray" stroke-dasharray="4,4"/>')

    def diagonal(self):
        lo, hi = max(self.x0, self.y0), min(self.x1, self.y1)
        if lo < hi:
            self.parts.append(f'<line x1="{self.px(lo):.2f}" y1="{self.py(lo):.2f}" x2="{self.px(hi):.2f}" '
                              f'y2="{self.py(hi):.2f}" stroke="gray" stroke-dasharray="4,4"/>')

    def render(self) -> str:
        for k, label in enumerate(self.legend):
            y = TOP + 14 * k + 6
            x = WIDTH - RIGHT + 12
            self.parts.append(f'<rect x="{x}" y="{y - 8}" width="10" height="10" '
                              f'fill="{PALETTE[k % len(PALETTE)]}"/>')
            self.parts.append(f'<text x="{x + 14}" y="{y + 1}">{escape(label)}</text>')
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _groups(rows, keys):
    out: dict[str, list[dict]] = {}
    for r in rows:
        out.setdefault(" ".join(r[k] for k in keys), []).append(r)
    return out


def _col(rows, name):
    return [_num(r[name]) for r in rows]


def _subgroup(rows):
    xs = [float(r["bin"]) for r in rows]
    c = _Canvas("ATE (risk ratio) by ITE subgroup", "ITE bin (low to high)", "risk ratio",
                xs, _col(rows, "rr_ci_low") + _col(rows, "rr_ci_high") + [1.0])
    c.hline(1.0)
    for label, g in _groups(rows, ("split", "partition")).items():
        bx = [float(r["bin"]) for r in g]
        c.line(bx, _col(g, "risk_ratio"), label)
        for x, lo, hi in zip(bx, _col(g, "rr_ci_low"), _col(g, "rr_ci_high")):
            c.vbar(x, lo, hi, label)
    return c


def _curves(rows):
    c = _Canvas("Outcome vs estimated ITE", "estimated ITE", "P(event)",
                _col(rows, "ite"), _col(rows, "ci_low") + _col(rows, "ci_high"))
    for label, g in _groups(rows, ("split", "partition", "arm")).items():
        xs = _col(g, "ite")
        c.band(xs, _col(g, "ci_low"), _col(g, "ci_high"), "arm " + label)
        c.line(xs, _col(g, "prob"), "arm " + label)
    return c


def _box_stats(v):
    q = np.quantile(v, [0.025, 0.25, 0.5, 0.75, 0.975])
    return [float(x) for x in q]


def _strata(rows):
    groups = {k: [v for v in _col(g, "risk_difference") if v is not None]
              for k, g in _groups(rows, ("partition", "stratum")).items()}
    groups = {k: v for k, v in groups.items() if v}
    allv = [x for v in groups.values() for x in v]
    c = _Canvas("Stratum ATE across replicates", "group", "risk difference",
                [0.0, float(max(len(groups) - 1, 1))], allv + [0.0])
    c.hline(0.0)
    for k, (label, v) in enumerate(groups.items()):
        lo, q1, med, q3, hi = _box_stats(v)
        col = c.color(label)
        x = c.px(float(k))
        c.parts.append(f'<line x1="{x:.2f}" y1="{c.py(lo):.2f}" x2="{x:.2f}" y2="{c.py(hi):.2f}" stroke="{col}"/>')
        c.parts.append(f'<rect x="{x - 12:.2f}" y="{c.py(q3):.2f}" width="24" '
                       f'height="{max(c.py(q1) - c.py(q3), 0.5):.2f}" fill="{col}" fill-opacity="0.4" stroke="{col}"/>')
        c.parts.append(f'<line x1="{x - 12:.2f}" y1="{c.py(med):.2f}" x2="{x + 12:.2f}" y2="{c.py(med):.2f}" '
                       f'stroke="black"/>')
    return c


def _calibration(rows):
    c = _Canvas("Calibration of outcome predictions", "mean predicted", "observed rate",
                _col(rows, "mean_predicted") + [0.0, 1.0], _col(rows, "observed_rate") + [0.0, 1.0])
    c.diagonal()
    for label, g in _groups(rows, ("split", "partition", "arm")).items():
        c.line(_col(g, "mean_predicted"), _col(g, "observed_rate"), "arm " + label)
        c.dots(_col(g, "mean_predicted"), _col(g, "observed_rate"), "arm " + label)
    return c


def _roc(rows):
    c = _Canvas("ROC of outcome predictions", "false positive rate", "true positive rate",
                [0.0, 1.0], [0.0, 1.0])
    c.diagonal()
    for label, g in _groups(rows, ("split", "partition", "arm")).items():
        c.line(_col(g, "fpr"), _col(g, "tpr"), "arm " + label)
    return c


def _density(rows, bins=30):
    vals = [v for v in _col(rows, "ite") if v is not None]
    if not vals:
        raise UnknownKind("table has no plottable rows")
    lo, hi = min(vals), max(vals)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    series = {}
    for label, g in _groups(rows, ("split", "partition")).items():
        v = np.array([x for x in _col(g, "ite") if x is not None])
        dens, _ = np.histogram(v, bins=edges, density=True)
        series[label] = dens
    c = _Canvas("Distribution of estimated ITE", "estimated ITE", "density",
                [float(lo), float(hi)], [0.0] + [float(d.max()) for d in series.values()])
    c.hline(0.0)
    for label, dens in series.items():
        xs, ys = [], []
        for k in range(bins):
            xs += [float(edges[k]), float(edges[k + 1])]
            ys += [float(dens[k])] * 2
        c.line(xs, ys, label)
    return c


_RENDER = {
    "subgroup_ate": _subgroup,
    "outcome_ite_curves": _curves,
    "benefit_harm_density": _strata,
    "calibration": _calibration,
    "roc": _roc,
    "ite_density": _density,
}


def render_svg(kind: str, rows: list[dict]) -> str:
    if kind not in _RENDER:
        raise UnknownKind(f"unknown chart kind {kind!r}; expected one of {KINDS}")
    if not rows:
        raise UnknownKind(f"{kind}: table is empty")
    return _RENDER[kind](rows).render()


def emit_svg_chart(kind: str, in_path: str | Path, out_path: str | Path) -> None:
    kind = kind.removesuffix(".csv")
    if kind not in _RENDER:
        raise UnknownKind(f"unknown chart kind {kind!r}; expected one of {KINDS}")
    with Path(in_path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    atomic_write_text(out_path, render_svg(kind, rows))
