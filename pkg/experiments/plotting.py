# experiments/plotting.py
"""
SVG charts for trace, values and summary CSVs, drawn with reportlab graphics.

Trace files become one polyline of log10(Res.val) against k; a directory of
traces (one exp1 tau_* folder) is overlaid on a single chart. Summary files
become one polyline of the mean objective per box, with +/- one standard
deviation whiskers at every sample size. Values files become a scatter of the
per-instance objective at every sample size.
"""
from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

from reportlab.graphics import renderSVG
from reportlab.graphics.shapes import Circle, Drawing, Line, PolyLine, String
from reportlab.lib import colors

from apps.core.exceptions import SchemaMismatch
from experiments.data import SUMMARY_HEADER, VALUES_HEADER
from ippgda.data import TRACE_HEADER

logger = logging.getLogger(__name__)

WIDTH, HEIGHT = 800, 500
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 80, 30, 40, 60
LOG_FLOOR = 1e-16
SERIES_COLORS = [
    colors.HexColor(c)
    for c in ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
]
OVERLAY_NAME = "overlay.svg"
SCATTER_SPREAD = 0.15


def _read(path: Path) -> tuple[tuple[str, ...], list[list[str]]]:
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = tuple(h.strip() for h in next(reader, ()))
        rows = [row for row in reader if row]
    return header, rows


class _Frame:
    """Maps data coordinates onto the plotting area."""

    def __init__(self, x_lo, x_hi, y_lo, y_hi):
        if x_hi == x_lo:
            x_lo, x_hi = x_lo - 1, x_hi + 1
        if y_hi == y_lo:
            y_lo, y_hi = y_lo - 1, y_hi + 1
        self.x_lo, self.x_hi, self.y_lo, self.y_hi = x_lo, x_hi, y_lo, y_hi

    def x(self, v):
        return MARGIN_LEFT + (v - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)

    def y(self, v):
        return MARGIN_BOTTOM + (v - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - MARGIN_BOTTOM - MARGIN_TOP)


def _axes(d: Drawing, title: str, y_label: str) -> None:
    d.add(Line(MARGIN_LEFT, MARGIN_BOTTOM, WIDTH - MARGIN_RIGHT, MARGIN_BOTTOM, strokeColor=colors.black))
    d.add(Line(MARGIN_LEFT, MARGIN_BOTTOM, MARGIN_LEFT, HEIGHT - MARGIN_TOP, strokeColor=colors.black))
    d.add(String(WIDTH / 2, HEIGHT - MARGIN_TOP / 2, title, textAnchor="middle", fontSize=14))
    d.add(String(10, HEIGHT / 2, y_label, fontSize=10))


def _y_ticks(d: Drawing, frame: _Frame, fmt) -> None:
    for i in range(5):
        v = frame.y_lo + i * (frame.y_hi - frame.y_lo) / 4
        y = frame.y(v)
        d.add(Line(MARGIN_LEFT - 5, y, MARGIN_LEFT, y, strokeColor=colors.black))
        d.add(String(MARGIN_LEFT - 8, y - 3, fmt(v), textAnchor="end", fontSize=9))


def overlay_drawing(traces: list[list[list[str]]], title: str = "Res.val") -> Drawing:
    """One log-scale Res.val polyline per trace on shared axes."""
    series = []
    for rows in traces:
        ks = [int(r[0]) for r in rows]
        logs = [math.log10(max(float(r[1]), LOG_FLOOR)) for r in rows]
        series.append((ks, logs))
    all_k = [k for ks, _ in series for k in ks]
    all_logs = [v for _, logs in series for v in logs]
    frame = _Frame(min(all_k), max(all_k), math.floor(min(all_logs)), math.ceil(max(all_logs)))

    d = Drawing(WIDTH, HEIGHT)
    _axes(d, title, "log10 Res.val")
    _y_ticks(d, frame, lambda v: f"1e{v:.0f}" if float(v).is_integer() else f"1e{v:.1f}")
    for k in (frame.x_lo, frame.x_hi):
        d.add(String(frame.x(k), MARGIN_BOTTOM - 18, f"k={k:g}", textAnchor="middle", fontSize=9))
    for idx, (ks, logs) in enumerate(series):
        points = []
        for k, v in zip(ks, logs):
            points.extend([frame.x(k), frame.y(v)])
        d.add(PolyLine(points, strokeColor=SERIES_COLORS[idx % len(SERIES_COLORS)], strokeWidth=1.5))
    return d


def trace_drawing(rows: list[list[str]], title: str = "Res.val") -> Drawing:
    return overlay_drawing([rows], title)


def _size_axis(d: Drawing, frame: _Frame, sizes: list[int]) -> dict[int, int]:
    # sample sizes sit at evenly spaced slots
    slot = {n: i for i, n in enumerate(sizes)}
    for n in sizes:
        x = frame.x(slot[n])
        d.add(Line(x, MARGIN_BOTTOM, x, MARGIN_BOTTOM - 5, strokeColor=colors.black))
        d.add(String(x, MARGIN_BOTTOM - 18, f"N={n}", textAnchor="middle", fontSize=9))
    return slot


def _legend(d: Drawing, idx: int, label: str, color) -> None:
    d.add(String(WIDTH - MARGIN_RIGHT - 5, HEIGHT - MARGIN_TOP - 15 * (idx + 1), label,
                 textAnchor="end", fontSize=10, fillColor=color))


def summary_drawing(rows: list[list[str]], title: str = "SAA objective") -> Drawing:
    series: dict[str, list[tuple[int, float, float]]] = {}
    for box, n, _count, mean, std, *_rest in rows:
        series.setdefault(box, []).append((int(n), float(mean), float(std)))
    sizes = sorted({n for pts in series.values() for n, _, _ in pts})
    lows = [m - s for pts in series.values() for _, m, s in pts]
    highs = [m + s for pts in series.values() for _, m, s in pts]
    frame = _Frame(-0.5, len(sizes) - 0.5, min(lows), max(highs))

    d = Drawing(WIDTH, HEIGHT)
    _axes(d, title, "objective")
    _y_ticks(d, frame, lambda v: f"{v:.3g}")
    slot = _size_axis(d, frame, sizes)

    for idx, (box, pts) in enumerate(sorted(series.items())):
        color = SERIES_COLORS[idx % len(SERIES_COLORS)]
        line = []
        for n, mean, std in sorted(pts):
            x = frame.x(slot[n])
            line.extend([x, frame.y(mean)])
            d.add(Line(x, frame.y(mean - std), x, frame.y(mean + std), strokeColor=color))
        d.add(PolyLine(line, strokeColor=color, strokeWidth=1.5))
        _legend(d, idx, f"box {box}", color)
    return d


def values_drawing(rows: list[list[str]], title: str = "SAA objective per instance") -> Drawing:
    """One marker per (box, N, instance); boxes sit side by side within each N slot."""
    series: dict[str, list[tuple[int, float]]] = {}
    for box, n, _instance, objective, _psi in rows:
        series.setdefault(box, []).append((int(n), float(objective)))
    sizes = sorted({n for pts in series.values() for n, _ in pts})
    values = [v for pts in series.values() for _, v in pts]
    frame = _Frame(-0.5, len(sizes) - 0.5, min(values), max(values))

    d = Drawing(WIDTH, HEIGHT)
    _axes(d, title, "objective")
    _y_ticks(d, frame, lambda v: f"{v:.3g}")
    slot = _size_axis(d, frame, sizes)

    boxes = sorted(series)
    for idx, box in enumerate(boxes):
        color = SERIES_COLORS[idx % len(SERIES_COLORS)]
        offset = (idx - (len(boxes) - 1) / 2) * SCATTER_SPREAD
        for n, v in series[box]:
            d.add(Circle(frame.x(slot[n] + offset), frame.y(v), 3, fillColor=color, strokeColor=color))
        _legend(d, idx, f"box {box}", color)
    return d


def _render(drawing: Drawing, out_path: Path, rows: int) -> Path:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(renderSVG.drawToString(drawing), encoding="utf-8")
    logger.info("wrote %s (%d rows)", out_path, rows)
    return out_path


def emit_plot(csv_path: str | Path, out_path: str | Path | None = None) -> Path:
    csv_path = Path(csv_path)
    out_path = Path(out_path) if out_path else csv_path.with_suffix(".svg")
    header, rows = _read(csv_path)
    if header == TRACE_HEADER:
        build = trace_drawing
    elif header == SUMMARY_HEADER:
        build = summary_drawing
    elif header == VALUES_HEADER:
        build = values_drawing
    else:
        raise SchemaMismatch(f"{csv_path}: unrecognised header {','.join(header) or '<empty>'}")
    if not rows:
        raise SchemaMismatch(f"{csv_path}: no data rows to plot")
    try:
        drawing = build(rows)
    except (ValueError, IndexError) as exc:
        raise SchemaMismatch(f"{csv_path}: malformed row ({exc})") from exc
    return _render(drawing, out_path, len(rows))


def emit_overlay(trace_dir: str | Path, out_path: str | Path | None = None) -> Path:
    """
    Overlay every trace CSV in one directory (an exp1 tau_* folder) on a
    single Res.val chart, in file-name order.
    """
    trace_dir = Path(trace_dir)
    out_path = Path(out_path) if out_path else trace_dir / OVERLAY_NAME
    paths = sorted(trace_dir.glob("*.csv"))
    if not paths:
        raise SchemaMismatch(f"{trace_dir}: no trace CSVs to overlay")
    traces = []
    for path in paths:
        header, rows = _read(path)
        if header != TRACE_HEADER:
            raise SchemaMismatch(f"{path}: not a trace CSV ({','.join(header) or '<empty>'})")
        if not rows:
            raise SchemaMismatch(f"{path}: no data rows to plot")
        traces.append(rows)
    try:
        drawing = overlay_drawing(traces, title=f"Res.val ({trace_dir.name}, {len(traces)} runs)")
    except (ValueError, IndexError) as exc:
        raise SchemaMismatch(f"{trace_dir}: malformed row ({exc})") from exc
    return _render(drawing, out_path, sum(len(t) for t in traces))
