"""Monitoring real inspection counts against calibrated limits.

Input is ``time,n,nonconforming[,phase]`` (one row per inspection period)
or ``time,status`` (one 0/1 row per inspected item, aggregated on load).
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from xml.etree import ElementTree as ET

import numpy as np

from .chart import ChartLimits, Variant
from .errors import DataError, ValidationError
from .misclass import correct_proportion


@dataclass(frozen=True)
class CountSeries:
    times: tuple
    n: np.ndarray
    d: np.ndarray
    phase: tuple = None

    def __post_init__(self):
        if len(self.times) == 0:
            raise DataError("count series is empty")
        if not (len(self.times) == len(self.n) == len(self.d)):
            raise DataError("times, n and d have different lengths")
        if self.phase is not None and len(self.phase) != len(self.times):
            raise DataError("phase labels do not match the number of periods")
        if np.any(np.diff(np.asarray(self.times)) <= 0):
            raise DataError("period indices must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def proportions(self) -> np.ndarray:
        return self.d / self.n

    def select(self, phase: str) -> CountSeries:
        if self.phase is None:
            raise DataError("series has no phase column")
        keep = [i for i, ph in enumerate(self.phase) if ph.upper() == phase.upper()]
        if not keep:
            raise DataError(f"no periods with phase {phase!r}")
        return CountSeries(tuple(self.times[i] for i in keep), self.n[keep], self.d[keep],
                           tuple(self.phase[i] for i in keep))

    def pooled_proportion(self) -> float:
        return float(self.d.sum() / self.n.sum())


def _open_text(source):
    if isinstance(source, (str, Path)):
        return Path(source).read_text(encoding="utf-8")
    return source.read()


def ingest_counts(source) -> CountSeries:
    """Parse and validate a count table (path or text stream)."""
    text = _open_text(source)
    rows = [(i, r) for i, r in enumerate(csv.reader(io.StringIO(text)), start=1)
            if r and any(c.strip() for c in r) and not r[0].lstrip().startswith("#")]
    if not rows:
        raise DataError("count series is empty")
    header_line, header = rows[0]
    header = [h.strip().lower() for h in header]
    body = rows[1:]
    if not body:
        raise DataError("count series is empty")
    if header[:3] == ["time", "n", "nonconforming"] and len(header) in (3, 4):
        return _read_counts(header, body)
    if header == ["time", "status"]:
        return _read_items(body)
    raise DataError("expected header time,n,nonconforming[,phase] or time,status", line=header_line)


def _int_field(value, what, lineno):
    try:
        out = int(value)
    except ValueError:
        raise DataError(f"{what} is not an integer: {value!r}", line=lineno) from None
    return out


def _read_counts(header, body):
    has_phase = len(header) == 4
    if has_phase and header[3] != "phase":
        raise DataError(f"unexpected column {header[3]!r}", line=1)
    times, ns, ds, phases = [], [], [], []
    seen = set()
    for lineno, row in body:
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        t = _int_field(row[0], "time", lineno)
        n = _int_field(row[1], "n", lineno)
        d = _int_field(row[2], "nonconforming", lineno)
        if n < 1:
            raise DataError(f"inspected count must be positive, got {n}", line=lineno)
        if d < 0 or d > n:
            raise DataError(f"nonconforming count {d} outside [0, {n}]", line=lineno)
        if t in seen:
            raise DataError(f"duplicate period {t}", line=lineno)
        if times and t < times[-1]:
            raise DataError(f"period {t} is out of order", line=lineno)
        seen.add(t)
        times.append(t)
        ns.append(n)
        ds.append(d)
        if has_phase:
            phases.append(row[3].strip())
    return CountSeries(tuple(times), np.array(ns), np.array(ds), tuple(phases) if has_phase else None)


def _read_items(body):
    agg = {}
    last = None
    for lineno, row in body:
        if len(row) != 2:
            raise DataError(f"expected 2 fields, got {len(row)}", line=lineno)
        t = _int_field(row[0], "time", lineno)
        s = _int_field(row[1], "status", lineno)
        if s not in (0, 1):
            raise DataError(f"status must be 0 or 1, got {s}", line=lineno)
        if last is not None and t < last:
            raise DataError(f"period {t} is out of order", line=lineno)
        last = t
        n, d = agg.get(t, (0, 0))
        agg[t] = (n + 1, d + s)
    times = tuple(sorted(agg))
    return CountSeries(times, np.array([agg[t][0] for t in times]), np.array([agg[t][1] for t in times]))


@dataclass(frozen=True)
class ChartSeries:
    times: tuple
    ewma: np.ndarray
    ucl: np.ndarray
    signal: np.ndarray
    header: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def first_signal(self):
        hits = np.flatnonzero(self.signal)
        return None if hits.size == 0 else self.times[hits[0]]

    @property
    def n_signals(self) -> int:
        return int(np.sum(self.signal))

    def to_csv(self, with_header=True) -> str:
        buf = io.StringIO()
        if with_header:
            for key, value in self.header.items():
                buf.write(f"# {key}: {_fmt(value) if isinstance(value, float) else value}\n")
        buf.write("time,ewma,ucl,signal\n")
        for t, e, u, s in zip(self.times, self.ewma, self.ucl, self.signal):
            buf.write(f"{t},{_fmt(e)},{_fmt(u)},{int(bool(s))}\n")
        return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def read_chart_csv(source) -> dict:
    """Parse a chart CSV written by :meth:`ChartSeries.to_csv` back into columns."""
    text = _open_text(source)
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    cols = {"time": [], "ewma": [], "ucl": [], "signal": []}
    for row in reader:
        cols["time"].append(int(row["time"]))
        cols["ewma"].append(float(row["ewma"]))
        cols["ucl"].append(float(row["ucl"]))
        cols["signal"].append(row["signal"] == "1")
    return cols


def monitored_proportions(series: CountSeries, variant, pi) -> np.ndarray:
    variant = Variant.parse(variant)
    raw = series.proportions
    if variant is Variant.CORRECTED:
        return correct_proportion(raw, pi)
    return raw


def run_chart(series: CountSeries, limits: ChartLimits) -> ChartSeries:
    """Apply the EWMA recursion to every period and flag ``EWMA >= UCL``.

    Monitoring does not stop at the first signal. The UCL at period ``t``
    uses that period's inspected count.
    """
    cfg = limits.cfg
    per_period = replace(limits, cfg=replace(cfg, n=tuple(int(k) for k in series.n)))
    values = monitored_proportions(series, limits.variant, limits.pi)
    lam = cfg.lam
    ewma = np.empty(len(series))
    e = per_period.center / limits.scale
    for i, v in enumerate(values):
        e = lam * v + (1.0 - lam) * e
        ewma[i] = e
    ucl = per_period.ucl_at(np.arange(1, len(series) + 1)) / limits.scale
    ewma_scaled = ewma * limits.scale
    ucl_scaled = ucl * limits.scale
    header = {
        "variant": limits.variant.value,
        "lambda": lam,
        "L": limits.l_coefficient,
        "center": limits.center,
        "ucl_asymptotic": limits.ucl_asymptotic,
        "lcl": limits.lcl,
        "pi": ",".join(f"{k}={_fmt(v)}" for k, v in limits.pi.to_dict().items()),
    }
    return ChartSeries(series.times, ewma_scaled, ucl_scaled, ewma_scaled >= ucl_scaled, header)


def p0_star_from_data(series: CountSeries, phase="IC") -> float:
    """Pooled surrogate proportion of the in-control rows (departs from strict Phase II)."""
    ic = series.select(phase) if series.phase is not None else series
    warnings.warn("estimating p0* from the monitored data; limits are no longer Phase II known-parameter limits",
                  stacklevel=2)
    return ic.pooled_proportion()


DEFAULT_STYLE = {
    "width": 720,
    "height": 320,
    "margin": 48,
    "line_color": "#1f4e79",
    "ucl_color": "#b22222",
    "point_color": "#1f4e79",
    "signal_color": "#e00000",
    "radius": 3.0,
}


def render_chart(cs: ChartSeries, style=None, title=None) -> str:
    """Render a chart series as a standalone SVG document.

    One ``circle.point`` per period, signals additionally carry the class
    ``signal``. The EWMA polyline, UCL curve and LCL baseline have classes
    ``ewma``, ``ucl`` and ``lcl``.
    """
    if len(cs) == 0:
        raise ValidationError("cannot render an empty series")
    st = dict(DEFAULT_STYLE)
    st.update(style or {})
    w, h, mg = st["width"], st["height"], st["margin"]
    lcl = float(cs.header.get("lcl", 0.0))
    ys = np.concatenate([cs.ewma, cs.ucl, [lcl]])
    lo, hi = float(ys.min()), float(ys.max())
    if math.isclose(lo, hi):
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    x = np.linspace(mg, w - mg, len(cs)) if len(cs) > 1 else np.array([w / 2.0])

    def y(v):
        return h - mg - (np.asarray(v) - lo) / (hi - lo) * (h - 2 * mg)

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(w), height=str(h),
                     viewBox=f"0 0 {w} {h}")
    ET.SubElement(svg, "rect", x="0", y="0", width=str(w), height=str(h), fill="white")
    label = title or f"{cs.header.get('variant', '')} EWMA p chart".strip()
    ET.SubElement(svg, "text", x=str(mg), y=str(mg / 2), **{"font-size": "14", "font-family": "sans-serif"}).text = label
    ET.SubElement(svg, "line", x1=str(mg), y1=str(h - mg), x2=str(w - mg), y2=str(h - mg), stroke="black")
    ET.SubElement(svg, "line", x1=str(mg), y1=str(mg), x2=str(mg), y2=str(h - mg), stroke="black")
    for val in (lo + pad, hi - pad):
        ET.SubElement(svg, "text", x=str(mg - 4), y=f"{float(y(val)):.2f}",
                      **{"font-size": "10", "text-anchor": "end", "font-family": "sans-serif"}).text = _fmt(val)
    ET.SubElement(svg, "line", x1=str(mg), x2=str(w - mg), y1=f"{float(y(lcl)):.2f}", y2=f"{float(y(lcl)):.2f}",
                  stroke="gray", **{"stroke-dasharray": "4 3", "class": "lcl"})

    def points(vals):
        return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(x, y(vals)))

    ET.SubElement(svg, "polyline", points=points(cs.ucl), fill="none", stroke=st["ucl_color"],
                  **{"class": "ucl", "stroke-width": "1.5"})
    ET.SubElement(svg, "polyline", points=points(cs.ewma), fill="none", stroke=st["line_color"],
                  **{"class": "ewma", "stroke-width": "1"})
    for xi, yi, t, s in zip(x, y(cs.ewma), cs.times, cs.signal):
        attrs = {"cx": f"{xi:.2f}", "cy": f"{yi:.2f}", "r": str(st["radius"]),
                 "fill": st["signal_color"] if s else st["point_color"],
                 "class": "point signal" if s else "point"}
        ET.SubElement(svg, "circle", **attrs).text = None
        ET.SubElement(svg[-1], "title").text = f"t={t}"
    return ET.tostring(svg, encoding="unicode", xml_declaration=False)


def write_chart(cs: ChartSeries, svg_path, style=None):
    """Write the SVG and a companion CSV (same stem) of the series."""
    svg_path = Path(svg_path)
    svg_path.write_text('<?xml version="1.0" encoding="UTF-8"?>\n' + render_chart(cs, style) + "\n", encoding="utf-8")
    svg_path.with_suffix(".csv").write_text(cs.to_csv(), encoding="utf-8")
    return svg_path
