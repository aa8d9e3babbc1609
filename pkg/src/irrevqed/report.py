"""Byte-deterministic CSV, JSON and SVG renderings of scenario reports."""

from __future__ import annotations

import io
import json
import math
from pathlib import Path

FORMATS = ("csv", "json", "svg")
CSV_COLUMNS = ("environment", "quantity", "method", "estimate", "delta", "diverged_fraction", "diverged")
BAR_QUANTITIES = ("sigma", "erased_mi")
RULES_BITS = (0.0, 1.0, 2.0)


def _num(x: float) -> str:
    if x is None:
        return "inf"
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x + 0.0:.12g}"  # + 0.0 folds negative zero


def _rows(reports) -> list[dict]:
    rows = []
    for r in reports:
        rows.extend(q.to_json() for q in r.quantities)
    return rows


def _as_list(reports) -> list:
    if reports is None:
        return []
    if hasattr(reports, "quantities"):
        return [reports]
    return list(reports)


def render_csv(reports) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for q in _rows(_as_list(reports)):
        buf.write(",".join([q["environment"], q["name"], q["method"], _num(q["estimate"]),
                            _num(q["delta"] if q["delta"] is not None else math.nan),
                            _num(q["diverged_fraction"]), "1" if q["diverged"] else "0"]) + "\n")
    return buf.getvalue()


def render_json(reports) -> str:
    return json.dumps([r.to_json() for r in _as_list(reports)], sort_keys=True, indent=2) + "\n"


def _bar_values(report) -> list[tuple[str, dict | None]]:
    out = []
    for name in BAR_QUANTITIES:
        picked = None
        for method in ("ensemble", "true", "mle"):
            picked = next((q.to_json() for q in report.quantities
                           if q.name == name and q.method == method), None)
            if picked is not None:
                break
        out.append((name, picked))
    return out


def render_svg(reports) -> str:
    """Grouped bars of entropy production and erased mutual information.

    Dashed rules mark 0, 1 and 2 bits.  A diverged value is drawn as a
    hatched bar reaching the top of the frame and labelled with the infinity
    sign; error bars show one ensemble standard deviation.
    """
    reports = _as_list(reports)
    top_bits = 3.0
    width, height = 120 + 140 * max(len(reports), 1), 320
    x0, y0, plot_h = 60, 280, 240

    def y(bits: float) -> float:
        return y0 - plot_h * min(max(bits, 0.0), top_bits) / top_bits

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse">'
        '<path d="M0,6 L6,0" stroke="#444" stroke-width="1"/></pattern></defs>',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for b in RULES_BITS:
        out.append(f'<line class="rule" x1="{x0}" y1="{y(b):.2f}" x2="{width - 20}" y2="{y(b):.2f}" '
                   f'stroke="#888" stroke-dasharray="4,3"/>')
        out.append(f'<text x="{x0 - 8}" y="{y(b) + 4:.2f}" font-size="11" text-anchor="end">{b:g} bit</text>')
    colours = {"sigma": "#3b6ea8", "erased_mi": "#d08c2c"}
    for i, r in enumerate(reports):
        gx = x0 + 30 + 140 * i
        for j, (name, q) in enumerate(_bar_values(r)):
            bx = gx + 45 * j
            if q is None:
                continue
            if q["diverged"] or q["estimate"] is None:
                out.append(f'<rect x="{bx}" y="{y(top_bits):.2f}" width="36" height="{plot_h:.2f}" '
                           f'fill="url(#hatch)" stroke="{colours[name]}"/>')
                out.append(f'<text x="{bx + 18}" y="{y(top_bits) - 4:.2f}" font-size="14" '
                           f'text-anchor="middle">&#8734;</text>')
                continue
            v = q["estimate"]
            out.append(f'<rect x="{bx}" y="{y(v):.2f}" width="36" height="{y0 - y(v):.2f}" '
                       f'fill="{colours[name]}"><title>{name} = {_num(v)}</title></rect>')
            dv = q["delta"]
            if dv:
                out.append(f'<line x1="{bx + 18}" y1="{y(v - dv):.2f}" x2="{bx + 18}" '
                           f'y2="{y(v + dv):.2f}" stroke="black"/>')
        out.append(f'<text x="{gx + 40}" y="{y0 + 18}" font-size="12" '
                   f'text-anchor="middle">{r.environment}</text>')
    lx = x0 + 10
    for k, name in enumerate(BAR_QUANTITIES):
        out.append(f'<rect x="{lx + 110 * k}" y="10" width="10" height="10" fill="{colours[name]}"/>')
        out.append(f'<text x="{lx + 110 * k + 14}" y="19" font-size="11">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


_RENDERERS = {"csv": render_csv, "json": render_json, "svg": render_svg}


def render_report(reports, fmt: str = "csv", path: str | Path | None = None) -> str:
    """Render one report or a sequence of them; also write to ``path`` if given."""
    if fmt not in _RENDERERS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    text = _RENDERERS[fmt](reports)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text

