"""File outputs: region CSV, condition JSON, region SVG and atomic writes."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np


def _stage(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
    except BaseException:
        os.unlink(tmp)
        raise
    return tmp


def atomic_write(path, text):
    """Write ``text`` to a sibling temp file and rename it over ``path``."""
    write_bundle({path: text})


def write_bundle(files):
    """Write several ``{path: text}`` outputs. Every file is staged before the
    first rename, so a failed write leaves none of them behind."""
    staged = []
    try:
        for path, text in files.items():
            staged.append((_stage(path, text), path))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def region_csv(region):
    lines = ["kp,kd,predicted,stable"]
    for kp, kd, p, s in zip(region.kp, region.kd, region.predicted, region.stable):
        lines.append(f"{float(kp)!r},{float(kd)!r},{int(p)},{int(s)}")
    return "\n".join(lines) + "\n"


def region_json(region):
    d = region.conditions_dict()
    d["summary"] = region.summary()
    return dumps(d)


def _fmt(v):
    return f"{v:.2f}"


def region_svg(region, width=640, height=480, title=None):
    """Self-contained SVG: stable points green, unstable red, predicted points filled,
    module ellipse in blue and phase line in black."""
    pad = 50
    kp, kd = np.asarray(region.kp), np.asarray(region.kd)
    x0, x1 = float(kp.min()), float(kp.max())
    y0, y1 = float(kd.min()), float(kd.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<clipPath id="plot"><rect x="{pad}" y="{pad}" width="{width - 2 * pad}" '
           f'height="{height - 2 * pad}"/></clipPath>',
           f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
           f'fill="none" stroke="#444" stroke-width="1"/>']
    r = max(1.0, min(4.0, 0.4 * (width - 2 * pad) / max(1, region.resolution[0])))
    out.append('<g clip-path="url(#plot)">')
    for a, b, p, s in zip(kp, kd, region.predicted, region.stable):
        col = "#2a9d2a" if s else "#d62728"
        fill = col if p else "none"
        out.append(f'<circle cx="{_fmt(sx(a))}" cy="{_fmt(sy(b))}" r="{r:.2f}" fill="{fill}" '
                   f'stroke="{col}" stroke-width="0.6"/>')
    e = region.ellipse
    if not e.degenerate:
        xs, ys = e.boundary(200)
        path = " ".join(f"{_fmt(sx(p))},{_fmt(sy(q))}" for p, q in zip(xs, ys))
        out.append(f'<polygon points="{path}" fill="none" stroke="#1f4fd6" stroke-width="1.5"/>')
    elif e.q22 > 0:
        # strip: (sqrt(q11) Kp Ts + s sqrt(q22) Kd)^2 <= rhs
        a, b = np.sqrt(e.q11) * e.ts, np.copysign(np.sqrt(e.q22), e.q12)
        for edge in (-np.sqrt(e.rhs), np.sqrt(e.rhs)):
            ya, yb = (edge - a * x0) / b, (edge - a * x1) / b
            out.append(f'<line x1="{_fmt(sx(x0))}" y1="{_fmt(sy(ya))}" x2="{_fmt(sx(x1))}" '
                       f'y2="{_fmt(sy(yb))}" stroke="#1f4fd6" stroke-width="1.5"/>')
    line = region.line if region.line is not None else region.simplified_line
    if line is not None and not line.vertical:
        out.append(f'<line x1="{_fmt(sx(x0))}" y1="{_fmt(sy(line.kd_at(x0)))}" x2="{_fmt(sx(x1))}" '
                   f'y2="{_fmt(sy(line.kd_at(x1)))}" stroke="black" stroke-width="1.5"/>')
    out.append("</g>")
    for v in np.linspace(x0, x1, 5):
        out.append(f'<text x="{_fmt(sx(v))}" y="{height - pad + 15}" text-anchor="middle">{v:.4g}</text>')
    for v in np.linspace(y0, y1, 5):
        out.append(f'<text x="{pad - 5}" y="{_fmt(sy(v) + 4)}" text-anchor="end">{v:.4g}</text>')
    out.append(f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle">Kp</text>')
    out.append(f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {height / 2:.1f})">Kd</text>')
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">{title}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
