"""Experiment reports: JSON with config echo, CSV sweep tables, and
standalone SVG log-log plots (no plotting dependency)."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Report", "version_hash", "write_csv", "write_svg_loglog"]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def version_hash(config: dict, version: str) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True) + version
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class Report:
    """Structured record: config echo, measured constants, witnesses.

    Re-running with an identical config reproduces measurements and witnesses
    bit-identically; the timing section is excluded from that contract.
    """

    config: dict
    measurements: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    version: str = ""

    def payload(self) -> dict:
        return {
            "config": _jsonable(self.config),
            "measurements": _jsonable(self.measurements),
            "witnesses": _jsonable(self.witnesses),
            "version_hash": version_hash(self.config, self.version),
        }

    def to_json(self) -> str:
        doc = self.payload()
        doc["timing"] = _jsonable(self.timing)
        return json.dumps(doc, sort_keys=True, indent=2)

    def write(self, path) -> None:
        Path(path).write_text(self.to_json())


def write_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_svg_loglog(path, xs, ys, title: str, slope: float | None = None,
                     width: int = 480, height: int = 360) -> None:
    """Standalone log-log polyline plot with an optional slope annotation."""
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    lx = [math.log10(x) for x in xs]
    ly = [math.log10(max(y, 1e-300)) for y in ys]
    pad = 48
    x0, x1 = min(lx), max(lx) or 1.0
    y0, y1 = min(ly), max(ly)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(lx, ly))
    marks = "".join(
        f'<circle cx="{sx(a):.1f}" cy="{sy(b):.1f}" r="3" fill="#c22"/>'
        for a, b in zip(lx, ly))
    note = (f'<text x="{pad}" y="{pad - 16}" font-size="12">'
            f"fitted log-log slope = {slope:.4f}</text>" if slope is not None else "")
    svg = f"""<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">
<rect width="100%" height="100%" fill="white"/>
<text x="{pad}" y="20" font-size="14">{title}</text>
{note}
<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>
<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>
<text x="{width - pad}" y="{height - pad + 28}" font-size="11" text-anchor="end">log10 x: {min(xs):g} .. {max(xs):g}</text>
<text x="{pad}" y="{height - 8}" font-size="11">log10 y: {min(ys):.4g} .. {max(ys):.4g}</text>
<polyline points="{pts}" fill="none" stroke="#36c" stroke-width="1.5"/>
{marks}
</svg>
"""
    Path(path).write_text(svg)
