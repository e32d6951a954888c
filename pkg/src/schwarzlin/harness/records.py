"""Per-iteration records, contraction rates, and CSV/SVG output."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

from ..errors import InsufficientDataError

__all__ = [
    "IterationRecord",
    "build_records",
    "noise_floor",
    "geometric_mean_rate",
    "emit_csv",
    "read_csv",
    "emit_svg_decay_plot",
    "decade_ticks",
]

log = logging.getLogger(__name__)

CSV_HEADER = ["iter", "energy", "abs_error", "rel_error", "rate"]


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    energy: float
    abs_error: float
    rel_error: float
    rate: float | None = None


def build_records(energies, reference_energy: float) -> list[IterationRecord]:
    scale = abs(reference_energy) if reference_energy != 0 else 1.0
    records = []
    prev = None
    for n, E in enumerate(energies):
        err = float(E) - reference_energy
        rate = err / prev if prev not in (None, 0.0) else None
        records.append(IterationRecord(n, float(E), err, err / scale, rate))
        prev = err
    return records


def noise_floor(reference_energy: float) -> float:
    """Errors below 1000 ulp of the reference energy are rounding noise."""
    return 1e3 * math.ulp(abs(reference_energy))


def geometric_mean_rate(records, iters: int = 30, reference_energy: float | None = None) -> float:
    """(e_k / e_0)^(1/k) over the first k <= iters steps above the noise floor."""
    if reference_energy is None:
        reference_energy = records[0].energy - records[0].abs_error
    floor = noise_floor(reference_energy)
    usable = 0
    for rec in records[: iters + 1]:
        if rec.abs_error <= floor:
            break
        usable += 1
    if usable < 2:
        raise InsufficientDataError(f"only {usable} records above the noise floor {floor:.3e}")
    if usable < iters + 1:
        log.warning("rate uses %d steps instead of %d (noise floor reached)", usable - 1, iters)
    k = usable - 1
    return (records[k].abs_error / records[0].abs_error) ** (1.0 / k)


def _fmt(x):
    return "" if x is None else f"{x:.16e}"


def emit_csv(records, path) -> None:
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([r.iter, _fmt(r.energy), _fmt(r.abs_error), _fmt(r.rel_error), _fmt(r.rate)])


def read_csv(path) -> list[IterationRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            IterationRecord(
                int(row["iter"]),
                float(row["energy"]),
                float(row["abs_error"]),
                float(row["rel_error"]),
                float(row["rate"]) if row["rate"] else None,
            )
            for row in reader
        ]


def decade_ticks(values) -> list[int]:
    """Integer exponents of the decades spanning the positive ``values``."""
    pos = [v for v in values if v > 0 and math.isfinite(v)]
    if not pos:
        return [0]
    lo = math.floor(math.log10(min(pos)))
    hi = math.ceil(math.log10(max(pos)))
    if lo == hi:
        hi += 1
    return list(range(lo, hi + 1))


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]


def emit_svg_decay_plot(series, labels, path, title="", width=640, height=420) -> None:
    """Log-scale plot of rel_error against iteration, one polyline per series."""
    if not series or any(not s for s in series):
        raise ValueError("every series needs at least one record")
    left, right, top, bottom = 70, 150, 30, 50
    pw, ph = width - left - right, height - top - bottom
    all_err = [r.rel_error for s in series for r in s]
    ticks = decade_ticks(all_err)
    lo, hi = ticks[0], ticks[-1]
    max_iter = max(max(r.iter for r in s) for s in series) or 1

    def xpos(it):
        return left + pw * it / max_iter

    def ypos(val):
        e = math.log10(val)
        return top + ph * (hi - e) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>',
    ]
    if title:
        out.append(f'<text x="{left + pw / 2:.2f}" y="18" text-anchor="middle">{_esc(title)}</text>')
    for e in ticks:
        y = top + ph * (hi - e) / (hi - lo)
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
    for k in range(6):
        it = round(max_iter * k / 5)
        out.append(f'<text x="{xpos(it):.2f}" y="{top + ph + 16}" text-anchor="middle">{it}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 10}" text-anchor="middle">iteration</text>')
    for idx, (s, label) in enumerate(zip(series, labels)):
        colour = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(f"{xpos(r.iter):.2f},{ypos(r.rel_error):.2f}" for r in s if r.rel_error > 0)
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 16 * idx
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 34}" y="{ly + 4}">{_esc(label)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def _esc(text):
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")

