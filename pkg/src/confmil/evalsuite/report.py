"""Attention CSV round-trip, per-bag SVG plots and the summary table."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

from ..errors import FormatError

ATTENTION_COLUMNS = ("bag_id", "conformer_id", "dihedral_deg", "energy_kcal", "alpha",
                     "instance_label", "bag_label", "predicted_prob")
SUMMARY_COLUMNS = ("bag_id", "bag_label", "predicted_prob", "n_conformers", "argmax_conformer",
                   "argmax_dihedral_deg", "argmax_alpha", "argmax_is_key")


@dataclass
class AttentionRow:
    bag_id: str
    conformer_id: int
    dihedral_deg: float
    energy_kcal: float
    alpha: float
    instance_label: int
    bag_label: int
    predicted_prob: float


def format_attention(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ATTENTION_COLUMNS)
    for r in rows:
        w.writerow([r.bag_id, r.conformer_id, f"{r.dihedral_deg:.6f}", f"{r.energy_kcal:.6f}",
                    f"{r.alpha:.15g}", r.instance_label, r.bag_label, f"{r.predicted_prob:.15g}"])
    return buf.getvalue()


def parse_attention(text: str) -> list:
    """Rows of an attention CSV; '#' lines are header comments."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        return []
    reader = csv.reader(lines)
    head = next(reader)
    if tuple(head) != ATTENTION_COLUMNS:
        raise FormatError(f"unexpected attention columns {head}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(ATTENTION_COLUMNS):
            raise FormatError(f"attention row {lineno} has {len(rec)} fields")
        try:
            row = AttentionRow(rec[0], int(rec[1]), float(rec[2]), float(rec[3]), float(rec[4]),
                               int(rec[5]), int(rec[6]), float(rec[7]))
        except ValueError as exc:
            raise FormatError(f"attention row {lineno}: {exc}") from exc
        if not all(math.isfinite(v) for v in (row.dihedral_deg, row.alpha, row.predicted_prob)):
            raise FormatError(f"attention row {lineno} has non-finite values")
        rows.append(row)
    return rows


def group_by_bag(rows) -> dict:
    bags = {}
    for r in rows:
        bags.setdefault(r.bag_id, []).append(r)
    return bags


def argmax_row(rows):
    # highest alpha, lowest conformer id on ties
    return min(rows, key=lambda r: (-r.alpha, r.conformer_id))


W, H = 480, 320
LEFT, RIGHT, TOP, BOTTOM = 56, 16, 28, 44


def _x(phi):
    return LEFT + (phi + 180.0) / 360.0 * (W - LEFT - RIGHT)


def _y(alpha, top):
    return H - BOTTOM - alpha / top * (H - TOP - BOTTOM)


def render_svg(bag_id: str, rows) -> str:
    """Attention against motif dihedral for one bag.

    Key instances get a red ring; the argmax conformer a black triangle.
    """
    top = max(max(r.alpha for r in rows), 1e-12) * 1.1
    best = argmax_row(rows)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="16" text-anchor="middle">{escape(bag_id)} '
           f'(label {rows[0].bag_label}, p={rows[0].predicted_prob:.3f})</text>']
    x0, x1 = _x(-180), _x(180)
    y0, y1 = _y(0, top), _y(top, top)
    out.append(f'<path d="M{x0:.1f},{y1:.1f}V{y0:.1f}H{x1:.1f}" fill="none" stroke="black"/>')
    for phi in range(-180, 181, 90):
        x = _x(phi)
        out.append(f'<line x1="{x:.1f}" y1="{y0:.1f}" x2="{x:.1f}" y2="{y0 + 4:.1f}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{y0 + 16:.1f}" text-anchor="middle">{phi}</text>')
    for frac in (0.0, 0.5, 1.0):
        a = frac * top / 1.1
        y = _y(a, top)
        out.append(f'<text x="{x0 - 6:.1f}" y="{y + 4:.1f}" text-anchor="end">{a:.3f}</text>')
    out.append(f'<text x="{W / 2:.1f}" y="{H - 8}" text-anchor="middle">dihedral (deg)</text>')
    out.append(f'<text x="14" y="{H / 2:.1f}" transform="rotate(-90 14 {H / 2:.1f})" '
               f'text-anchor="middle">attention</text>')
    for r in rows:
        cx, cy = _x(r.dihedral_deg), _y(r.alpha, top)
        out.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="3" fill="steelblue"/>')
        if r.instance_label:
            out.append(f'<circle class="key" cx="{cx:.1f}" cy="{cy:.1f}" r="7" fill="none" '
                       f'stroke="red" stroke-width="1.5"/>')
    cx, cy = _x(best.dihedral_deg), _y(best.alpha, top)
    out.append(f'<path class="argmax" d="M{cx:.1f},{cy - 14:.1f}l-5,-8h10z" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def summary_rows(rows) -> list:
    table = []
    for bag_id, group in group_by_bag(rows).items():
        best = argmax_row(group)
        table.append((bag_id, group[0].bag_label, f"{group[0].predicted_prob:.6f}", len(group),
                      best.conformer_id, f"{best.dihedral_deg:.3f}", f"{best.alpha:.6f}",
                      best.instance_label))
    return table


def _safe_name(bag_id: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in bag_id) or "bag"


def write_report(rows, out_dir, header_lines=()) -> int:
    """Writes one SVG per bag plus summary.csv; returns the number of bags."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = group_by_bag(rows)
    for bag_id, group in groups.items():
        (out_dir / f"{_safe_name(bag_id)}.svg").write_text(render_svg(bag_id, group), encoding="utf-8")
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    w.writerows(summary_rows(rows))
    (out_dir / "summary.csv").write_text(buf.getvalue(), encoding="utf-8")
    return len(groups)
