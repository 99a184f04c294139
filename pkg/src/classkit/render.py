"""Standalone SVG temporal heatmap of per-utterance marginal scores.

One colored rectangle per utterance along a 0-900s time axis, blue at the
lowest marginal score through orange at the highest, with the top-k and
bottom-k utterances called out above and below the strip.
"""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

from .corpus import Session
from .explain import MarginalScore

LOW_COLOR = "#2166ac"
HIGH_COLOR = "#e08214"


@dataclass
class HeatmapSpec:
    width_px: int = 1200
    height_px: int = 400
    time_max_s: float = 900.0
    low_color: str = LOW_COLOR
    high_color: str = HIGH_COLOR
    k_callouts: int = 4
    margin_px: int = 50
    strip_height_px: int = 70
    callout_chars: int = 60


def interpolation_param(delta: float, lo: float, hi: float) -> float:
    """Affine map of a marginal score onto [0, 1]; 0.5 when the range is degenerate."""
    if hi == lo:
        return 0.5
    return (delta - lo) / (hi - lo)


def _hex_to_rgb(color: str) -> tuple[int, int, int]:
    color = color.lstrip("#")
    return int(color[0:2], 16), int(color[2:4], 16), int(color[4:6], 16)


def blend_hex(t: float, low: str = LOW_COLOR, high: str = HIGH_COLOR) -> str:
    """Per-channel linear blend, rounded half-up; exact anchors at t=0 and t=1."""
    lo = _hex_to_rgb(low)
    hi = _hex_to_rgb(high)
    channels = [int(l + t * (h - l) + 0.5) for l, h in zip(lo, hi)]
    return "#" + "".join(f"{c:02x}" for c in channels)


def _ellipsize(text: str, limit: int) -> str:
    if len(text) <= limit:
        return text
    return text[: limit - 3] + "..."


def _pick_callouts(marginals: list[MarginalScore], k: int) -> tuple[list[MarginalScore], list[MarginalScore]]:
    desc = sorted(marginals, key=lambda s: (-s.delta_y, s.utterance_index))
    asc = sorted(marginals, key=lambda s: (s.delta_y, s.utterance_index))
    top = desc[:k]
    taken = {s.utterance_index for s in top}
    bottom = [s for s in asc[:k] if s.utterance_index not in taken]
    return top, bottom


def heatmap_svg(session: Session, marginals: list[MarginalScore], spec: HeatmapSpec | None = None) -> str:
    """Render one session as a self-contained SVG 1.1 document string."""
    spec = spec or HeatmapSpec()
    if not marginals:
        raise ValueError(f"session {session.session_id!r}: no marginal scores to render")
    if len(marginals) != len(session.utterances):
        raise ValueError(
            f"session {session.session_id!r}: {len(marginals)} marginal scores for "
            f"{len(session.utterances)} utterances"
        )
    deltas = [s.delta_y for s in marginals]
    lo, hi = min(deltas), max(deltas)
    degenerate = lo == hi

    w, h = spec.width_px, spec.height_px
    plot_x0 = spec.margin_px
    plot_w = w - 2 * spec.margin_px
    strip_y0 = h / 2 - spec.strip_height_px / 2
    strip_y1 = strip_y0 + spec.strip_height_px
    axis_y = strip_y1 + 30

    def x_of(t_seconds: float) -> float:
        return plot_x0 + (t_seconds / spec.time_max_s) * plot_w

    parts: list[str] = []
    parts.append('<?xml version="1.0" encoding="UTF-8"?>')
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">'
    )
    if degenerate:
        parts.append("<!-- note: all marginal scores equal; strip rendered in the midpoint color -->")
    parts.append(f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>')
    parts.append(
        f'<text x="{plot_x0}" y="24" font-family="sans-serif" font-size="16">'
        f"Session {escape(session.session_id)}: utterance-level score contributions</text>"
    )

    for score in marginals:
        utt = session.utterances[score.utterance_index]
        t = interpolation_param(score.delta_y, lo, hi)
        rx = x_of(max(0.0, min(utt.start_s, spec.time_max_s)))
        rw = max(0.1, x_of(max(0.0, min(utt.end_s, spec.time_max_s))) - rx)
        parts.append(
            f'<rect class="utt" x="{rx:.2f}" y="{strip_y0:.2f}" width="{rw:.2f}" '
            f'height="{spec.strip_height_px:.2f}" fill="{blend_hex(t, spec.low_color, spec.high_color)}">'
            f"<title>u{score.utterance_index}: {escape(utt.text)} ({score.delta_y:+.4f})</title></rect>"
        )

    parts.append(
        f'<line x1="{plot_x0:.2f}" y1="{axis_y:.2f}" x2="{plot_x0 + plot_w:.2f}" y2="{axis_y:.2f}" '
        'stroke="#333333" stroke-width="1"/>'
    )
    n_ticks = 6
    for i in range(n_ticks + 1):
        t_seconds = spec.time_max_s * i / n_ticks
        tx = x_of(t_seconds)
        parts.append(
            f'<line x1="{tx:.2f}" y1="{axis_y:.2f}" x2="{tx:.2f}" y2="{axis_y + 6:.2f}" '
            'stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{tx:.2f}" y="{axis_y + 20:.2f}" font-family="sans-serif" font-size="11" '
            f'text-anchor="middle">{t_seconds:.0f}s</text>'
        )

    top, bottom = _pick_callouts(marginals, spec.k_callouts)
    if len(top) + len(bottom) < 2 * spec.k_callouts:
        parts.append(
            f"<!-- note: only {len(top) + len(bottom)} callouts; session has "
            f"{len(marginals)} utterances -->"
        )
    for rank, score in enumerate(top):
        utt = session.utterances[score.utterance_index]
        cx = x_of(max(0.0, min((utt.start_s + utt.end_s) / 2, spec.time_max_s)))
        label_y = 46 + rank * 18
        parts.append(
            f'<line x1="{cx:.2f}" y1="{label_y + 4:.2f}" x2="{cx:.2f}" y2="{strip_y0:.2f}" '
            f'stroke="{spec.high_color}" stroke-width="1"/>'
        )
        parts.append(
            f'<path d="M {cx - 3:.2f} {strip_y0 - 6:.2f} L {cx + 3:.2f} {strip_y0 - 6:.2f} '
            f'L {cx:.2f} {strip_y0:.2f} Z" fill="{spec.high_color}"/>'
        )
        parts.append(
            f'<text class="callout-top" x="{cx:.2f}" y="{label_y:.2f}" font-family="sans-serif" '
            f'font-size="11" text-anchor="middle" fill="{spec.high_color}">'
            f"{escape(_ellipsize(utt.text, spec.callout_chars))} ({score.delta_y:+.3f})</text>"
        )
    for rank, score in enumerate(bottom):
        utt = session.utterances[score.utterance_index]
        cx = x_of(max(0.0, min((utt.start_s + utt.end_s) / 2, spec.time_max_s)))
        label_y = axis_y + 44 + rank * 18
        parts.append(
            f'<line x1="{cx:.2f}" y1="{label_y - 10:.2f}" x2="{cx:.2f}" y2="{strip_y1:.2f}" '
            f'stroke="{spec.low_color}" stroke-width="1"/>'
        )
        parts.append(
            f'<path d="M {cx - 3:.2f} {strip_y1 + 6:.2f} L {cx + 3:.2f} {strip_y1 + 6:.2f} '
            f'L {cx:.2f} {strip_y1:.2f} Z" fill="{spec.low_color}"/>'
        )
        parts.append(
            f'<text class="callout-bottom" x="{cx:.2f}" y="{label_y:.2f}" font-family="sans-serif" '
            f'font-size="11" text-anchor="middle" fill="{spec.low_color}">'
            f"{escape(_ellipsize(utt.text, spec.callout_chars))} ({score.delta_y:+.3f})</text>"
        )

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
