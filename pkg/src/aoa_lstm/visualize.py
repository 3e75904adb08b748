"""Attention heatmaps: tokens shaded by their final sentence-attention weight.

Shading is linear in ``gamma_i / max(gamma)``: the most attended token gets
full opacity, a zero weight gets none.
"""

from __future__ import annotations

import html
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .classifier import LABELS
from .data import Sample
from .trainer import ModelParams, forward

LABEL_SIGN = {"positive": "+1", "neutral": "0", "negative": "-1"}


@dataclass
class HeatmapDoc:
    tokens: list[str]
    gamma: np.ndarray
    gold: str | None
    pred: str
    aspect_span: tuple[int, int]

    def __post_init__(self):
        if len(self.tokens) != len(self.gamma):
            raise ValueError("one attention weight per token is required")

    @property
    def intensity(self) -> np.ndarray:
        top = float(np.max(self.gamma))
        return np.asarray(self.gamma) / top if top > 0 else np.zeros(len(self.gamma))


def heatmap_docs(model: ModelParams, samples: Iterable[Sample]) -> list[HeatmapDoc]:
    docs = []
    for s in samples:
        probs, trace, _ = forward(model, s)
        docs.append(HeatmapDoc(list(s.sentence_tokens), trace.gamma, s.polarity, LABELS[int(np.argmax(probs))], s.aspect_span))
    return docs


_CSS = """
body { font-family: sans-serif; margin: 2em; }
table.heatmap { border-collapse: collapse; }
table.heatmap td, table.heatmap th { border: 1px solid #999; padding: 4px 8px; vertical-align: middle; }
span.tok { padding: 1px 2px; margin: 0 1px; border-radius: 2px; }
span.aspect { text-decoration: underline; font-weight: bold; }
"""


def render_html(docs: Sequence[HeatmapDoc], title: str = "Final sentence attention") -> str:
    rows = []
    for d in docs:
        i, j = d.aspect_span
        spans = []
        for k, (tok, w, a) in enumerate(zip(d.tokens, d.gamma, d.intensity)):
            cls = "tok aspect" if i <= k < j else "tok"
            spans.append(
                f'<span class="{cls}" data-gamma="{float(w):.17g}" '
                f'style="background-color: rgba(220, 20, 20, {a:.4f})">{html.escape(tok)}</span>'
            )
        aspect = html.escape(" ".join(d.tokens[i:j]))
        gold = LABEL_SIGN[d.gold] if d.gold else "?"
        rows.append(
            f'<tr class="sample"><td class="aspect">{aspect}</td>'
            f'<td class="sentence">{" ".join(spans)}</td>'
            f'<td class="labels">{gold}/{LABEL_SIGN[d.pred]}</td></tr>'
        )
    body = "\n".join(rows)
    return (
        "<!DOCTYPE html>\n"
        '<html lang="en">\n<head>\n<meta charset="utf-8">\n'
        f"<title>{html.escape(title)}</title>\n<style>{_CSS}</style>\n</head>\n<body>\n"
        f"<h1>{html.escape(title)}</h1>\n"
        '<table class="heatmap">\n<thead><tr><th>Aspect</th><th>Sentence</th><th>Ans./Pred.</th></tr></thead>\n'
        f"<tbody>\n{body}\n</tbody>\n</table>\n</body>\n</html>\n"
    )


def render_ansi(docs: Sequence[HeatmapDoc]) -> str:
    """256-colour terminal rendering: grey ramp background, darker = heavier."""
    lines = []
    for d in docs:
        i, j = d.aspect_span
        parts = []
        for k, (tok, a) in enumerate(zip(d.tokens, d.intensity)):
            bg = 255 - int(round(float(a) * 23))
            fg = 255 if bg < 244 else 232
            ul = "\x1b[4m" if i <= k < j else ""
            parts.append(f"\x1b[48;5;{bg}m\x1b[38;5;{fg}m{ul}{tok}\x1b[0m")
        gold = LABEL_SIGN[d.gold] if d.gold else "?"
        lines.append(f"{' '.join(parts)}  [{gold}/{LABEL_SIGN[d.pred]}]")
    return "\n".join(lines) + "\n"
