"""Turns attention distributions into explanations: sentence-weighted word
scores, thresholded highlight selection, and structured/visual exports.

The structured file is newline-delimited records; word records carry both
the selection score and the raw word attention weight. The visual file is
a single self-contained HTML page with no external references.
"""

from __future__ import annotations

import html
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import EncodedDocument
from .model import AttentionRecord

MU_DEFAULT = 5.0
SENTENCE_THRESHOLD = 0.1
WORD_THRESHOLD = 0.01
COMPACT_TOKENS = 11

STRUCTURED_FIELDS = ("doc", "label", "kind", "sentence", "token", "score", "weight", "text")


class ExplainError(ValueError):
    """Invalid explanation parameters or malformed export files."""


def sentence_weighted_scores(record: AttentionRecord, mu: float = MU_DEFAULT) -> np.ndarray:
    """Word scores rescaled by their sentence's attention, clipped to 1.

    Returns [L, n, n_t] where L is the wider of the two label axes. Masked
    positions and fully masked sentences come out exactly 0 because their
    attention weights are 0.
    """
    if mu <= 0:
        raise ExplainError(f"mu must be positive, got {mu}")
    scaled = mu * record.alpha_s[:, :, None] * record.alpha_w
    return np.minimum(1.0, scaled)


@dataclass
class Highlight:
    """Selected evidence for one label of one document.

    sentences: (sentence index, sentence attention, sentence text)
    words: (sentence index, token index, weighted score, token text)
    """

    label: str
    sentences: list = field(default_factory=list)
    words: list = field(default_factory=list)


def _sentence_text(doc: EncodedDocument, i: int) -> str:
    if i < len(doc.sentences):
        return " ".join(doc.sentences[i])
    return ""


def select_highlights(
    record: AttentionRecord,
    doc: EncodedDocument,
    labels: list,
    predicted: list,
    mu: float = MU_DEFAULT,
    sent_threshold: float = SENTENCE_THRESHOLD,
    word_threshold: float = WORD_THRESHOLD,
) -> list:
    """One Highlight per predicted label index, in the given order.

    Sentences pass on raw sentence attention, words on the clipped
    sentence-weighted score; both cuts are strict. Shared attention axes
    (the flatter variants) replicate the same evidence for every label.
    """
    for name, th in (("sent_threshold", sent_threshold), ("word_threshold", word_threshold)):
        if not 0.0 < th < 1.0:
            raise ExplainError(f"{name} must be in (0,1), got {th}")
    weighted = sentence_weighted_scores(record, mu)
    l_all = weighted.shape[0]
    l_s = record.alpha_s.shape[0]
    highlights = []
    for l in predicted:
        if not 0 <= l < len(labels):
            raise ExplainError(f"label index {l} outside universe of {len(labels)}")
        w_row = weighted[min(l, l_all - 1)]
        s_row = record.alpha_s[min(l, l_s - 1)]
        sentences = [
            (int(i), float(s_row[i]), _sentence_text(doc, int(i)))
            for i in np.flatnonzero(record.sentence_mask)
            if s_row[i] > sent_threshold
        ]
        words = [
            (int(i), int(j), float(w_row[i, j]), doc.token_at(int(i), int(j)) or "")
            for i, j in zip(*np.nonzero(record.token_mask))
            if w_row[i, j] > word_threshold
        ]
        highlights.append(Highlight(label=labels[l], sentences=sentences, words=words))
    return highlights


def _raw_word_weight(record: AttentionRecord, labels: list, label: str, i: int, j: int) -> float:
    idx = labels.index(label)
    row = min(idx, record.alpha_w.shape[0] - 1)
    return float(record.alpha_w[row, i, j])


def write_structured(
    path,
    doc: EncodedDocument,
    highlights: list,
    record: AttentionRecord,
    labels: list,
    append: bool = False,
) -> None:
    """Newline-delimited export of the given highlights.

    Sentence records: doc, label, kind="sentence", sentence, score, text.
    Word records add token and weight (the raw word attention before
    sentence weighting). Appending lets one file cover many documents.
    """
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        for h in highlights:
            for i, score, text in h.sentences:
                fh.write(json.dumps({
                    "doc": doc.id, "label": h.label, "kind": "sentence",
                    "sentence": i, "score": score, "text": text,
                }) + "\n")
            for i, j, score, token in h.words:
                fh.write(json.dumps({
                    "doc": doc.id, "label": h.label, "kind": "word",
                    "sentence": i, "token": j, "score": score,
                    "weight": _raw_word_weight(record, labels, h.label, i, j),
                    "text": token,
                }) + "\n")


def parse_structured(path) -> dict:
    """Read a structured export back into doc -> label -> Highlight."""
    table: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("kind") not in ("sentence", "word"):
                raise ExplainError(f"unknown record kind {rec.get('kind')!r}")
            per_doc = table.setdefault(rec["doc"], {})
            h = per_doc.setdefault(rec["label"], Highlight(label=rec["label"]))
            if rec["kind"] == "sentence":
                h.sentences.append((rec["sentence"], rec["score"], rec["text"]))
            else:
                h.words.append((rec["sentence"], rec["token"], rec["score"], rec["text"]))
    return table


def _shade(score: float) -> str:
    # linear ramp: 0 is no fill, 1 is fully saturated
    return f"background:rgba(191,54,12,{score:.4f})"


def _token_style(score: float) -> str:
    style = _shade(score)
    if score > 0.55:
        style += ";color:#ffffff"
    return style


def export_visual(
    path,
    doc: EncodedDocument,
    highlights: list,
    compact: bool = False,
) -> None:
    """Self-contained HTML page coloring each label's evidence.

    One text column per highlighted label, tokens tinted by their clipped
    sentence-weighted score, plus that label's sentence-score column.
    Compact mode truncates the display (never the scores) to the first
    11 tokens of each sentence.
    """
    word_maps = []
    sent_maps = []
    for h in highlights:
        word_maps.append({(i, j): s for i, j, s, _ in h.words})
        sent_maps.append({i: s for i, s, _ in h.sentences})

    def render_sentence(i: int, scores) -> str:
        tokens = doc.sentences[i] if i < len(doc.sentences) else []
        shown = tokens[:COMPACT_TOKENS] if compact else tokens
        parts = []
        for j, tok in enumerate(shown):
            s = scores.get((i, j), 0.0) if scores is not None else 0.0
            esc = html.escape(tok)
            if s > 0.0:
                parts.append(f'<span style="{_token_style(s)}" title="{s:.4f}">{esc}</span>')
            else:
                parts.append(esc)
        if compact and len(tokens) > COMPACT_TOKENS:
            parts.append("&#8230;")
        return " ".join(parts)

    head = ["<th>#</th><th>text</th>"]
    for h in highlights:
        head.append(f"<th>{html.escape(h.label)}</th><th>{html.escape(h.label)} s-score</th>")
    rows = []
    for i in np.flatnonzero(doc.sentence_mask):
        cells = [f"<td>{int(i)}</td>", f"<td>{render_sentence(int(i), None)}</td>"]
        for words, sents in zip(word_maps, sent_maps):
            cells.append(f"<td>{render_sentence(int(i), words)}</td>")
            s = sents.get(int(i))
            if s is None:
                cells.append("<td></td>")
            else:
                cells.append(f'<td style="{_shade(s)}">{s:.4f}</td>')
        rows.append("<tr>" + "".join(cells) + "</tr>")

    title = html.escape(doc.id)
    page = (
        "<!doctype html>\n<html><head><meta charset=\"utf-8\">"
        f"<title>{title}</title>"
        "<style>body{font-family:sans-serif;margin:1.5em}"
        "table{border-collapse:collapse}"
        "td,th{border:1px solid #999;padding:4px 8px;vertical-align:top}"
        "span{border-radius:2px;padding:0 1px}</style></head><body>"
        f"<h1>{title}</h1>"
        "<table><tr>" + "".join(head) + "</tr>" + "".join(rows) + "</table>"
        "</body></html>\n"
    )
    Path(path).write_text(page, encoding="utf-8")
