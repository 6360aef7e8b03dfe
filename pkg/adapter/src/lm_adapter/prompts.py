"""Prompt rendering with a token-level span map.

Dialogue samples are rendered as newline-separated utterances, each preceded
by its speaker label ("A:" / "B:"), with a trailing label for the upcoming
target speaker. The span map assigns every rendered token to exactly one
element: context speaker labels (separator newlines included), context
utterance text, the trailing target label, and the target text itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence


class Tokenizer(Protocol):
    def encode_piece(self, piece: str) -> list[int]: ...
    def decode(self, ids: Sequence[int]) -> str: ...
    @property
    def newline_id(self) -> int: ...


@dataclass(frozen=True)
class Span:
    kind: str  # speaker_label | utterance | target_label | target
    utterance_index: int | None
    start: int
    end: int


@dataclass
class PromptLayout:
    ids: list[int]
    spans: list[Span]
    target_start: int | None  # first token of the target span, when present

    def as_exchange_elements(self) -> list[dict]:
        return [
            {"kind": s.kind, "u": s.utterance_index, "start": s.start, "end": s.end}
            for s in self.spans
        ]


def speaker_labels(utterances: Sequence[tuple[str, str]], target_speaker: str) -> dict[str, str]:
    """Stable speaker -> 'A:'/'B:' assignment (first speaker seen is A)."""
    order: list[str] = []
    for speaker, _ in utterances:
        if speaker not in order:
            order.append(speaker)
    if target_speaker not in order:
        order.append(target_speaker)
    if len(order) > 2:
        raise ValueError(f"more than two speakers: {order}")
    labels = {order[0]: "A:"}
    if len(order) == 2:
        labels[order[1]] = "B:"
    return labels


def render_prompt(
    tokenizer: Tokenizer,
    context: Sequence[tuple[str, str]],
    target_speaker: str,
    target_text: str | None = None,
) -> PromptLayout:
    """Tokenize the sample into ids plus a covering span map.

    The newline terminating an utterance is grouped with the NEXT label span
    (labels are the structural separator tokens). With ``target_text`` the
    layout ends in a target span; without it the prompt ends at the trailing
    target label, ready for generation.
    """
    labels = speaker_labels(context, target_speaker)
    ids: list[int] = []
    spans: list[Span] = []

    def emit(kind: str, u: int | None, pieces: list[str]) -> None:
        start = len(ids)
        for piece in pieces:
            ids.extend(tokenizer.encode_piece(piece))
        if len(ids) > start:
            spans.append(Span(kind, u, start, len(ids)))

    for pos, (speaker, text) in enumerate(context, start=1):
        label_pieces = [labels[speaker]] if pos == 1 else ["\n", labels[speaker]]
        emit("speaker_label", pos, label_pieces)
        emit("utterance", pos, text.split())
    target_label_pieces = ["\n", labels[target_speaker]] if context else [labels[target_speaker]]
    emit("target_label", None, target_label_pieces)
    target_start = None
    if target_text is not None:
        target_start = len(ids)
        emit("target", None, target_text.split())
        if target_start == len(ids):
            raise ValueError("target text tokenized to nothing")
    return PromptLayout(ids=ids, spans=spans, target_start=target_start)


def utterance_spans_text(tokenizer: Tokenizer, layout: PromptLayout) -> dict[int, str]:
    """Detokenized text of each context utterance span (for alignment checks)."""
    out = {}
    for span in layout.spans:
        if span.kind == "utterance":
            out[span.utterance_index] = tokenizer.decode(layout.ids[span.start : span.end])
    return out
