"""Per-dialogue shared construction mining.

A construction is a contiguous token sequence (length >= 2) produced by both
speakers of a dialogue. Mining keeps every shared sequence, including
sub-sequences of longer ones; a maximality flag marks entries that have at
least one occurrence not strictly contained in a longer entry's occurrence.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .corpus import ContextSample, Dialogue

FILTERED_PUNCT = (".", ",", "?")


class Occurrence(NamedTuple):
    utterance_index: int
    token_offset: int
    speaker: str


@dataclass
class Construction:
    tokens: tuple[str, ...]
    occurrences: list[Occurrence]
    speakers_used: frozenset[str]
    is_maximal: bool = False


@dataclass
class ConstructionLexicon:
    dialogue_id: str
    entries: dict[tuple[str, ...], Construction]

    def occurrence_index(self) -> dict[int, set[tuple[str, ...]]]:
        """Map utterance_index -> set of entry keys occurring there."""
        index: dict[int, set[tuple[str, ...]]] = defaultdict(set)
        for key, entry in self.entries.items():
            for occ in entry.occurrences:
                index[occ.utterance_index].add(key)
        return dict(index)


@dataclass
class ConstructionStats:
    tokens: tuple[str, ...]
    length: int
    frequency: int
    rep_distance: float | None
    incidence: int | None
    pmi: float | None


@lru_cache(maxsize=65536)
def _is_alphanumeric(norm: str) -> bool:
    return any(ch.isalnum() for ch in norm)


def find_occurrences(seq: Sequence[str], norms: Sequence[str]) -> list[int]:
    """Offsets at which ``seq`` occurs as a contiguous slice of ``norms``."""
    n, m = len(norms), len(seq)
    first = seq[0]
    return [
        i for i in range(n - m + 1)
        if norms[i] == first and tuple(norms[i : i + m]) == tuple(seq)
    ]


def mine_shared_constructions(dialogue: Dialogue) -> ConstructionLexicon:
    """All contiguous token-norm sequences (length >= 2) used by both speakers,
    with every occurrence recorded. Grows candidates length by length: a
    shared (k+1)-gram's k-prefix is itself shared, so extending occurrences of
    shared k-grams enumerates every candidate exactly once."""
    utt_norms = [u.norms for u in dialogue.utterances]
    speakers = sorted({u.speaker for u in dialogue.utterances})
    speaker_bit = {s: 1 << i for i, s in enumerate(speakers)}
    utt_speaker = [u.speaker for u in dialogue.utterances]
    utt_index = [u.index for u in dialogue.utterances]
    both = 0b11 if len(speakers) == 2 else -1  # unreachable mask when not 2

    # occurrences held as (utterance_index, token_offset) tuples until an
    # entry is materialized; the per-sequence mask tracks which speakers used it
    seen: dict[tuple[str, str], list] = {}  # seq -> [speaker mask, occurrences]
    for ui, norms in enumerate(utt_norms):
        bit = speaker_bit[utt_speaker[ui]]
        for off, pair in enumerate(zip(norms, norms[1:])):
            cell = seen.get(pair)
            if cell is None:
                seen[pair] = [bit, [(ui, off)]]
            else:
                cell[0] |= bit
                cell[1].append((ui, off))

    entries: dict[tuple[str, ...], Construction] = {}
    current = {seq: cell[1] for seq, cell in seen.items() if cell[0] == both}
    while current:
        for seq in sorted(current):
            occs = sorted(current[seq])
            entries[seq] = Construction(
                tokens=seq,
                occurrences=[
                    Occurrence(utt_index[ui], off, utt_speaker[ui]) for ui, off in occs
                ],
                speakers_used=frozenset(utt_speaker[ui] for ui, off in occs),
            )
        longer: dict[tuple[str, ...], list[tuple[int, int]]] = defaultdict(list)
        longer_mask: dict[tuple[str, ...], int] = defaultdict(int)
        for seq, occs in current.items():
            k = len(seq)
            for ui, off in occs:
                norms = utt_norms[ui]
                end = off + k
                if end < len(norms):
                    ext = seq + (norms[end],)
                    longer[ext].append((ui, off))
                    longer_mask[ext] |= speaker_bit[utt_speaker[ui]]
        current = {seq: longer[seq] for seq in longer if longer_mask[seq] == both}

    lexicon = ConstructionLexicon(dialogue_id=dialogue.dialogue_id, entries=entries)
    _mark_maximality_closed(lexicon)
    return lexicon


def _mark_maximality_closed(lexicon: ConstructionLexicon) -> None:
    """Maximality over a subsequence-closed entry set (as mined, before any
    filtering): an occurrence is strictly contained in a longer entry's
    occurrence iff the one-token extension to its left or right is itself an
    entry occurrence."""
    spans: dict[int, set[tuple[int, int]]] = defaultdict(set)
    for entry in lexicon.entries.values():
        n = len(entry.tokens)
        for occ in entry.occurrences:
            spans[occ.utterance_index].add((occ.token_offset, occ.token_offset + n))
    for entry in lexicon.entries.values():
        n = len(entry.tokens)
        entry.is_maximal = any(
            (occ.token_offset - 1, occ.token_offset + n) not in spans[occ.utterance_index]
            and (occ.token_offset, occ.token_offset + n + 1) not in spans[occ.utterance_index]
            for occ in entry.occurrences
        )


def _recompute_maximality(lexicon: ConstructionLexicon) -> None:
    """An entry is maximal iff some occurrence is not strictly inside an
    occurrence of a longer retained entry. Works for arbitrary entry sets."""
    by_utterance: dict[int, list[tuple[int, int, int]]] = defaultdict(list)
    for entry in lexicon.entries.values():
        n = len(entry.tokens)
        for occ in entry.occurrences:
            by_utterance[occ.utterance_index].append((occ.token_offset, occ.token_offset + n, n))

    for entry in lexicon.entries.values():
        n = len(entry.tokens)
        maximal = False
        for occ in entry.occurrences:
            start, end = occ.token_offset, occ.token_offset + n
            contained = any(
                s <= start and end <= e and m > n
                for (s, e, m) in by_utterance[occ.utterance_index]
            )
            if not contained:
                maximal = True
                break
        entry.is_maximal = maximal


def construction_passes_filters(
    tokens: Sequence[str], filled_pause_list: frozenset[str]
) -> bool:
    """The three retention rules: at least two alphanumeric tokens, no
    sentence-boundary punctuation (periods, commas, question marks), and not
    more than half filled pauses."""
    if sum(1 for t in tokens if _is_alphanumeric(t)) < 2:
        return False
    if any(t in FILTERED_PUNCT for t in tokens):
        return False
    pauses = sum(1 for t in tokens if t in filled_pause_list)
    if pauses * 2 > len(tokens):
        return False
    return True


def filter_constructions(
    lexicon: ConstructionLexicon, filled_pause_list: frozenset[str] = frozenset()
) -> ConstructionLexicon:
    """Drop entries violating the retention rules and recompute maximality
    over the survivors. Pure (input lexicon untouched); idempotent."""
    kept = {
        seq: Construction(
            tokens=entry.tokens,
            occurrences=list(entry.occurrences),
            speakers_used=entry.speakers_used,
            is_maximal=entry.is_maximal,
        )
        for seq, entry in lexicon.entries.items()
        if construction_passes_filters(seq, filled_pause_list)
    }
    filtered = ConstructionLexicon(dialogue_id=lexicon.dialogue_id, entries=kept)
    if len(kept) != len(lexicon.entries):
        _recompute_maximality(filtered)
    return filtered


def construction_stats(
    lexicon: ConstructionLexicon,
    scope: ContextSample | Dialogue,
    corpus_counts: "CorpusCounts | None" = None,
) -> dict[tuple[str, ...], ConstructionStats]:
    """Per-entry statistics within ``scope``.

    frequency counts occurrences inside the scope; incidence is the per-sample
    occurrence count (equal to frequency for sample scopes, absent for
    dialogue scopes). rep_distance is the mean utterance-index gap between
    consecutive occurrences at distinct utterances, absent when the entry
    occurs at fewer than two distinct utterances. Entries absent from the
    scope get no row. PMI (specificity of the entry to the scope) is computed
    when ``corpus_counts`` is given.
    """
    from .metrics import pmi  # local import; metrics depends on miner types

    utterances = scope.utterances
    indices = {u.index for u in utterances}
    is_sample = isinstance(scope, ContextSample)

    stats: dict[tuple[str, ...], ConstructionStats] = {}
    for seq in sorted(lexicon.entries):
        entry = lexicon.entries[seq]
        in_scope = [o for o in entry.occurrences if o.utterance_index in indices]
        if not in_scope:
            continue
        freq = len(in_scope)
        distinct = sorted({o.utterance_index for o in in_scope})
        if len(distinct) >= 2:
            gaps = [b - a for a, b in zip(distinct, distinct[1:])]
            rep_distance = sum(gaps) / len(gaps)
        else:
            rep_distance = None
        pmi_value = None
        if corpus_counts is not None:
            pmi_value = pmi(seq, utterances, corpus_counts)
        stats[seq] = ConstructionStats(
            tokens=seq,
            length=len(seq),
            frequency=freq,
            rep_distance=rep_distance,
            incidence=freq if is_sample else None,
            pmi=pmi_value,
        )
    return stats


def write_lexicon_jsonl(lexica: Iterable[ConstructionLexicon], path: str | Path) -> None:
    """Export schema: one entry per line with dialogue_id, tokens, maximal
    flag and the occurrence list."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for lexicon in lexica:
            for seq in sorted(lexicon.entries):
                entry = lexicon.entries[seq]
                obj = {
                    "dialogue_id": lexicon.dialogue_id,
                    "tokens": list(seq),
                    "maximal": entry.is_maximal,
                    "occurrences": [
                        {"u": o.utterance_index, "o": o.token_offset, "speaker": o.speaker}
                        for o in entry.occurrences
                    ],
                }
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_lexicon_jsonl(path: str | Path) -> dict[str, ConstructionLexicon]:
    """Inverse of :func:`write_lexicon_jsonl`, keyed by dialogue_id."""
    lexica: dict[str, ConstructionLexicon] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            seq = tuple(obj["tokens"])
            occs = [
                Occurrence(o["u"], o["o"], o["speaker"]) for o in obj["occurrences"]
            ]
            lex = lexica.setdefault(
                obj["dialogue_id"],
                ConstructionLexicon(dialogue_id=obj["dialogue_id"], entries={}),
            )
            lex.entries[seq] = Construction(
                tokens=seq,
                occurrences=occs,
                speakers_used=frozenset(o.speaker for o in occs),
                is_maximal=bool(obj["maximal"]),
            )
    return lexica
