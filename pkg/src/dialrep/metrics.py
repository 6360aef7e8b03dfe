"""Turn-pair repetition measures: vocabulary overlap, construction overlap,
construction specificity (PMI), speaker relation and locality distance.

All overlap measures are computed on lowercased token norms. Vocabulary
overlap excludes punctuation tokens; construction overlap counts shared
lexicon entries between the two turns, normalized by the current turn's word
count.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import ContextSample, Corpus, Utterance
from .miner import ConstructionLexicon, find_occurrences

RECORD_CSV_COLUMNS = (
    "sample_id", "prev_index", "cur_index", "distance", "speaker_relation",
    "vo", "co", "pmi_avg", "producer", "model_type",
)


@dataclass
class RepetitionRecord:
    sample_id: str
    prev_index: int
    cur_index: int
    distance: int
    speaker_relation: str  # "between" | "within"
    vo: float
    co: float
    shared_constructions: list[str]
    pmi_avg: float | None
    producer: str = "human"
    model_type: str = "n/a"


class CorpusCounts:
    """Length-stratified occurrence and slot counts for a fixed set of
    sequences.

    Slots at length n are the number of n-gram positions over all utterance
    token sequences (sum of max(0, len - n + 1)); probabilities built from
    these are proper relative frequencies per length.
    """

    def __init__(self, seq_counts: dict[tuple[str, ...], int], length_hist: Counter):
        self._seq_counts = seq_counts
        self._length_hist = length_hist  # utterance token-length histogram
        self._slot_cache: dict[int, int] = {}

    @classmethod
    def build(cls, corpus: Corpus, sequences: Iterable[tuple[str, ...]]) -> "CorpusCounts":
        wanted = set(sequences)
        lengths = sorted({len(s) for s in wanted})
        # cheap first-token prefilter before building candidate tuples
        starts: dict[int, set[str]] = {
            n: {s[0] for s in wanted if len(s) == n} for n in lengths
        }
        seq_counts: dict[tuple[str, ...], int] = {s: 0 for s in wanted}
        length_hist: Counter = Counter()
        for dialogue in corpus.dialogues:
            for utt in dialogue.utterances:
                norms = utt.norms
                length_hist[len(norms)] += 1
                for n in lengths:
                    first = starts[n]
                    for off in range(len(norms) - n + 1):
                        if norms[off] not in first:
                            continue
                        seq = tuple(norms[off : off + n])
                        if seq in seq_counts:
                            seq_counts[seq] += 1
        return cls(seq_counts, length_hist)

    def count(self, seq: tuple[str, ...]) -> int:
        try:
            return self._seq_counts[seq]
        except KeyError:
            raise KeyError(f"sequence {seq!r} was not in the counted set") from None

    def slots(self, length: int) -> int:
        if length not in self._slot_cache:
            self._slot_cache[length] = sum(
                max(0, l - length + 1) * k for l, k in self._length_hist.items()
            )
        return self._slot_cache[length]


def scope_slots(utterances: Sequence[Utterance], length: int) -> int:
    return sum(max(0, len(u.tokens) - length + 1) for u in utterances)


def scope_count(utterances: Sequence[Utterance], seq: tuple[str, ...]) -> int:
    return sum(len(find_occurrences(seq, u.norms)) for u in utterances)


def vocabulary_overlap(t_c: Utterance, t_p: Utterance) -> float:
    """Fraction of the current turn's words that also occur in the previous
    turn (multiset over t_c, set membership in t_p; punctuation excluded).
    Always in [0, 1]; 0 for a wordless current turn."""
    prev_vocab = {t.norm for t in t_p.tokens if not t.is_punct}
    cur_words = [t.norm for t in t_c.tokens if not t.is_punct]
    if not cur_words:
        return 0.0
    hits = sum(1 for w in cur_words if w in prev_vocab)
    return hits / len(cur_words)


def construction_overlap(
    t_c: Utterance,
    t_p: Utterance,
    lexicon: ConstructionLexicon,
    mode: str = "types",
) -> tuple[float, list[tuple[str, ...]]]:
    """Shared-construction overlap between two turns.

    The numerator counts lexicon entries occurring in both turns: one per
    entry type by default, or per occurrence in the current turn with
    mode="tokens". Returns the ratio and the shared entry keys.
    """
    if mode not in ("types", "tokens"):
        raise ValueError(f"mode must be 'types' or 'tokens', got {mode!r}")
    cur_norms = t_c.norms
    prev_norms = t_p.norms
    shared: list[tuple[str, ...]] = []
    numerator = 0
    for seq in sorted(lexicon.entries):
        cur_occ = find_occurrences(seq, cur_norms)
        if not cur_occ:
            continue
        if not find_occurrences(seq, prev_norms):
            continue
        shared.append(seq)
        numerator += len(cur_occ) if mode == "tokens" else 1
    words = t_c.word_count
    if words == 0:
        return 0.0, shared
    return numerator / words, shared


def pmi(
    entry: tuple[str, ...],
    sample: ContextSample | Sequence[Utterance],
    counts: CorpusCounts,
) -> float:
    """log2 of the entry's in-sample relative frequency over its corpus-wide
    relative frequency (both per n-gram slot at the entry's length)."""
    utterances = sample.utterances if isinstance(sample, ContextSample) else list(sample)
    n = len(entry)
    in_sample = scope_count(utterances, entry)
    if in_sample == 0:
        raise ValueError(f"entry {entry!r} does not occur in the sample")
    sample_slots = scope_slots(utterances, n)
    corpus_count = counts.count(entry)
    corpus_slots = counts.slots(n)
    p_sample = in_sample / sample_slots
    p_corpus = corpus_count / corpus_slots
    return math.log2(p_sample / p_corpus)


def entry_occurrence_counts(
    utterance: Utterance,
    keys: set[tuple[str, ...]],
    lengths: Sequence[int],
    starts: dict[int, set[str]] | None = None,
) -> Counter:
    """Occurrence counts of lexicon entries inside one utterance, found by
    enumerating the utterance's n-grams at the lexicon's entry lengths
    (linear in utterance length, independent of lexicon size)."""
    norms = utterance.norms
    found: Counter = Counter()
    for n in lengths:
        first = starts.get(n) if starts is not None else None
        for off in range(len(norms) - n + 1):
            if first is not None and norms[off] not in first:
                continue
            seq = tuple(norms[off : off + n])
            if seq in keys:
                found[seq] += 1
    return found


def pair_records(
    sample: ContextSample,
    lexicon: ConstructionLexicon,
    counts: CorpusCounts | None = None,
    producer: str = "human",
    model_type: str = "n/a",
    pairs: str = "target",
    co_mode: str = "types",
    occ_cache: dict[int, Counter] | None = None,
) -> list[RepetitionRecord]:
    """One record per (previous turn, current turn) pair in the sample.

    pairs="target" fixes the current turn at the window's last position and
    pairs it with every context utterance (distances 1..window-1);
    pairs="all" emits every ordered pair. Records are ordered by
    (cur_index, prev_index), deterministically.

    occ_cache memoizes per-utterance entry occurrences across the overlapping
    windows of one dialogue, keyed by id(utterance); pass a fresh dict per
    (dialogue, lexicon) pair.
    """
    if pairs not in ("target", "all"):
        raise ValueError(f"pairs must be 'target' or 'all', got {pairs!r}")
    if co_mode not in ("types", "tokens"):
        raise ValueError(f"co_mode must be 'types' or 'tokens', got {co_mode!r}")
    n = len(sample.utterances)
    if pairs == "target":
        index_pairs = [(p, n) for p in range(1, n)]
    else:
        index_pairs = [(p, c) for c in range(2, n + 1) for p in range(1, c)]

    keys = set(lexicon.entries)
    lengths = sorted({len(k) for k in keys})
    starts = {n: {s[0] for s in keys if len(s) == n} for n in lengths}
    occ_at = []
    for u in sample.utterances:
        if occ_cache is None:
            occ_at.append(entry_occurrence_counts(u, keys, lengths, starts))
            continue
        cached = occ_cache.get(id(u))
        if cached is None:
            cached = entry_occurrence_counts(u, keys, lengths, starts)
            occ_cache[id(u)] = cached
        occ_at.append(cached)
    sample_count: Counter = Counter()
    for c in occ_at:
        sample_count.update(c)
    slots_by_length = {n: scope_slots(sample.utterances, n) for n in lengths}

    def sample_pmi(seq: tuple[str, ...]) -> float:
        p_sample = sample_count[seq] / slots_by_length[len(seq)]
        p_corpus = counts.count(seq) / counts.slots(len(seq))
        return math.log2(p_sample / p_corpus)

    pmi_cache: dict[tuple[str, ...], float] = {}
    records = []
    for prev_pos, cur_pos in index_pairs:
        t_p = sample.at_position(prev_pos)
        t_c = sample.at_position(cur_pos)
        vo = vocabulary_overlap(t_c, t_p)
        cur_occ = occ_at[cur_pos - 1]
        prev_occ = occ_at[prev_pos - 1]
        shared = sorted(seq for seq in cur_occ if seq in prev_occ)
        if co_mode == "tokens":
            numerator = sum(cur_occ[seq] for seq in shared)
        else:
            numerator = len(shared)
        words = t_c.word_count
        co = numerator / words if words else 0.0
        pmi_avg = None
        if counts is not None and shared:
            values = []
            for seq in shared:
                if seq not in pmi_cache:
                    pmi_cache[seq] = sample_pmi(seq)
                values.append(pmi_cache[seq])
            pmi_avg = sum(values) / len(values)
        records.append(
            RepetitionRecord(
                sample_id=sample.sample_id,
                prev_index=prev_pos,
                cur_index=cur_pos,
                distance=cur_pos - prev_pos,
                speaker_relation="within" if t_p.speaker == t_c.speaker else "between",
                vo=vo,
                co=co,
                shared_constructions=[" ".join(s) for s in shared],
                pmi_avg=pmi_avg,
                producer=producer,
                model_type=model_type,
            )
        )
    records.sort(key=lambda r: (r.sample_id, r.cur_index, r.prev_index))
    return records


def write_records_csv(records: Iterable[RepetitionRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_CSV_COLUMNS)
        for r in records:
            writer.writerow([
                r.sample_id, r.prev_index, r.cur_index, r.distance,
                r.speaker_relation, repr(r.vo), repr(r.co),
                "" if r.pmi_avg is None else repr(r.pmi_avg),
                r.producer, r.model_type,
            ])


def read_records_csv(path: str | Path) -> list[RepetitionRecord]:
    records = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            records.append(
                RepetitionRecord(
                    sample_id=row["sample_id"],
                    prev_index=int(row["prev_index"]),
                    cur_index=int(row["cur_index"]),
                    distance=int(row["distance"]),
                    speaker_relation=row["speaker_relation"],
                    vo=float(row["vo"]),
                    co=float(row["co"]),
                    shared_constructions=[],
                    pmi_avg=float(row["pmi_avg"]) if row["pmi_avg"] else None,
                    producer=row["producer"],
                    model_type=row["model_type"],
                )
            )
    return records


def write_records_jsonl(records: Iterable[RepetitionRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            obj = {
                "sample_id": r.sample_id,
                "prev_index": r.prev_index,
                "cur_index": r.cur_index,
                "distance": r.distance,
                "speaker_relation": r.speaker_relation,
                "vo": r.vo,
                "co": r.co,
                "shared_constructions": r.shared_constructions,
                "pmi_avg": r.pmi_avg,
                "producer": r.producer,
                "model_type": r.model_type,
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
