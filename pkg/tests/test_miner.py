from __future__ import annotations

import random
from collections import defaultdict

import pytest

from dialrep.corpus import MAPTASK_FILLED_PAUSES, extract_samples
from dialrep.metrics import CorpusCounts
from dialrep.miner import (
    Occurrence,
    construction_passes_filters,
    construction_stats,
    filter_constructions,
    mine_shared_constructions,
)
from conftest import dialogue, random_dialogue


def brute_force_lexicon(d, filled_pause_list=frozenset()):
    """Independent oracle: enumerate every contiguous n-gram (length >= 2) of
    every utterance, intersect the two speakers' n-gram sets, apply the three
    retention filters literally. Returns {seq: sorted occurrence list}."""
    per_speaker = defaultdict(set)
    occurrences = defaultdict(list)
    for u in d.utterances:
        norms = [t.norm for t in u.tokens]
        for n in range(2, len(norms) + 1):
            for off in range(len(norms) - n + 1):
                seq = tuple(norms[off : off + n])
                per_speaker[u.speaker].add(seq)
                occurrences[seq].append(Occurrence(u.index, off, u.speaker))
    speakers = sorted({u.speaker for u in d.utterances})
    if len(speakers) != 2:
        return {}
    shared = per_speaker[speakers[0]] & per_speaker[speakers[1]]
    result = {}
    for seq in shared:
        alnum = sum(1 for t in seq if any(ch.isalnum() for ch in t))
        if alnum < 2:
            continue
        if any(t in (".", ",", "?") for t in seq):
            continue
        pauses = sum(1 for t in seq if t in filled_pause_list)
        if pauses > len(seq) / 2:
            continue
        result[seq] = sorted(occurrences[seq])
    return result


class TestMineSharedConstructions:
    def test_hand_example(self, tiny_dialogue):
        lex = mine_shared_constructions(tiny_dialogue)
        assert set(lex.entries) == {
            ("the", "left"), ("left", "side"), ("the", "left", "side"),
        }

    def test_disjoint_vocabulary_empty(self):
        d = dialogue("d", ("A", "red green blue"), ("B", "one two three"))
        assert mine_shared_constructions(d).entries == {}

    def test_verbatim_repeat_maximality(self):
        d = dialogue("d", ("A", "a b c"), ("B", "a b c"))
        lex = mine_shared_constructions(d)
        assert set(lex.entries) == {("a", "b"), ("b", "c"), ("a", "b", "c")}
        assert lex.entries[("a", "b", "c")].is_maximal
        assert not lex.entries[("a", "b")].is_maximal
        assert not lex.entries[("b", "c")].is_maximal

    def test_occurrences_recorded(self, tiny_dialogue):
        lex = mine_shared_constructions(tiny_dialogue)
        occs = lex.entries[("the", "left")].occurrences
        assert occs == [Occurrence(0, 2, "A"), Occurrence(1, 1, "B"), Occurrence(2, 0, "A")]

    def test_occurrence_slices_match_entry(self):
        rng = random.Random(3)
        for i in range(40):
            d = random_dialogue(rng, dialogue_id=f"r{i}")
            lex = mine_shared_constructions(d)
            norms = {u.index: [t.norm for t in u.tokens] for u in d.utterances}
            for seq, entry in lex.entries.items():
                assert entry.speakers_used == d.speakers
                for occ in entry.occurrences:
                    sl = norms[occ.utterance_index][occ.token_offset : occ.token_offset + len(seq)]
                    assert tuple(sl) == seq

    def test_monotonicity_adding_utterance(self):
        rng = random.Random(4)
        for i in range(30):
            d = random_dialogue(rng, max_utterances=8, dialogue_id=f"r{i}")
            before = set(mine_shared_constructions(d).entries)
            extended = random_dialogue(rng, max_utterances=2, dialogue_id=f"r{i}x")
            extra = extended.utterances[0]
            extra.index = len(d.utterances)
            extra.speaker = "A" if d.utterances[-1].speaker == "B" else "B"
            d.utterances.append(extra)
            after = set(mine_shared_constructions(d).entries)
            assert before <= after


class TestFilterConstructions:
    def test_all_pauses_removed(self):
        d = dialogue("d", ("A", "um uh-huh er"), ("B", "um uh-huh er"),
                     pause_list=MAPTASK_FILLED_PAUSES)
        lex = filter_constructions(mine_shared_constructions(d), MAPTASK_FILLED_PAUSES)
        assert ("um", "uh-huh", "er") not in lex.entries

    def test_half_pauses_kept(self):
        assert construction_passes_filters(("uh-huh", "aye"), MAPTASK_FILLED_PAUSES)

    def test_majority_pauses_removed(self):
        assert not construction_passes_filters(("um", "uh-huh", "er"), MAPTASK_FILLED_PAUSES)
        assert not construction_passes_filters(("um", "uh-huh", "er", "aye"),
                                               MAPTASK_FILLED_PAUSES)

    def test_sentence_punct_removed(self):
        d = dialogue("d", ("A", "right , okay"), ("B", "right , okay"))
        lex = filter_constructions(mine_shared_constructions(d))
        assert ("right", ",", "okay") not in lex.entries
        assert (",", "okay") not in lex.entries
        # "!" is not in the filter list
        assert construction_passes_filters(("oh", "yes", "!"), frozenset())

    def test_fewer_than_two_alphanumeric_removed(self):
        assert not construction_passes_filters(("!", "yes"), frozenset())
        assert construction_passes_filters(("uh-huh", "aye"), frozenset())

    def test_maximality_recomputed_after_filter(self):
        # "x . y" shared: the 3-gram is dropped (contains "."), leaving the
        # bigrams as top-level survivors... but bigrams with "." are dropped
        # too, so use pauses instead: "uh uh okay" with uh a pause.
        pauses = frozenset({"uh"})
        d = dialogue("d", ("A", "uh uh okay"), ("B", "uh uh okay"), pause_list=pauses)
        mined = mine_shared_constructions(d)
        assert not mined.entries[("uh", "okay")].is_maximal  # inside "uh uh okay"
        filtered = filter_constructions(mined, pauses)
        # ("uh","uh") and ("uh","uh","okay") fail the pause-majority rule;
        # ("uh","okay") survives and becomes maximal
        assert set(filtered.entries) == {("uh", "okay")}
        assert filtered.entries[("uh", "okay")].is_maximal

    def test_idempotent(self):
        rng = random.Random(5)
        for i in range(30):
            d = random_dialogue(rng, dialogue_id=f"r{i}")
            once = filter_constructions(mine_shared_constructions(d), MAPTASK_FILLED_PAUSES)
            twice = filter_constructions(once, MAPTASK_FILLED_PAUSES)
            assert set(once.entries) == set(twice.entries)
            for k in once.entries:
                assert once.entries[k].is_maximal == twice.entries[k].is_maximal
                assert once.entries[k].occurrences == twice.entries[k].occurrences

    def test_input_lexicon_untouched(self, tiny_dialogue):
        mined = mine_shared_constructions(tiny_dialogue)
        before = {k: list(v.occurrences) for k, v in mined.entries.items()}
        filter_constructions(mined, MAPTASK_FILLED_PAUSES)
        assert {k: list(v.occurrences) for k, v in mined.entries.items()} == before


class TestOracleEquivalence:
    def test_mine_filter_equals_brute_force(self):
        rng = random.Random(2024)
        for i in range(60):
            d = random_dialogue(rng, max_utterances=12, vocab=20, max_len=8,
                                dialogue_id=f"r{i}")
            pauses = MAPTASK_FILLED_PAUSES if i % 2 else frozenset()
            got = filter_constructions(mine_shared_constructions(d), pauses)
            expected = brute_force_lexicon(d, pauses)
            assert set(got.entries) == set(expected)
            for seq, occs in expected.items():
                assert got.entries[seq].occurrences == occs


class TestConstructionStats:
    def _spread_dialogue(self):
        # "go left" occurs at utterances 2, 5 and 9 of a 10-utterance dialogue
        turns = []
        for i in range(10):
            speaker = "A" if i % 2 == 0 else "B"
            text = "go left now" if i in (2, 5, 9) else f"filler{i} stuff{i}"
            turns.append((speaker, text))
        return dialogue("d", *turns)

    def test_frequency_incidence_rep_distance(self):
        d = self._spread_dialogue()
        lex = filter_constructions(mine_shared_constructions(d))
        sample = extract_samples(d, window=10)[0]
        stats = construction_stats(lex, sample)
        row = stats[("go", "left")]
        assert row.frequency == 3
        assert row.incidence == 3
        assert row.rep_distance == pytest.approx((3 + 4) / 2)

    def test_single_occurrence_no_rep_distance(self):
        d = dialogue(
            "d",
            ("A", "red car here"),
            ("B", "red car there"),
            ("A", "nothing else"),
            ("B", "nothing more"),
        )
        lex = filter_constructions(mine_shared_constructions(d))
        stats = construction_stats(lex, d)
        assert stats[("red", "car")].rep_distance == 1.0
        d2 = dialogue("d2", ("A", "red car red car"), ("B", "red car"))
        lex2 = filter_constructions(mine_shared_constructions(d2))
        # occurrences in only two utterances -> one gap; in one utterance -> absent
        sample_stats = construction_stats(lex2, d2)
        assert sample_stats[("red", "car")].rep_distance == 1.0

    def test_entry_absent_from_scope_no_row(self):
        d = self._spread_dialogue()
        lex = filter_constructions(mine_shared_constructions(d))
        # restrict scope to utterances 0..1 where "go left" never occurs
        from dialrep.corpus import ContextSample
        scope = ContextSample("d:0", "d", d.utterances[0:2])
        stats = construction_stats(lex, scope)
        assert ("go", "left") not in stats

    def test_pmi_attached_with_counts(self):
        d = self._spread_dialogue()
        lex = filter_constructions(mine_shared_constructions(d))
        corpus = _one_dialogue_corpus(d)
        counts = CorpusCounts.build(corpus, set(lex.entries))
        sample = extract_samples(d, window=10)[0]
        stats = construction_stats(lex, sample, counts)
        # one-dialogue corpus: the sample IS the corpus, so PMI = 0
        assert stats[("go", "left")].pmi == pytest.approx(0.0)


def _one_dialogue_corpus(d):
    from dialrep.corpus import Corpus
    return Corpus(name="test", dialogues=[d])
