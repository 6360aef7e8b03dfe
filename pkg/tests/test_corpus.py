from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialrep.corpus import (
    MAPTASK_FILLED_PAUSES,
    SWITCHBOARD_FILLED_PAUSES,
    CorpusFormatError,
    extract_samples,
    load_corpus,
    load_pause_list,
    normalize_turns,
    tokenize,
)
from conftest import dialogue, random_dialogue


class TestTokenize:
    def test_no_punctuation(self):
        toks = tokenize("the beach is great")
        assert [t.surface for t in toks] == ["the", "beach", "is", "great"]
        assert all(t.is_alphanumeric and not t.is_punct for t in toks)

    def test_boundary_punct_split(self):
        toks = tokenize("okay, right.")
        assert [t.surface for t in toks] == ["okay", ",", "right", "."]
        assert [t.is_punct for t in toks] == [False, True, False, True]

    def test_filled_pause_flag(self):
        toks = tokenize("uh-huh aye", MAPTASK_FILLED_PAUSES)
        assert [t.surface for t in toks] == ["uh-huh", "aye"]
        assert toks[0].is_filled_pause and not toks[1].is_filled_pause

    def test_empty_input(self):
        assert tokenize("") == []
        assert tokenize("   \t\n ") == []

    def test_internal_hyphen_apostrophe_kept(self):
        toks = tokenize("don't uh-huh")
        assert [t.surface for t in toks] == ["don't", "uh-huh"]

    def test_multiple_boundary_punct(self):
        assert [t.surface for t in tokenize("what?!")] == ["what", "?", "!"]
        assert [t.surface for t in tokenize("...")] == [".", ".", "."]

    def test_norm_is_lowercased_surface(self):
        toks = tokenize("The BEACH")
        assert [t.norm for t in toks] == ["the", "beach"]
        assert [t.surface for t in toks] == ["The", "BEACH"]

    def test_flags_are_complementary(self):
        for t in tokenize("a . don't ?! 9 -"):
            assert t.is_punct != t.is_alphanumeric

    @given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=60))
    @settings(max_examples=200)
    def test_round_trip(self, text):
        toks = tokenize(text)
        rejoined = " ".join(t.surface for t in toks)
        again = tokenize(rejoined)
        assert [t.surface for t in again] == [t.surface for t in toks]


class TestLoadCorpus:
    def _write_jsonl(self, tmp_path, lines):
        path = tmp_path / "corpus.jsonl"
        path.write_text("\n".join(json.dumps(l) for l in lines) + "\n", encoding="utf-8")
        return path

    def test_generic_jsonl(self, tmp_path):
        path = self._write_jsonl(tmp_path, [
            {"dialogue_id": "d1", "turns": [
                {"speaker": "A", "text": "hello there"},
                {"speaker": "B", "text": "hi"},
            ]},
            {"dialogue_id": "d2", "turns": [
                {"speaker": "X", "text": "one"},
                {"speaker": "Y", "text": "two"},
            ]},
        ])
        corpus = load_corpus(path)
        assert len(corpus.dialogues) == 2
        assert corpus.dialogues[0].dialogue_id == "d1"
        assert corpus.dialogues[0].utterances[0].text == "hello there"

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"dialogue_id": "d1", "turns": [{"speaker": "A", "text": "x"}, '
            '{"speaker": "B", "text": "y"}]}\n{nope}\n',
            encoding="utf-8",
        )
        with pytest.raises(CorpusFormatError, match="line 2"):
            load_corpus(path)

    def test_three_speakers_rejected_with_id(self, tmp_path):
        path = self._write_jsonl(tmp_path, [
            {"dialogue_id": "bad-one", "turns": [
                {"speaker": "A", "text": "x"},
                {"speaker": "B", "text": "y"},
                {"speaker": "C", "text": "z"},
            ]},
        ])
        with pytest.raises(CorpusFormatError, match="bad-one"):
            load_corpus(path)

    def test_one_speaker_rejected(self, tmp_path):
        path = self._write_jsonl(tmp_path, [
            {"dialogue_id": "solo", "turns": [{"speaker": "A", "text": "x"}]},
        ])
        with pytest.raises(CorpusFormatError, match="solo"):
            load_corpus(path)

    def test_pause_list_by_name(self, tmp_path):
        path = tmp_path / "maptask_sample.jsonl"
        path.write_text(json.dumps({
            "dialogue_id": "d1",
            "turns": [{"speaker": "A", "text": "uh-huh"}, {"speaker": "B", "text": "aye"}],
        }) + "\n", encoding="utf-8")
        corpus = load_corpus(path)
        assert corpus.filled_pause_list == MAPTASK_FILLED_PAUSES
        assert corpus.dialogues[0].utterances[0].tokens[0].is_filled_pause

    def test_pause_list_override(self, tmp_path):
        pauses = tmp_path / "pauses.txt"
        pauses.write_text("# custom\nfoo\nBAR\n", encoding="utf-8")
        assert load_pause_list(pauses) == frozenset({"foo", "bar"})

    def test_swda_like_csv(self, tmp_path):
        path = tmp_path / "sw.csv"
        path.write_text(
            "conversation_no,caller,text\n"
            "2001,A,so how are you\n"
            "2001,B,\"pretty good, thanks\"\n"
            "2002,A,hello\n"
            "2002,B,hi there\n",
            encoding="utf-8",
        )
        corpus = load_corpus(path, format="swda-like")
        assert sorted(d.dialogue_id for d in corpus.dialogues) == ["sw2001", "sw2002"]
        assert corpus.filled_pause_list == SWITCHBOARD_FILLED_PAUSES

    def test_maptask_like_txt(self, tmp_path):
        d = tmp_path / "mt"
        d.mkdir()
        (d / "q1ec1.txt").write_text("g\tgo round the lake\nf\tokay round the lake\n",
                                     encoding="utf-8")
        corpus = load_corpus(d, format="maptask-like")
        assert corpus.dialogues[0].dialogue_id == "q1ec1"
        assert corpus.dialogues[0].speakers == {"g", "f"}

    def test_missing_path(self, tmp_path):
        with pytest.raises(CorpusFormatError, match="does not exist"):
            load_corpus(tmp_path / "nope.jsonl")

    def test_empty_turns_dropped(self, tmp_path):
        path = self._write_jsonl(tmp_path, [
            {"dialogue_id": "d1", "turns": [
                {"speaker": "A", "text": "hello"},
                {"speaker": "B", "text": "   "},
                {"speaker": "B", "text": "yes"},
            ]},
        ])
        corpus = load_corpus(path)
        assert [u.text for u in corpus.dialogues[0].utterances] == ["hello", "yes"]


class TestNormalizeTurns:
    def test_merges_consecutive_same_speaker(self):
        d = dialogue("d", ("A", "go on"), ("A", "please"), ("B", "okay"))
        norm = normalize_turns(d)
        assert [(u.speaker, u.text) for u in norm.utterances] == [
            ("A", "go on please"), ("B", "okay"),
        ]
        assert [u.index for u in norm.utterances] == [0, 1]

    def test_already_alternating_unchanged(self):
        d = dialogue("d", ("A", "one"), ("B", "two"), ("A", "three"))
        norm = normalize_turns(d)
        assert [(u.speaker, u.text) for u in norm.utterances] == [
            ("A", "one"), ("B", "two"), ("A", "three"),
        ]

    def test_single_row(self):
        d = dialogue("d", ("A", "alone"))
        norm = normalize_turns(d)
        assert len(norm.utterances) == 1 and norm.utterances[0].text == "alone"

    def test_empty_dialogue(self):
        from dialrep.corpus import Dialogue
        assert normalize_turns(Dialogue("d", [])).utterances == []

    def test_idempotent_on_random_dialogues(self):
        rng = random.Random(11)
        for i in range(50):
            d = random_dialogue(rng, dialogue_id=f"r{i}")
            once = normalize_turns(d)
            twice = normalize_turns(once)
            assert [(u.speaker, u.norms) for u in once.utterances] == \
                   [(u.speaker, u.norms) for u in twice.utterances]

    def test_alternation_invariant(self):
        rng = random.Random(12)
        for i in range(50):
            d = normalize_turns(random_dialogue(rng, dialogue_id=f"r{i}"))
            for a, b in zip(d.utterances, d.utterances[1:]):
                assert a.speaker != b.speaker


class TestExtractSamples:
    def _chain(self, n):
        return dialogue("d", *[("A" if i % 2 == 0 else "B", f"word{i}") for i in range(n)])

    def test_twelve_utterances_three_samples(self):
        samples = extract_samples(self._chain(12), window=10)
        assert len(samples) == 3
        assert [s.sample_id for s in samples] == ["d:0", "d:1", "d:2"]

    def test_exact_window(self):
        assert len(extract_samples(self._chain(10), window=10)) == 1

    def test_short_dialogue_yields_none(self):
        assert extract_samples(self._chain(9), window=10) == []

    def test_window_below_two_rejected(self):
        with pytest.raises(ValueError):
            extract_samples(self._chain(5), window=1)

    @given(st.integers(min_value=0, max_value=40), st.integers(min_value=2, max_value=12))
    @settings(max_examples=100)
    def test_count_formula(self, n, window):
        samples = extract_samples(self._chain(n), window=window)
        assert len(samples) == max(0, n - window + 1)

    def test_samples_contiguous_and_alternating(self):
        samples = extract_samples(self._chain(14), window=10)
        for s in samples:
            indices = [u.index for u in s.utterances]
            assert indices == list(range(indices[0], indices[0] + 10))
            for a, b in zip(s.utterances, s.utterances[1:]):
                assert a.speaker != b.speaker

    def test_target_speaker(self):
        samples = extract_samples(self._chain(10), window=10)
        assert samples[0].target_speaker == samples[0].utterances[-1].speaker
