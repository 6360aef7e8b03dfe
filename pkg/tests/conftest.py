from __future__ import annotations

import random

import pytest

from dialrep.corpus import Dialogue, Utterance, tokenize


def utt(index: int, speaker: str, text: str, pause_list=frozenset()) -> Utterance:
    return Utterance(index=index, speaker=speaker, tokens=tokenize(text, pause_list))


def dialogue(dialogue_id: str, *turns: tuple[str, str], pause_list=frozenset()) -> Dialogue:
    utterances = [
        utt(i, speaker, text, pause_list) for i, (speaker, text) in enumerate(turns)
    ]
    return Dialogue(dialogue_id=dialogue_id, utterances=utterances)


def random_dialogue(
    rng: random.Random,
    max_utterances: int = 12,
    vocab: int = 20,
    max_len: int = 8,
    dialogue_id: str = "rand",
) -> Dialogue:
    """Small random two-speaker dialogue with occasional punctuation and
    filled-pause-like tokens, alternating speakers."""
    words = [f"w{i}" for i in range(vocab)]
    extras = [".", ",", "?", "!", "uh", "um", "uh-huh"]
    n = rng.randint(2, max_utterances)
    turns = []
    for i in range(n):
        k = rng.randint(1, max_len)
        toks = []
        for _ in range(k):
            if rng.random() < 0.2:
                toks.append(rng.choice(extras))
            else:
                toks.append(rng.choice(words))
        turns.append(("A" if i % 2 == 0 else "B", " ".join(toks)))
    return dialogue(dialogue_id, *turns)


@pytest.fixture
def tiny_dialogue() -> Dialogue:
    return dialogue(
        "d0",
        ("A", "go to the left side"),
        ("B", "okay the left side yes"),
        ("A", "the left side okay"),
    )
