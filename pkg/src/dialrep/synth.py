"""Synthetic two-party corpora with a planted, linearly decaying re-use rate.

Each eligible utterance pair (p, c) gets an independent coin: on success a
pair-unique multi-token construction is placed in both utterances, so the
construction-overlap measure between them is exactly (number of shared
sub-sequences) / (utterance word count) and its expectation is linear in the
pair distance with a known slope. Construction tokens are never re-used across
pairs and filler tokens are drawn from a disjoint vocabulary, so nothing else
is shared (up to vanishing-probability filler collisions).
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import Corpus, Dialogue, Token, Utterance


@dataclass
class SyntheticSpec:
    n_dialogues: int = 200
    utterances_per_dialogue: int = 12
    vocab_size: int = 5000
    slope_between: float = -0.01
    slope_within: float = 0.0
    base_between: float = 0.1
    base_within: float = 0.0
    noise_sigma: float = 0.0
    construction_len: int = 3
    window: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.n_dialogues < 1:
            raise ValueError("n_dialogues must be >= 1")
        if self.utterances_per_dialogue < 2:
            raise ValueError("utterances_per_dialogue must be >= 2")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.construction_len < 2:
            raise ValueError("construction_len must be >= 2")
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not all(map(_finite, (self.slope_between, self.slope_within,
                                 self.base_between, self.base_within))):
            raise ValueError("slopes and base rates must be finite")


def _finite(x: float) -> bool:
    return x == x and abs(x) != float("inf")


def _shared_subsequence_count(m: int) -> int:
    # an m-gram contains m-k+1 contiguous k-grams for k=2..m
    return m * (m - 1) // 2


def plan_probabilities(spec: SyntheticSpec) -> dict[int, float]:
    """Per-distance firing probability for the pair coin, scaled so that the
    expected construction-overlap of a pair at distance d is exactly
    base + slope * d for its speaker relation. Raises when any required
    probability leaves [0, 1]."""
    m = spec.construction_len
    types_per_hit = _shared_subsequence_count(m)
    words = _words_per_utterance(spec)
    scale = words / types_per_hit
    probs: dict[int, float] = {}
    for d in range(1, spec.window):
        if d % 2 == 1:
            expected = spec.base_between + spec.slope_between * d
        else:
            expected = spec.base_within + spec.slope_within * d
        q = expected * scale
        if not 0.0 <= q <= 1.0:
            raise ValueError(
                f"infeasible planted probability at distance {d}: "
                f"expected overlap {expected:.4f} needs firing probability "
                f"{q:.4f} outside [0, 1]"
            )
        probs[d] = q
    return probs


def _words_per_utterance(spec: SyntheticSpec) -> int:
    # room for the worst case: every eligible odd-distance pair fires on both
    # sides of the utterance
    odd_distances = spec.window // 2
    return spec.construction_len * odd_distances * 2 + 2


def generate_synthetic(spec: SyntheticSpec) -> tuple[Corpus, dict]:
    """Build the corpus and return it with its ground truth (the planted
    slopes/bases in construction-overlap units and the firing plan).
    Deterministic for a fixed spec."""
    spec.validate()
    # within-speaker planting (even distances) needs a far-away host utterance
    # of the other speaker to make the construction shared; not implemented,
    # so only zero within-speaker rates are supported.
    if spec.base_within != 0.0 or spec.slope_within != 0.0:
        raise ValueError(
            "nonzero within-speaker planting is not supported: a same-speaker "
            "pair's construction is never shared by both speakers"
        )
    probs = plan_probabilities(spec)
    rng = random.Random(spec.seed)
    words = _words_per_utterance(spec)
    m = spec.construction_len
    fresh = 0

    token_cache: dict[str, Token] = {}

    def make_token(surface: str) -> Token:
        tok = token_cache.get(surface)
        if tok is None:
            # synthetic tokens are all lowercase alphanumeric; skip the
            # per-character classification of Token.from_surface
            tok = Token(surface=surface, norm=surface, is_alphanumeric=True,
                        is_punct=False, is_filled_pause=False)
            token_cache[surface] = tok
        return tok

    filler_tokens = [make_token(f"w{i}") for i in range(spec.vocab_size)]

    dialogues = []
    for di in range(spec.n_dialogues):
        n = spec.utterances_per_dialogue
        jitter = rng.gauss(0.0, spec.noise_sigma) if spec.noise_sigma > 0 else 0.0
        blocks: dict[int, list[list[Token]]] = {u: [] for u in range(n)}
        for c in range(n):
            for d in range(1, spec.window):
                p = c - d
                if p < 0 or d % 2 == 0:
                    continue
                q = min(1.0, max(0.0, probs[d] + jitter))
                if rng.random() < q:
                    construction = [make_token(f"c{fresh + k}") for k in range(m)]
                    fresh += m
                    blocks[p].append(construction)
                    blocks[c].append(construction)
        utterances = []
        for u in range(n):
            parts = list(blocks[u])
            rng.shuffle(parts)
            n_fillers = words - sum(len(b) for b in parts)
            # units are single filler tokens or whole construction blocks, so
            # inserting between units never splits a block
            units: list = [
                filler_tokens[int(rng.random() * spec.vocab_size)]
                for _ in range(n_fillers)
            ]
            for block in parts:
                units.insert(rng.randrange(len(units) + 1), block)
            tokens = []
            for unit in units:
                if isinstance(unit, list):
                    tokens.extend(unit)
                else:
                    tokens.append(unit)
            utterances.append(
                Utterance(index=u, speaker="A" if u % 2 == 0 else "B", tokens=tokens)
            )
        dialogues.append(Dialogue(dialogue_id=f"synth-{di:04d}", utterances=utterances))

    truth = {
        "slope_between": spec.slope_between,
        "slope_within": spec.slope_within,
        "base_between": spec.base_between,
        "base_within": spec.base_within,
        "words_per_utterance": words,
        "construction_len": m,
        "types_per_hit": _shared_subsequence_count(m),
        "firing_probabilities": {str(d): probs[d] for d in sorted(probs)},
        "seed": spec.seed,
    }
    corpus = Corpus(name="synthetic", dialogues=dialogues)
    return corpus, truth
