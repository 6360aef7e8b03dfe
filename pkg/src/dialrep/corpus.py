"""Transcript ingestion, tokenization, turn normalization and context sampling.

A dialogue is a strictly two-party transcript. Turns are re-segmented so that
an utterance boundary falls exactly where the speaker changes, and analysis
operates on sliding windows of consecutive utterances (the last utterance of a
window is the target, the rest are its context).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

# Characters split off token boundaries. Only these four; everything else
# (hyphens, apostrophes, semicolons, ...) stays inside the token.
_BOUNDARY_PUNCT = ".,?!"

# Corpus-specific hesitation token inventories (lowercased norms).
MAPTASK_FILLED_PAUSES = frozenset({
    "uh-huh", "er", "um", "mm-mm", "eh", "uh", "mm", "uh-uh", "nah",
    "mm-hmm", "erm", "ehm", "huh", "hmm", "mmhmm",
})
SWITCHBOARD_FILLED_PAUSES = frozenset({
    "hm", "huh", "uh", "um-hum", "huh-uh", "uh-huh", "um",
})

FORMATS = ("generic-jsonl", "swda-like", "maptask-like")


class CorpusFormatError(ValueError):
    """Raised for malformed corpus files or invariant-violating dialogues."""


@dataclass(frozen=True)
class Token:
    surface: str
    norm: str
    is_alphanumeric: bool
    is_punct: bool
    is_filled_pause: bool

    @classmethod
    def from_surface(cls, surface: str, pause_list: frozenset[str] = frozenset()) -> "Token":
        norm = surface.lower()
        has_alnum = any(ch.isalnum() for ch in surface)
        return cls(
            surface=surface,
            norm=norm,
            is_alphanumeric=has_alnum,
            is_punct=not has_alnum,
            is_filled_pause=norm in pause_list,
        )


@dataclass
class Utterance:
    index: int
    speaker: str
    tokens: list[Token]

    @property
    def word_count(self) -> int:
        return sum(1 for t in self.tokens if not t.is_punct)

    @property
    def norms(self) -> list[str]:
        return [t.norm for t in self.tokens]

    @property
    def text(self) -> str:
        return " ".join(t.surface for t in self.tokens)


@dataclass
class Dialogue:
    dialogue_id: str
    utterances: list[Utterance]

    @property
    def speakers(self) -> set[str]:
        return {u.speaker for u in self.utterances}

    def validate(self) -> None:
        if len(self.speakers) != 2:
            raise CorpusFormatError(
                f"dialogue {self.dialogue_id!r}: expected exactly 2 speakers, "
                f"found {sorted(self.speakers)}"
            )
        for i, u in enumerate(self.utterances):
            if u.index != i:
                raise CorpusFormatError(
                    f"dialogue {self.dialogue_id!r}: utterance indices not consecutive at {i}"
                )


@dataclass
class ContextSample:
    """A window of consecutive utterances: positions 1..n-1 are context,
    position n (the last) is the target."""

    sample_id: str
    dialogue_id: str
    utterances: list[Utterance]

    @property
    def target(self) -> Utterance:
        return self.utterances[-1]

    @property
    def context(self) -> list[Utterance]:
        return self.utterances[:-1]

    @property
    def target_speaker(self) -> str:
        return self.target.speaker

    def at_position(self, position: int) -> Utterance:
        """1-based window position (target = len(utterances))."""
        if not 1 <= position <= len(self.utterances):
            raise IndexError(f"position {position} out of 1..{len(self.utterances)}")
        return self.utterances[position - 1]

    def with_target_tokens(self, tokens: Sequence[Token]) -> "ContextSample":
        """Return a copy whose target utterance carries ``tokens`` instead of
        the original ones (used to score model-generated targets against the
        human context)."""
        new_target = replace(self.target, tokens=list(tokens))
        return ContextSample(
            sample_id=self.sample_id,
            dialogue_id=self.dialogue_id,
            utterances=self.utterances[:-1] + [new_target],
        )


@dataclass
class Corpus:
    name: str
    dialogues: list[Dialogue]
    filled_pause_list: frozenset[str] = frozenset()

    def validate(self) -> None:
        seen: set[str] = set()
        for d in self.dialogues:
            if d.dialogue_id in seen:
                raise CorpusFormatError(f"duplicate dialogue_id {d.dialogue_id!r}")
            seen.add(d.dialogue_id)
            d.validate()


def tokenize(text: str, pause_list: frozenset[str] = frozenset()) -> list[Token]:
    """Split ``text`` into tokens: whitespace-separated chunks, with leading
    and trailing ``.``, ``,``, ``?``, ``!`` peeled off as standalone punctuation
    tokens. Deterministic; empty/whitespace input yields an empty list.
    """
    tokens: list[Token] = []
    for chunk in text.split():
        lead: list[str] = []
        while chunk and chunk[0] in _BOUNDARY_PUNCT:
            lead.append(chunk[0])
            chunk = chunk[1:]
        trail: list[str] = []
        while chunk and chunk[-1] in _BOUNDARY_PUNCT:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        for s in lead:
            tokens.append(Token.from_surface(s, pause_list))
        if chunk:
            tokens.append(Token.from_surface(chunk, pause_list))
        for s in reversed(trail):
            tokens.append(Token.from_surface(s, pause_list))
    return tokens


def default_pause_list(name: str) -> frozenset[str]:
    """Pick the built-in filled-pause inventory matching a corpus name."""
    low = name.lower()
    if "maptask" in low or "map-task" in low or "map_task" in low:
        return MAPTASK_FILLED_PAUSES
    if "switchboard" in low or "swda" in low or low.startswith("sw"):
        return SWITCHBOARD_FILLED_PAUSES
    return frozenset()


def load_pause_list(path: str | Path) -> frozenset[str]:
    """Read a newline-separated pause list (one norm per line, '#' comments)."""
    norms = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            norms.add(line)
    return frozenset(norms)


def _build_dialogue(
    dialogue_id: str,
    turns: Iterable[tuple[str, str]],
    pause_list: frozenset[str],
) -> Dialogue:
    """Tokenize raw (speaker, text) rows, dropping rows that tokenize to
    nothing, and check the two-speaker invariant."""
    utterances: list[Utterance] = []
    speakers_seen: set[str] = set()
    for speaker, text in turns:
        speakers_seen.add(speaker)
        toks = tokenize(text, pause_list)
        if not toks:
            continue
        utterances.append(Utterance(index=len(utterances), speaker=speaker, tokens=toks))
    if len(speakers_seen) != 2:
        raise CorpusFormatError(
            f"dialogue {dialogue_id!r}: expected exactly 2 speakers, "
            f"found {sorted(speakers_seen)}"
        )
    return Dialogue(dialogue_id=dialogue_id, utterances=utterances)


def _load_generic_jsonl(path: Path, pause_list: frozenset[str]) -> list[Dialogue]:
    dialogues = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                dialogue_id = obj["dialogue_id"]
                turns = [(t["speaker"], t["text"]) for t in obj["turns"]]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusFormatError(f"{path}: line {lineno}: malformed record ({exc})") from exc
            dialogues.append(_build_dialogue(dialogue_id, turns, pause_list))
    return dialogues


def _load_swda_like(path: Path, pause_list: frozenset[str]) -> list[Dialogue]:
    """CSV rows with at least conversation_no, caller and text columns; rows
    for the same conversation_no are grouped in file order. A directory is
    read as its sorted ``*.csv`` members."""
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    grouped: dict[str, list[tuple[str, str]]] = {}
    for f in files:
        with f.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for lineno, row in enumerate(reader, start=2):
                try:
                    conv = str(row["conversation_no"]).strip()
                    caller = str(row["caller"]).strip()
                    text = row["text"]
                except (KeyError, TypeError) as exc:
                    raise CorpusFormatError(f"{f}: line {lineno}: malformed record ({exc})") from exc
                if conv == "" or caller == "" or text is None:
                    raise CorpusFormatError(f"{f}: line {lineno}: malformed record (empty field)")
                grouped.setdefault(conv, []).append((caller, text))
    return [
        _build_dialogue(f"sw{conv}", turns, pause_list)
        for conv, turns in grouped.items()
    ]


def _load_maptask_like(path: Path, pause_list: frozenset[str]) -> list[Dialogue]:
    """One dialogue per ``*.txt`` file (dialogue_id = file stem), lines of
    ``speaker<TAB>text``."""
    files = sorted(path.glob("*.txt")) if path.is_dir() else [path]
    dialogues = []
    for f in files:
        turns: list[tuple[str, str]] = []
        for lineno, line in enumerate(f.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            if "\t" not in line:
                raise CorpusFormatError(f"{f}: line {lineno}: malformed record (expected speaker<TAB>text)")
            speaker, text = line.split("\t", 1)
            turns.append((speaker.strip(), text))
        dialogues.append(_build_dialogue(f.stem, turns, pause_list))
    return dialogues


def load_corpus(
    path: str | Path,
    format: str = "generic-jsonl",
    pause_list: frozenset[str] | None = None,
    name: str | None = None,
) -> Corpus:
    """Load a corpus in one of the supported formats.

    The filled-pause inventory is, in order of precedence: the explicit
    ``pause_list`` argument, the built-in list matching the corpus name
    (or format), else empty.
    """
    path = Path(path)
    if format not in FORMATS:
        raise CorpusFormatError(f"unknown corpus format {format!r} (expected one of {FORMATS})")
    if not path.exists():
        raise CorpusFormatError(f"corpus path does not exist: {path}")
    corpus_name = name or path.stem
    if pause_list is None:
        if format == "maptask-like":
            pause_list = MAPTASK_FILLED_PAUSES
        elif format == "swda-like":
            pause_list = SWITCHBOARD_FILLED_PAUSES
        else:
            pause_list = default_pause_list(corpus_name)

    if format == "generic-jsonl":
        dialogues = _load_generic_jsonl(path, pause_list)
    elif format == "swda-like":
        dialogues = _load_swda_like(path, pause_list)
    else:
        dialogues = _load_maptask_like(path, pause_list)

    corpus = Corpus(name=corpus_name, dialogues=dialogues, filled_pause_list=pause_list)
    corpus.validate()
    return corpus


def normalize_turns(dialogue: Dialogue) -> Dialogue:
    """Merge consecutive same-speaker utterances so speakers strictly
    alternate; indices are reassigned from 0. Idempotent."""
    merged: list[Utterance] = []
    for u in dialogue.utterances:
        if not u.tokens:
            continue
        if merged and merged[-1].speaker == u.speaker:
            merged[-1] = Utterance(
                index=merged[-1].index,
                speaker=u.speaker,
                tokens=merged[-1].tokens + u.tokens,
            )
        else:
            merged.append(Utterance(index=len(merged), speaker=u.speaker, tokens=list(u.tokens)))
    return Dialogue(dialogue_id=dialogue.dialogue_id, utterances=merged)


def extract_samples(dialogue: Dialogue, window: int = 10) -> list[ContextSample]:
    """Sliding windows of ``window`` consecutive utterances, stride 1.

    Yields max(0, n - window + 1) samples; sample ids are
    ``<dialogue_id>:<start>``. Dialogues shorter than the window yield none.
    """
    if window < 2:
        raise ValueError(f"window must be >= 2, got {window}")
    n = len(dialogue.utterances)
    samples = []
    for start in range(0, n - window + 1):
        samples.append(
            ContextSample(
                sample_id=f"{dialogue.dialogue_id}:{start}",
                dialogue_id=dialogue.dialogue_id,
                utterances=dialogue.utterances[start : start + window],
            )
        )
    return samples


def write_corpus_jsonl(corpus: Corpus, path: str | Path) -> None:
    """Serialize back to the generic JSONL exchange format (surfaces joined
    with spaces, which round-trips through the tokenizer)."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for d in corpus.dialogues:
            obj = {
                "dialogue_id": d.dialogue_id,
                "turns": [{"speaker": u.speaker, "text": u.text} for u in d.utterances],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
