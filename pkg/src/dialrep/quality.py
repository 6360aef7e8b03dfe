"""Generation-quality scoring and human-likeness correlation.

BLEU (with brevity penalty and length ratio) is computed in-core over the
package tokenizer's output. Semantic similarity, perplexity and distributional
scores require learned models and are ingested from adapter-produced JSONL,
never computed here.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import ContextSample, tokenize
from .miner import ConstructionLexicon
from .stats import CorrelationResult, spearman

BLEU_EPSILON = 1e-9  # precision floor when an n-gram order has zero matches


@dataclass
class GenerationRecord:
    sample_id: str
    model: str
    model_type: str  # "base" | "tuned"
    generation_index: int
    text: str
    tokens: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.tokens:
            self.tokens = [t.norm for t in tokenize(self.text)]


@dataclass
class QualityScores:
    bleu: float
    bp: float
    lr: float
    bert_p: float | None = None
    bert_r: float | None = None
    bert_f1: float | None = None
    ppl: dict = field(default_factory=dict)  # evaluator -> {"ii": ..., "id": ...}
    mauve: float | None = None


@dataclass
class HumanLikenessRecord:
    model: str
    model_type: str
    metric: str  # "co" | "vo" | "prop_repetition"
    distance: float  # |human value - model value|


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(
    references: Sequence[str], hypotheses: Sequence[str], max_n: int = 4
) -> QualityScores:
    """Corpus BLEU over aligned (reference, hypothesis) pairs: geometric mean
    of modified n-gram precisions for n = 1..max_n, times the brevity penalty
    min(1, exp(1 - r/c)). Zero-match orders are floored at 1e-9 so the score
    degrades smoothly instead of collapsing to NaN."""
    if len(references) != len(hypotheses):
        raise ValueError(f"length mismatch: {len(references)} references vs "
                         f"{len(hypotheses)} hypotheses")
    if not hypotheses:
        raise ValueError("empty hypothesis set")
    ref_tokens = [[t.norm for t in tokenize(r)] for r in references]
    hyp_tokens = [[t.norm for t in tokenize(h)] for h in hypotheses]

    matches = [0] * max_n
    totals = [0] * max_n
    for ref, hyp in zip(ref_tokens, hyp_tokens):
        for n in range(1, max_n + 1):
            hyp_counts = _ngram_counts(hyp, n)
            if not hyp_counts:
                continue
            ref_counts = _ngram_counts(ref, n)
            totals[n - 1] += sum(hyp_counts.values())
            matches[n - 1] += sum(
                min(c, ref_counts[g]) for g, c in hyp_counts.items()
            )

    c = sum(len(h) for h in hyp_tokens)
    r = sum(len(t) for t in ref_tokens)
    if c == 0:
        return QualityScores(bleu=0.0, bp=0.0, lr=0.0)
    bp = min(1.0, math.exp(1.0 - r / c))
    lr = c / r if r > 0 else math.inf

    log_sum = 0.0
    for n in range(max_n):
        precision = matches[n] / totals[n] if totals[n] > 0 and matches[n] > 0 else BLEU_EPSILON
        log_sum += math.log(precision) / max_n
    return QualityScores(bleu=bp * math.exp(log_sum), bp=bp, lr=lr)


def prop_repetition(sample: ContextSample, lexicon: ConstructionLexicon) -> float:
    """Stand-in repetition-proportion measure: the fraction of target-utterance
    token positions covered by at least one lexicon-entry occurrence."""
    target = sample.target
    if not target.tokens:
        return 0.0
    keys = set(lexicon.entries)
    lengths = sorted({len(k) for k in keys})
    covered: set[int] = set()
    norms = target.norms
    for n in lengths:
        for off in range(len(norms) - n + 1):
            if tuple(norms[off : off + n]) in keys:
                covered.update(range(off, off + n))
    return len(covered) / len(target.tokens)


def load_generations(path: str | Path) -> list[GenerationRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(
                    GenerationRecord(
                        sample_id=obj["sample_id"],
                        model=obj["model"],
                        model_type=obj["model_type"],
                        generation_index=int(obj["generation_index"]),
                        text=obj["text"],
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: malformed generation record ({exc})")
    return records


class ScoreTable:
    """Externally computed scores keyed for joining onto generation records.

    Per-generation scores join on (sample_id, model, model_type,
    generation_index); distribution-level scores (MAUVE) join on
    (model, model_type, generation_index) following the five-corpora
    protocol: each generation index is treated as its own corpus.
    """

    def __init__(self) -> None:
        self.generation_scores: dict[tuple, dict] = {}
        self.mauve_scores: dict[tuple, float] = {}
        self.warnings: list[str] = []

    def mauve_groups(self) -> dict[tuple[str, str], list[float]]:
        groups: dict[tuple[str, str], list[float]] = {}
        for (model, model_type, _gi), value in sorted(self.mauve_scores.items()):
            groups.setdefault((model, model_type), []).append(value)
        return groups


def ingest_external_scores(path: str | Path) -> ScoreTable:
    """Read score JSONL (per-generation fields and/or MAUVE lines, detected
    per line). Duplicate keys are last-write-wins with a warning."""
    table = ScoreTable()
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: malformed score record ({exc})")
            if "mauve" in obj:
                key = (obj["model"], obj["model_type"], int(obj["generation_index"]))
                if key in table.mauve_scores:
                    table.warnings.append(
                        f"line {lineno}: duplicate mauve key {key}; keeping the later value"
                    )
                table.mauve_scores[key] = float(obj["mauve"])
                continue
            try:
                key = (
                    obj["sample_id"], obj["model"], obj["model_type"],
                    int(obj["generation_index"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: malformed score record ({exc})")
            entry = table.generation_scores.setdefault(key, {"ppl": {}})
            for fieldname in ("bert_p", "bert_r", "bert_f1"):
                if fieldname in obj and obj[fieldname] is not None:
                    if fieldname in entry and entry[fieldname] is not None:
                        table.warnings.append(
                            f"line {lineno}: duplicate {fieldname} for {key}; "
                            "keeping the later value"
                        )
                    entry[fieldname] = float(obj[fieldname])
            if "ppl" in obj and obj["ppl"] is not None:
                ev = obj["ppl"].get("evaluator", "default")
                if ev in entry["ppl"]:
                    table.warnings.append(
                        f"line {lineno}: duplicate ppl[{ev}] for {key}; keeping the later value"
                    )
                entry["ppl"][ev] = {
                    "ii": obj["ppl"].get("ii"),
                    "id": obj["ppl"].get("id"),
                }
    return table


def join_scores(
    generations: Sequence[GenerationRecord], table: ScoreTable
) -> tuple[list[dict], list[str]]:
    """One row per generation with whatever scores matched; unmatched score
    keys are reported as warnings, not errors."""
    rows = []
    matched: set[tuple] = set()
    for g in generations:
        key = (g.sample_id, g.model, g.model_type, g.generation_index)
        entry = table.generation_scores.get(key, {})
        if key in table.generation_scores:
            matched.add(key)
        mauve_key = (g.model, g.model_type, g.generation_index)
        rows.append({
            "sample_id": g.sample_id,
            "model": g.model,
            "model_type": g.model_type,
            "generation_index": g.generation_index,
            "text": g.text,
            "bert_p": entry.get("bert_p"),
            "bert_r": entry.get("bert_r"),
            "bert_f1": entry.get("bert_f1"),
            "ppl": entry.get("ppl", {}),
            "mauve": table.mauve_scores.get(mauve_key),
        })
    warnings = list(table.warnings)
    for key in sorted(set(table.generation_scores) - matched):
        warnings.append(f"score key {key} matched no generation record")
    return rows, warnings


def humanlikeness_distances(
    human_value: float, model_values: dict[tuple[str, str], float], metric: str
) -> list[HumanLikenessRecord]:
    """Absolute difference between the human value of a metric and each
    (model, model_type) group's value."""
    return [
        HumanLikenessRecord(
            model=model, model_type=model_type, metric=metric,
            distance=abs(human_value - value),
        )
        for (model, model_type), value in sorted(model_values.items())
    ]


def humanlikeness_correlation(
    metric_distances: Sequence[float], quality_scores: Sequence[float]
) -> CorrelationResult:
    """Spearman correlation between |human - model| metric distances and a
    quality metric over aligned groups."""
    return spearman(metric_distances, quality_scores)
