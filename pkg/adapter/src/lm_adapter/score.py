"""Generation scoring: evaluator perplexities in-package; BERTScore and MAUVE
through their optional external packages when importable, absent otherwise."""

from __future__ import annotations

import json
import logging
import math
import random
from pathlib import Path
from typing import Sequence

import torch

from .generate import sample_context
from .prompts import render_prompt

log = logging.getLogger(__name__)

MAUVE_GROUP_SIZE = 3000


@torch.no_grad()
def _mean_nll(model, ids: list[int], score_from: int) -> float:
    """Mean negative log-likelihood of ids[score_from:] given their prefix."""
    if score_from < 1 or score_from >= len(ids):
        raise ValueError("nothing to score")
    tensor = torch.tensor(ids, dtype=torch.long).unsqueeze(0)
    logits = model(tensor)[0]
    logprobs = torch.log_softmax(logits, dim=-1)
    total = 0.0
    for pos in range(score_from, len(ids)):
        total += float(logprobs[pos - 1, ids[pos]])
    return -total / (len(ids) - score_from)


def perplexities(model, tokenizer, context: list[tuple[str, str]],
                 target_speaker: str, text: str) -> tuple[float, float] | None:
    """(ppl_ii, ppl_id): perplexity of the text alone and conditioned on the
    rendered dialogue context. None when the text has no tokens."""
    target_ids = [i for piece in text.split() for i in tokenizer.encode_piece(piece)]
    if not target_ids:
        return None
    # independent of context: anchor on the newline separator token
    ii_ids = [tokenizer.newline_id] + target_ids
    ppl_ii = math.exp(_mean_nll(model, ii_ids, 1))
    # dependent on context: full prompt, score only the target tokens
    layout = render_prompt(tokenizer, context, target_speaker, target_text=text)
    ppl_id = math.exp(_mean_nll(model, layout.ids, layout.target_start))
    return ppl_ii, ppl_id


def bert_scores(references: Sequence[str], candidates: Sequence[str]):
    """Per-pair (P, R, F1) via the bert-score package, or None if missing."""
    try:
        from bert_score import score as _score
    except ImportError:
        log.warning("bert-score not installed; bert_p/bert_r/bert_f1 left absent")
        return None
    p, r, f1 = _score(list(candidates), list(references), lang="en")
    return [(float(a), float(b), float(c)) for a, b, c in zip(p, r, f1)]


def mauve_generation_groups(
    generations: Sequence[dict], rng: random.Random, group_size: int = MAUVE_GROUP_SIZE
) -> dict[tuple[str, str, int], list[str]]:
    """Group generation texts by (model, model_type, generation_index), each
    group treated as its own corpus; groups larger than ``group_size`` are
    randomly subsampled to it, smaller ones are used whole."""
    groups: dict[tuple[str, str, int], list[str]] = {}
    for g in generations:
        key = (g["model"], g["model_type"], g["generation_index"])
        groups.setdefault(key, []).append(g["text"])
    out = {}
    for key in sorted(groups):
        texts = groups[key]
        if len(texts) > group_size:
            texts = rng.sample(texts, group_size)
        out[key] = texts
    return out


def mauve_scores(groups: dict, references: Sequence[str]):
    """One MAUVE value per group via the mauve-text package, or None."""
    try:
        import mauve as _mauve
    except ImportError:
        log.warning("mauve-text not installed; mauve scores left absent")
        return None
    out = {}
    for key, texts in groups.items():
        result = _mauve.compute_mauve(p_text=list(references)[: len(texts)],
                                      q_text=texts)
        out[key] = float(result.mauve)
    return out


def score_generations(
    evaluator_model,
    tokenizer,
    samples: Sequence[dict],
    generations: Sequence[dict],
    evaluator_name: str,
    scores_out: str | Path,
    mauve_out: str | Path,
    seed: int = 0,
) -> tuple[int, int]:
    """Write the per-generation score JSONL and the per-group MAUVE JSONL.
    Perplexities always; BERTScore/MAUVE only when their packages exist."""
    by_sample = {s["sample_id"]: s for s in samples}
    references = []
    candidates = []
    usable = []
    for g in generations:
        sample = by_sample.get(g["sample_id"])
        if sample is None:
            log.warning("generation for unknown sample %s skipped", g["sample_id"])
            continue
        usable.append(g)
        references.append(sample_context(sample)[2])
        candidates.append(g["text"])

    bert = bert_scores(references, candidates)

    n_scores = 0
    with Path(scores_out).open("w", encoding="utf-8", newline="\n") as fh:
        for i, g in enumerate(usable):
            sample = by_sample[g["sample_id"]]
            context, target_speaker, _ = sample_context(sample)
            record = {
                "sample_id": g["sample_id"],
                "model": g["model"],
                "model_type": g["model_type"],
                "generation_index": g["generation_index"],
            }
            ppl = None
            try:
                ppl = perplexities(evaluator_model, tokenizer, context,
                                   target_speaker, g["text"])
            except ValueError:
                pass
            if ppl is not None:
                record["ppl"] = {"evaluator": evaluator_name,
                                 "ii": ppl[0], "id": ppl[1]}
            if bert is not None:
                record["bert_p"], record["bert_r"], record["bert_f1"] = bert[i]
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            n_scores += 1

    rng = random.Random(seed)
    groups = mauve_generation_groups(usable, rng)
    mauve = mauve_scores(groups, references)
    n_mauve = 0
    with Path(mauve_out).open("w", encoding="utf-8", newline="\n") as fh:
        if mauve is not None:
            for (model, model_type, gi), value in sorted(mauve.items()):
                fh.write(json.dumps({
                    "model": model, "model_type": model_type,
                    "generation_index": gi, "mauve": value,
                }) + "\n")
                n_mauve += 1
    return n_scores, n_mauve
