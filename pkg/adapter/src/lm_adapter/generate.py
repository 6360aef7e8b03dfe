"""Target-utterance generation: ancestral sampling, newline-terminated."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import torch

from .prompts import render_prompt


def load_samples(path: str | Path) -> list[dict]:
    """Read the sample exchange JSONL (sample_id, dialogue_id, target_speaker,
    utterances with index/speaker/text)."""
    samples = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                samples.append(json.loads(line))
    return samples


def sample_context(sample: dict) -> tuple[list[tuple[str, str]], str, str]:
    """(context turns, target speaker, target text) from a sample record;
    the last utterance is the target."""
    utts = sample["utterances"]
    context = [(u["speaker"], u["text"]) for u in utts[:-1]]
    return context, sample["target_speaker"], utts[-1]["text"]


@torch.no_grad()
def generate_one(
    model,
    tokenizer,
    prompt_ids: Sequence[int],
    generator: torch.Generator,
    max_new_tokens: int = 64,
    greedy: bool = False,
) -> str:
    """Sample from the untruncated next-token distribution (temperature 1)
    until a newline or the token cap; text beyond the newline is discarded."""
    ids = list(prompt_ids)
    produced: list[int] = []
    for _ in range(max_new_tokens):
        logits = model(torch.tensor(ids, dtype=torch.long).unsqueeze(0))[0, -1]
        if greedy:
            next_id = int(logits.argmax())
        else:
            probs = torch.softmax(logits, dim=-1)
            next_id = int(torch.multinomial(probs, 1, generator=generator))
        if next_id == tokenizer.newline_id:
            break
        produced.append(next_id)
        ids.append(next_id)
    return tokenizer.decode(produced)


def generate_targets(
    model,
    tokenizer,
    samples: Sequence[dict],
    model_name: str,
    model_type: str,
    out_path: str | Path,
    seed: int = 0,
    generations_per_sample: int = 5,
    max_new_tokens: int = 64,
    greedy: bool = False,
) -> int:
    """Write generation records (5 per sample by default) in the generation
    exchange format. Returns the record count."""
    generator = torch.Generator().manual_seed(seed)
    written = 0
    with Path(out_path).open("w", encoding="utf-8", newline="\n") as fh:
        for sample in samples:
            context, target_speaker, _ = sample_context(sample)
            layout = render_prompt(tokenizer, context, target_speaker)
            for gi in range(generations_per_sample):
                text = generate_one(model, tokenizer, layout.ids, generator,
                                    max_new_tokens=max_new_tokens, greedy=greedy)
                record = {
                    "sample_id": sample["sample_id"],
                    "model": model_name,
                    "model_type": model_type,
                    "generation_index": gi,
                    "text": text,
                }
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                written += 1
    return written
