"""Fine-tuning script for Hugging Face causal models on rendered dialogue
text: 20 epochs with early stopping on evaluation perplexity, keeping the
best checkpoint. Provided for completeness; nothing downstream depends on
fine-tuned checkpoints existing.
"""

from __future__ import annotations

import argparse
import math
from pathlib import Path

import torch


def render_training_text(samples: list[dict]) -> list[str]:
    from .prompts import speaker_labels

    texts = []
    for s in samples:
        utts = [(u["speaker"], u["text"]) for u in s["utterances"]]
        labels = speaker_labels(utts, s["target_speaker"])
        lines = [f"{labels[spk]} {text}" for spk, text in utts]
        texts.append("\n".join(lines) + "\n")
    return texts


def main(argv: list[str] | None = None) -> int:
    from transformers import AutoModelForCausalLM, AutoTokenizer

    parser = argparse.ArgumentParser(prog="lm-adapter-finetune")
    parser.add_argument("--model", required=True)
    parser.add_argument("--samples", required=True)
    parser.add_argument("--eval-samples", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--patience", type=int, default=3)
    parser.add_argument("--lr", type=float, default=5e-5)
    parser.add_argument("--block-size", type=int, default=512)
    parser.add_argument("--batch-size", type=int, default=4)
    args = parser.parse_args(argv)

    from .generate import load_samples

    tokenizer = AutoTokenizer.from_pretrained(args.model)
    model = AutoModelForCausalLM.from_pretrained(args.model)
    device = "cuda" if torch.cuda.is_available() else "cpu"
    model.to(device)

    def batches(samples):
        text = "".join(render_training_text(samples))
        ids = tokenizer.encode(text)
        blocks = [ids[i : i + args.block_size]
                  for i in range(0, len(ids) - args.block_size, args.block_size)]
        for i in range(0, len(blocks), args.batch_size):
            yield torch.tensor(blocks[i : i + args.batch_size], device=device)

    train = load_samples(args.samples)
    dev = load_samples(args.eval_samples)
    optimizer = torch.optim.AdamW(model.parameters(), lr=args.lr)

    def eval_perplexity() -> float:
        model.eval()
        total, count = 0.0, 0
        with torch.no_grad():
            for batch in batches(dev):
                loss = model(batch, labels=batch).loss
                total += float(loss) * batch.numel()
                count += batch.numel()
        return math.exp(total / max(1, count))

    best = math.inf
    stale = 0
    out = Path(args.out)
    for epoch in range(args.epochs):
        model.train()
        for batch in batches(train):
            optimizer.zero_grad()
            loss = model(batch, labels=batch).loss
            loss.backward()
            optimizer.step()
        ppl = eval_perplexity()
        print(f"epoch {epoch + 1}: eval perplexity {ppl:.3f}")
        if ppl < best:
            best = ppl
            stale = 0
            model.save_pretrained(out)
            tokenizer.save_pretrained(out)
        else:
            stale += 1
            if stale >= args.patience:
                print(f"early stop after {epoch + 1} epochs (best {best:.3f})")
                break
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
