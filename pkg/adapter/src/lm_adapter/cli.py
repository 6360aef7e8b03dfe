"""Adapter CLI: generate | attribute | score.

--model accepts the built-in "tiny" (self-contained toy model whose
vocabulary is built from the samples file; useful for fixtures and contract
tests) or a Hugging Face model id / local path (requires transformers).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .attribute import export_attributions
from .generate import generate_targets, load_samples
from .modeling import HFCausalLM, TinyCausalLM, WordTokenizer
from .score import score_generations


def _load_backend(model_id: str, checkpoint: str | None, samples: list[dict],
                  seed: int):
    if model_id == "tiny":
        texts = [u["text"] for s in samples for u in s["utterances"]]
        tokenizer = WordTokenizer.from_texts(texts)
        model = TinyCausalLM(tokenizer.vocab_size, seed=seed)
        model.eval()
        return model, tokenizer
    backend = HFCausalLM(model_id, checkpoint)
    return backend, backend


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lm-adapter")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", required=True, help="'tiny' or HF id/path")
        p.add_argument("--checkpoint", default=None)
        p.add_argument("--model-type", default="base", choices=("base", "tuned"))
        p.add_argument("--samples", required=True, help="samples.jsonl from the analytics pipeline")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("generate", help="sample target utterances")
    common(p)
    p.add_argument("--generations", type=int, default=5)
    p.add_argument("--max-new-tokens", type=int, default=64)
    p.add_argument("--greedy", action="store_true", help="deterministic debug decoding")

    p = sub.add_parser("attribute", help="export target attribution matrices")
    common(p)

    p = sub.add_parser("score", help="evaluator perplexities (+BERTScore/MAUVE when installed)")
    common(p)
    p.add_argument("--generations-file", required=True)
    p.add_argument("--mauve-out", default=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    samples = load_samples(args.samples)
    model, tokenizer = _load_backend(args.model, args.checkpoint, samples, args.seed)

    if args.command == "generate":
        n = generate_targets(
            model, tokenizer, samples, args.model, args.model_type, args.out,
            seed=args.seed, generations_per_sample=args.generations,
            max_new_tokens=args.max_new_tokens, greedy=args.greedy,
        )
        print(f"wrote {n} generation records to {args.out}")
    elif args.command == "attribute":
        n = export_attributions(model, tokenizer, samples, args.model,
                                args.model_type, args.out)
        print(f"wrote {n} attribution records to {args.out}")
    else:
        import json
        generations = []
        with Path(args.generations_file).open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    generations.append(json.loads(line))
        mauve_out = args.mauve_out or str(Path(args.out).with_name("mauve.jsonl"))
        n_scores, n_mauve = score_generations(
            model, tokenizer, samples, generations, args.model, args.out,
            mauve_out, seed=args.seed,
        )
        print(f"wrote {n_scores} score records to {args.out} "
              f"and {n_mauve} mauve records to {mauve_out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
