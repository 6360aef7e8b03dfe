"""Command-line surface.

Exit codes: 0 success, 2 config error, 3 data error, 4 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import attrib as attrib_mod
from . import corpus as corpus_mod
from . import metrics as metrics_mod
from . import miner as miner_mod
from . import quality as quality_mod
from . import stats as stats_mod
from .pipeline import (
    EXIT_DATA, EXIT_INTERNAL, EXIT_OK,
    RunConfig, StageError, run_pipeline, run_synth,
)
from .synth import SyntheticSpec


def _add_corpus_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", required=True, help="corpus file or directory")
    p.add_argument("--format", default="generic-jsonl", choices=corpus_mod.FORMATS)
    p.add_argument("--pauses", default=None, help="newline-separated filled-pause list")


def _load_normalized(args) -> corpus_mod.Corpus:
    pause_list = corpus_mod.load_pause_list(args.pauses) if args.pauses else None
    raw = corpus_mod.load_corpus(args.corpus, format=args.format, pause_list=pause_list)
    return corpus_mod.Corpus(
        name=raw.name,
        dialogues=[corpus_mod.normalize_turns(d) for d in raw.dialogues],
        filled_pause_list=raw.filled_pause_list,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialrep",
        description="Local, partner-specific repetition analytics for two-party dialogue",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load, normalize and re-emit a corpus")
    _add_corpus_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sample", help="emit sliding-window context samples")
    _add_corpus_args(p)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--out", required=True)

    p = sub.add_parser("mine", help="mine and filter shared construction lexica")
    _add_corpus_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("metrics", help="emit per-pair repetition records")
    _add_corpus_args(p)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--co-mode", default="types", choices=("types", "tokens"))
    p.add_argument("--pairs", default="target", choices=("target", "all"))
    p.add_argument("--out", required=True)

    p = sub.add_parser("attrib", help="attribution operations")
    attrib_sub = p.add_subparsers(dest="attrib_command", required=True)
    pa = attrib_sub.add_parser("aggregate", help="aggregate attribution matrices")
    pa.add_argument("--attributions", required=True)
    pa.add_argument("--records", default=None, help="records.csv to join on")
    pa.add_argument("--out", required=True)

    p = sub.add_parser("quality", help="generation-quality operations")
    quality_sub = p.add_subparsers(dest="quality_command", required=True)
    pq = quality_sub.add_parser("join", help="join external scores onto generations")
    pq.add_argument("--generations", required=True)
    pq.add_argument("--scores", default=None)
    pq.add_argument("--references", default=None,
                    help="JSONL of {sample_id, text} human references for BLEU")
    pq.add_argument("--out", required=True)

    p = sub.add_parser("stats", help="statistical tests over emitted tables")
    stats_sub = p.add_subparsers(dest="stats_command", required=True)
    pd = stats_sub.add_parser("decay", help="distance-decay regression over records")
    pd.add_argument("--records", required=True)
    pd.add_argument("--measure", default="co", choices=("co", "vo"))
    pd.add_argument("--out", default=None)
    pt = stats_sub.add_parser("ttest", help="Welch t-test between two record groups")
    pt.add_argument("--records", required=True)
    pt.add_argument("--measure", default="co", choices=("co", "vo"))
    pt.add_argument("--split", default="speaker_relation",
                    choices=("speaker_relation",))
    pc = stats_sub.add_parser("correlate", help="Spearman correlation of two CSV columns")
    pc.add_argument("--table", required=True)
    pc.add_argument("--x", required=True)
    pc.add_argument("--y", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with planted decay")
    p.add_argument("--dialogues", type=int, default=200)
    p.add_argument("--utterances", type=int, default=12)
    p.add_argument("--vocab", type=int, default=5000)
    p.add_argument("--slope-between", type=float, default=-0.01)
    p.add_argument("--slope-within", type=float, default=0.0)
    p.add_argument("--base-between", type=float, default=0.1)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="full pipeline into an output bundle")
    _add_corpus_args(p)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--co-mode", default="types", choices=("types", "tokens"))
    p.add_argument("--pairs", default="target", choices=("target", "all"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--attributions", default=None)
    p.add_argument("--generations", default=None)
    p.add_argument("--scores", default=None)
    p.add_argument("--out", required=True)

    return parser


def _cmd_ingest(args) -> int:
    corpus = _load_normalized(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus_mod.write_corpus_jsonl(corpus, out / "corpus_normalized.jsonl")
    n_utts = sum(len(d.utterances) for d in corpus.dialogues)
    print(f"ingested {len(corpus.dialogues)} dialogues, {n_utts} normalized utterances")
    return EXIT_OK


def _cmd_sample(args) -> int:
    corpus = _load_normalized(args)
    samples = []
    for d in corpus.dialogues:
        samples.extend(corpus_mod.extract_samples(d, window=args.window))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .pipeline import _write_samples
    _write_samples(samples, out)
    print(f"extracted {len(samples)} samples (window {args.window})")
    return EXIT_OK


def _cmd_mine(args) -> int:
    corpus = _load_normalized(args)
    lexica = {}
    for d in corpus.dialogues:
        lexica[d.dialogue_id] = miner_mod.filter_constructions(
            miner_mod.mine_shared_constructions(d), corpus.filled_pause_list
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    miner_mod.write_lexicon_jsonl((lexica[k] for k in sorted(lexica)), out / "lexicon.jsonl")
    n = sum(len(l.entries) for l in lexica.values())
    print(f"mined {n} shared constructions over {len(lexica)} dialogues")
    return EXIT_OK


def _cmd_metrics(args) -> int:
    corpus = _load_normalized(args)
    lexica = {}
    sequences = set()
    for d in corpus.dialogues:
        lex = miner_mod.filter_constructions(
            miner_mod.mine_shared_constructions(d), corpus.filled_pause_list
        )
        lexica[d.dialogue_id] = lex
        sequences.update(lex.entries)
    counts = metrics_mod.CorpusCounts.build(corpus, sequences)
    records = []
    for d in corpus.dialogues:
        for s in corpus_mod.extract_samples(d, window=args.window):
            records.extend(
                metrics_mod.pair_records(
                    s, lexica[d.dialogue_id], counts,
                    pairs=args.pairs, co_mode=args.co_mode,
                )
            )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics_mod.write_records_csv(records, out / "records.csv")
    metrics_mod.write_records_jsonl(records, out / "records.jsonl")
    print(f"wrote {len(records)} repetition records")
    return EXIT_OK


def _cmd_attrib_aggregate(args) -> int:
    records, issues = attrib_mod.load_attributions(args.attributions)
    for issue in issues:
        print(f"{issue.level}: line {issue.line}: {issue.message}", file=sys.stderr)
    join_records = None
    if args.records:
        join_records = metrics_mod.read_records_csv(args.records)
    aggregations = [attrib_mod.aggregate(r) for r in records]
    rows = attrib_mod.element_table(aggregations, join_records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    attrib_mod.write_element_table_csv(rows, out / "elements.csv")
    n_err = sum(1 for i in issues if i.level == "error")
    print(f"aggregated {len(records)} attribution records ({n_err} rejected)")
    return EXIT_OK


def _cmd_quality_join(args) -> int:
    generations = quality_mod.load_generations(args.generations)
    table = quality_mod.ingest_external_scores(args.scores) if args.scores \
        else quality_mod.ScoreTable()
    rows, warnings = quality_mod.join_scores(generations, table)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "quality.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    if args.references:
        refs = {}
        with Path(args.references).open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    refs[obj["sample_id"]] = obj["text"]
        by_group: dict[tuple[str, str], tuple[list[str], list[str]]] = {}
        for g in generations:
            if g.sample_id in refs:
                pair = by_group.setdefault((g.model, g.model_type), ([], []))
                pair[0].append(refs[g.sample_id])
                pair[1].append(g.text)
        bleu_rows = []
        for (model, model_type), (rlist, hlist) in sorted(by_group.items()):
            scores = quality_mod.corpus_bleu(rlist, hlist)
            bleu_rows.append({
                "model": model, "model_type": model_type,
                "bleu": scores.bleu, "bp": scores.bp, "lr": scores.lr,
                "n": len(hlist),
            })
        with (out / "bleu.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
            for row in bleu_rows:
                fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"joined {len(rows)} generation rows ({len(warnings)} warnings)")
    return EXIT_OK


def _cmd_stats(args) -> int:
    if args.stats_command == "decay":
        records = metrics_mod.read_records_csv(args.records)
        result = stats_mod.decay_slope(records, measure=args.measure)
        text = stats_mod.regression_table(result, title=f"{args.measure} ~ S + dist:S")
        print(text, end="")
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"decay_{args.measure}.txt").write_text(text, encoding="utf-8")
            stats_mod.write_regression_csv(result, out / f"decay_{args.measure}.csv")
    elif args.stats_command == "ttest":
        records = metrics_mod.read_records_csv(args.records)
        between = [getattr(r, args.measure) for r in records if r.speaker_relation == "between"]
        within = [getattr(r, args.measure) for r in records if r.speaker_relation == "within"]
        result = stats_mod.welch_t(between, within)
        print(f"welch t-test on {args.measure} (between vs within): "
              f"t={result.t:.4f}, df={result.df:.2f}, p={result.p:.4g}, "
              f"mean_between={result.mean_a:.6f}, mean_within={result.mean_b:.6f}")
    else:
        with Path(args.table).open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            xs, ys = [], []
            for row in reader:
                if row[args.x] and row[args.y]:
                    xs.append(float(row[args.x]))
                    ys.append(float(row[args.y]))
        result = stats_mod.spearman(xs, ys)
        print(f"spearman rho={result.rho:.4f}, p={result.p:.4g}, n={result.n}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_dialogues=args.dialogues,
        utterances_per_dialogue=args.utterances,
        vocab_size=args.vocab,
        slope_between=args.slope_between,
        slope_within=args.slope_within,
        base_between=args.base_between,
        noise_sigma=args.sigma,
        window=args.window,
        seed=args.seed,
    )
    out = run_synth(spec, args.out)
    print(f"wrote synthetic corpus to {out / 'corpus.jsonl'}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = RunConfig(
        corpus=args.corpus, format=args.format, window=args.window,
        pauses=args.pauses, out=args.out, seed=args.seed,
        co_mode=args.co_mode, pairs=args.pairs,
        attributions=args.attributions, generations=args.generations,
        scores=args.scores,
    )
    result = run_pipeline(config)
    print(f"bundle written to {result.out_dir}: "
          f"{result.n_dialogues} dialogues, {result.n_samples} samples, "
          f"{result.n_lexicon_entries} lexicon entries, {result.n_records} records")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which matches EXIT_CONFIG
        return int(exc.code or 0)
    try:
        if args.command == "ingest":
            return _cmd_ingest(args)
        if args.command == "sample":
            return _cmd_sample(args)
        if args.command == "mine":
            return _cmd_mine(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        if args.command == "attrib":
            return _cmd_attrib_aggregate(args)
        if args.command == "quality":
            return _cmd_quality_join(args)
        if args.command == "stats":
            return _cmd_stats(args)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "run":
            return _cmd_run(args)
        parser.error(f"unknown command {args.command!r}")
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (corpus_mod.CorpusFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AssertionError as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
