"""End-to-end pipeline: ingest -> normalize -> sample -> mine -> filter ->
metrics -> regressions, with optional attribution and quality joins.

The output bundle is fully deterministic for a fixed config and seed: no
timestamps, sorted iteration everywhere, repr-based float formatting.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import attrib as attrib_mod
from . import corpus as corpus_mod
from . import metrics as metrics_mod
from . import miner as miner_mod
from . import quality as quality_mod
from . import stats as stats_mod
from .synth import SyntheticSpec, generate_synthetic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str, exit_code: int = EXIT_DATA):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.exit_code = exit_code


@dataclass
class RunConfig:
    corpus: str
    format: str = "generic-jsonl"
    window: int = 10
    pauses: str | None = None
    out: str = "out"
    seed: int = 0
    co_mode: str = "types"
    pairs: str = "target"
    attributions: str | None = None
    generations: str | None = None
    scores: str | None = None

    def validate(self) -> None:
        if self.window < 2:
            raise StageError("config", f"window must be >= 2, got {self.window}",
                             EXIT_CONFIG)
        if self.co_mode not in ("types", "tokens"):
            raise StageError("config", f"co-mode must be types|tokens, got {self.co_mode!r}",
                             EXIT_CONFIG)
        if self.pairs not in ("target", "all"):
            raise StageError("config", f"pairs must be target|all, got {self.pairs!r}",
                             EXIT_CONFIG)
        if self.format not in corpus_mod.FORMATS:
            raise StageError("config", f"unknown format {self.format!r}", EXIT_CONFIG)


@dataclass
class PipelineResult:
    out_dir: Path
    n_dialogues: int
    n_samples: int
    n_lexicon_entries: int
    n_records: int
    files: list[str] = field(default_factory=list)


def _load_and_normalize(config: RunConfig) -> corpus_mod.Corpus:
    pause_list = None
    if config.pauses:
        pause_list = corpus_mod.load_pause_list(config.pauses)
    try:
        raw = corpus_mod.load_corpus(config.corpus, format=config.format,
                                     pause_list=pause_list)
    except corpus_mod.CorpusFormatError as exc:
        raise StageError("ingest", str(exc)) from exc
    normalized = [corpus_mod.normalize_turns(d) for d in raw.dialogues]
    return corpus_mod.Corpus(name=raw.name, dialogues=normalized,
                             filled_pause_list=raw.filled_pause_list)


def _write_samples(samples: Sequence[corpus_mod.ContextSample], out: Path) -> None:
    with (out / "samples.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "dialogue_id", "start_index", "target_speaker",
                         "target_word_count"])
        for s in samples:
            writer.writerow([
                s.sample_id, s.dialogue_id, s.utterances[0].index,
                s.target_speaker, s.target.word_count,
            ])
    with (out / "samples.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            obj = {
                "sample_id": s.sample_id,
                "dialogue_id": s.dialogue_id,
                "target_speaker": s.target_speaker,
                "utterances": [
                    {"index": u.index, "speaker": u.speaker, "text": u.text}
                    for u in s.utterances
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def _mean_by_distance(records, measure: str) -> dict[str, dict[str, list[float]]]:
    groups: dict[str, dict[int, list[float]]] = {"between": {}, "within": {}}
    for r in records:
        groups[r.speaker_relation].setdefault(r.distance, []).append(getattr(r, measure))
    series = {}
    for relation, by_d in groups.items():
        xs = sorted(by_d)
        series[relation] = {
            "x": [float(d) for d in xs],
            "y": [sum(by_d[d]) / len(by_d[d]) for d in xs],
        }
    return series


def run_pipeline(config: RunConfig) -> PipelineResult:
    config.validate()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)

    corpus = _load_and_normalize(config)

    try:
        samples = []
        for d in corpus.dialogues:
            samples.extend(corpus_mod.extract_samples(d, window=config.window))
    except ValueError as exc:
        raise StageError("sample", str(exc), EXIT_CONFIG) from exc

    lexica: dict[str, miner_mod.ConstructionLexicon] = {}
    for d in corpus.dialogues:
        mined = miner_mod.mine_shared_constructions(d)
        lexica[d.dialogue_id] = miner_mod.filter_constructions(
            mined, corpus.filled_pause_list
        )

    all_sequences = set()
    for lex in lexica.values():
        all_sequences.update(lex.entries)
    counts = metrics_mod.CorpusCounts.build(corpus, all_sequences)

    records: list[metrics_mod.RepetitionRecord] = []
    for s in samples:
        records.extend(
            metrics_mod.pair_records(
                s, lexica[s.dialogue_id], counts,
                producer="human", model_type="n/a",
                pairs=config.pairs, co_mode=config.co_mode,
            )
        )

    _write_samples(samples, out)
    miner_mod.write_lexicon_jsonl(
        (lexica[k] for k in sorted(lexica)), out / "lexicon.jsonl"
    )
    metrics_mod.write_records_csv(records, out / "records.csv")
    metrics_mod.write_records_jsonl(records, out / "records.jsonl")

    plots = {
        "co_by_distance": _mean_by_distance(records, "co"),
        "vo_by_distance": _mean_by_distance(records, "vo"),
    }

    decay_text = []
    for measure in ("co", "vo"):
        try:
            result = stats_mod.decay_slope(records, measure=measure)
        except ValueError as exc:
            decay_text.append(f"{measure}: decay regression skipped ({exc})\n")
            continue
        decay_text.append(
            stats_mod.regression_table(result, title=f"{measure} ~ S + dist:S")
        )
        stats_mod.write_regression_csv(result, out / f"decay_{measure}.csv")
    (out / "decay.txt").write_text("\n".join(decay_text), encoding="utf-8")

    issues: list[str] = []
    if config.attributions:
        attributions, load_issues = attrib_mod.load_attributions(config.attributions)
        issues.extend(f"{i.level}: line {i.line}: {i.message}" for i in load_issues)
        aggregations = [attrib_mod.aggregate(r) for r in attributions]
        target_records = [r for r in records if r.cur_index == config.window]
        rows = attrib_mod.element_table(aggregations, target_records)
        attrib_mod.write_element_table_csv(rows, out / "elements.csv")
        utt_rows = [r for r in rows if r["kind"] == "utterance"]
        by_d: dict[float, list[float]] = {}
        for row in utt_rows:
            by_d.setdefault(float(row["distance"]), []).append(row["phi"])
        xs = sorted(by_d)
        plots["attribution_by_distance"] = {
            "x": xs, "y": [sum(by_d[d]) / len(by_d[d]) for d in xs],
        }

    if config.generations:
        generations = quality_mod.load_generations(config.generations)
        if config.scores:
            table = quality_mod.ingest_external_scores(config.scores)
        else:
            table = quality_mod.ScoreTable()
        rows, join_warnings = quality_mod.join_scores(generations, table)
        issues.extend(f"warning: {w}" for w in join_warnings)
        with (out / "quality.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")

    with (out / "plots.json").open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(plots, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")

    n_entries = sum(len(lex.entries) for lex in lexica.values())
    manifest = {
        "note": stats_mod.OLS_CAVEAT,
        "config": {
            "corpus": str(config.corpus), "format": config.format,
            "window": config.window, "pauses": config.pauses,
            "seed": config.seed, "co_mode": config.co_mode, "pairs": config.pairs,
        },
        "counts": {
            "dialogues": len(corpus.dialogues),
            "samples": len(samples),
            "lexicon_entries": n_entries,
            "records": len(records),
        },
        "issues": issues,
    }
    with (out / "manifest.json").open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")

    files = sorted(p.name for p in out.iterdir() if p.is_file())
    return PipelineResult(
        out_dir=out,
        n_dialogues=len(corpus.dialogues),
        n_samples=len(samples),
        n_lexicon_entries=n_entries,
        n_records=len(records),
        files=files,
    )


def run_synth(spec: SyntheticSpec, out: str | Path) -> Path:
    """Generate a synthetic corpus and write corpus.jsonl + truth.json."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        corpus, truth = generate_synthetic(spec)
    except ValueError as exc:
        raise StageError("synth", str(exc), EXIT_CONFIG) from exc
    corpus_mod.write_corpus_jsonl(corpus, out / "corpus.jsonl")
    with (out / "truth.json").open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(truth, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    return out
