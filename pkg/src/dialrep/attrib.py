"""Aggregation of per-token attribution matrices into per-element relative
boosting scores.

Input records carry an input-tokens x target-tokens matrix (already summed
over the embedding dimension) plus a segmentation of the input into elements
(speaker labels, context utterances, the target's label, the target itself).
Aggregation sums each element's rows over all target columns, normalizes by
the maximum absolute value and centers on the mean.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .metrics import RepetitionRecord

SPAN_KINDS = ("speaker_label", "utterance", "target_label", "target")


@dataclass(frozen=True)
class ElementSpan:
    kind: str
    utterance_index: int | None
    start: int
    end: int


@dataclass
class AttributionRecord:
    sample_id: str
    model: str
    model_type: str  # "base" | "tuned"
    input_tokens: list[str]
    target_len: int
    matrix: np.ndarray  # shape (len(input_tokens), target_len)
    elements: tuple[ElementSpan, ...]


@dataclass
class AggregatedAttribution:
    sample_id: str
    model: str
    model_type: str
    elements: tuple[ElementSpan, ...]
    phi_raw: np.ndarray
    phi: np.ndarray


@dataclass
class LoadIssue:
    level: str  # "error" | "warning"
    line: int
    sample_id: str | None
    message: str


def validate_record(record: AttributionRecord) -> tuple[list[str], list[str]]:
    """Check all record invariants; returns (errors, warnings). Errors make
    the record unusable (dimension or span-coverage violations); a nonzero
    value inside the causal-mask region is downgraded to a warning."""
    errors: list[str] = []
    warnings: list[str] = []
    n_in = len(record.input_tokens)

    if record.model_type not in ("base", "tuned"):
        errors.append(f"model_type must be 'base' or 'tuned', got {record.model_type!r}")
    if record.matrix.ndim != 2:
        errors.append(f"matrix must be 2-dimensional, got shape {record.matrix.shape}")
        return errors, warnings
    rows, cols = record.matrix.shape
    if rows != n_in:
        errors.append(f"matrix has {rows} rows but {n_in} input tokens")
    if cols != record.target_len:
        errors.append(f"matrix has {cols} columns but target_len={record.target_len}")
    if not np.isfinite(record.matrix).all():
        errors.append("matrix contains non-finite values")

    pos = 0
    target_spans = []
    for i, span in enumerate(record.elements):
        if span.kind not in SPAN_KINDS:
            errors.append(f"element {i}: unknown kind {span.kind!r}")
        if span.start != pos:
            errors.append(
                f"element {i}: spans must be ordered and gap-free "
                f"(expected start {pos}, got {span.start})"
            )
        if span.end <= span.start:
            errors.append(f"element {i}: empty or inverted span [{span.start}, {span.end})")
        pos = span.end
        if span.kind == "target":
            target_spans.append(i)
    if pos != n_in:
        errors.append(f"spans cover [0, {pos}) but there are {n_in} input tokens")
    if len(target_spans) != 1:
        errors.append(f"expected exactly one target span, found {len(target_spans)}")
    elif target_spans[0] != len(record.elements) - 1:
        errors.append("target span must be the last element")

    if not errors:
        target = record.elements[-1]
        if target.end - target.start != record.target_len:
            errors.append(
                f"target span length {target.end - target.start} != target_len {record.target_len}"
            )
        else:
            for j in range(record.target_len):
                bad = np.nonzero(record.matrix[target.start + j :, j])[0]
                if bad.size:
                    warnings.append(
                        f"causal mask violated: matrix[{target.start + j + int(bad[0])}][{j}] != 0"
                    )
                    break
    return errors, warnings


def _parse_record(obj: dict) -> AttributionRecord:
    elements = tuple(
        ElementSpan(
            kind=e["kind"],
            utterance_index=e.get("u"),
            start=int(e["start"]),
            end=int(e["end"]),
        )
        for e in obj["elements"]
    )
    return AttributionRecord(
        sample_id=obj["sample_id"],
        model=obj["model"],
        model_type=obj["model_type"],
        input_tokens=list(obj["input_tokens"]),
        target_len=int(obj["target_len"]),
        matrix=np.asarray(obj["matrix"], dtype=np.float64),
        elements=elements,
    )


def load_attributions(path: str | Path) -> tuple[list[AttributionRecord], list[LoadIssue]]:
    """Read attribution exchange JSONL. Invalid records are dropped and
    reported per record (with the sample_id when parseable); valid records
    are returned in file order."""
    records: list[AttributionRecord] = []
    issues: list[LoadIssue] = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            sample_id = None
            try:
                obj = json.loads(line)
                sample_id = obj.get("sample_id")
                record = _parse_record(obj)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                issues.append(LoadIssue("error", lineno, sample_id, f"unparseable record: {exc}"))
                continue
            errors, warnings = validate_record(record)
            for msg in warnings:
                issues.append(LoadIssue("warning", lineno, record.sample_id, msg))
            if errors:
                for msg in errors:
                    issues.append(LoadIssue("error", lineno, record.sample_id, msg))
                continue
            records.append(record)
    return records, issues


def aggregate(record: AttributionRecord) -> AggregatedAttribution:
    """Collapse the matrix to one score per element: sum the element's rows
    over all target columns, normalize by max absolute value (all-zero input
    stays all-zero), then center on the mean."""
    totals = record.matrix.sum(axis=1)
    phi_raw = np.array(
        [totals[span.start : span.end].sum() for span in record.elements],
        dtype=np.float64,
    )
    peak = np.abs(phi_raw).max() if phi_raw.size else 0.0
    normalized = phi_raw / peak if peak > 0 else np.zeros_like(phi_raw)
    phi = normalized - normalized.mean()
    return AggregatedAttribution(
        sample_id=record.sample_id,
        model=record.model,
        model_type=record.model_type,
        elements=record.elements,
        phi_raw=phi_raw,
        phi=phi,
    )


def element_table(
    aggregations: Iterable[AggregatedAttribution],
    repetition_records: Sequence[RepetitionRecord] | None = None,
) -> list[dict]:
    """Flatten aggregations to one row per (sample, element) with the
    element's distance from the target and its speaker relation (derived from
    position parity: normalized dialogues strictly alternate speakers).

    When target-mode repetition records are supplied, co/vo/pmi_avg of the
    matching (sample, context-utterance) pair are attached; misses leave the
    fields absent (None).
    """
    joined: dict[tuple[str, int], RepetitionRecord] = {}
    if repetition_records is not None:
        for r in repetition_records:
            joined[(r.sample_id, r.prev_index)] = r

    rows = []
    for agg in aggregations:
        utt_spans = [s for s in agg.elements if s.kind == "utterance"]
        target_position = len(utt_spans) + 1
        for span, phi_raw, phi in zip(agg.elements, agg.phi_raw, agg.phi):
            u = span.utterance_index
            if span.kind in ("utterance", "speaker_label") and u is not None:
                distance = target_position - u
                relation = "within" if distance % 2 == 0 else "between"
            else:
                distance = None
                relation = None
            row = {
                "sample_id": agg.sample_id,
                "model": agg.model,
                "model_type": agg.model_type,
                "kind": span.kind,
                "utterance_index": u,
                "distance": distance,
                "speaker_relation": relation,
                "phi": float(phi),
                "phi_raw": float(phi_raw),
                "co": None,
                "vo": None,
                "pmi_avg": None,
            }
            if span.kind == "utterance" and u is not None:
                rec = joined.get((agg.sample_id, u))
                if rec is not None:
                    row["co"] = rec.co
                    row["vo"] = rec.vo
                    row["pmi_avg"] = rec.pmi_avg
            rows.append(row)
    rows.sort(key=lambda r: (r["sample_id"], r["model"], r["model_type"],
                             r["utterance_index"] is None, r["utterance_index"] or 0,
                             r["kind"]))
    return rows


ELEMENT_CSV_COLUMNS = (
    "sample_id", "model", "model_type", "kind", "utterance_index",
    "distance", "speaker_relation", "phi", "phi_raw", "co", "vo", "pmi_avg",
)


def write_element_table_csv(rows: Iterable[dict], path: str | Path) -> None:
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        return v

    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ELEMENT_CSV_COLUMNS)
        for row in rows:
            writer.writerow([cell(row[c]) for c in ELEMENT_CSV_COLUMNS])


def write_attribution_jsonl(records: Iterable[AttributionRecord], path: str | Path) -> None:
    """Write records in the exchange schema (used by fixtures and tests)."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            obj = {
                "sample_id": r.sample_id,
                "model": r.model,
                "model_type": r.model_type,
                "input_tokens": r.input_tokens,
                "target_len": r.target_len,
                "elements": [
                    {"kind": s.kind, "u": s.utterance_index, "start": s.start, "end": s.end}
                    for s in r.elements
                ],
                "matrix": [[float(v) for v in row] for row in r.matrix],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
