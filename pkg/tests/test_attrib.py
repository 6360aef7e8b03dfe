from __future__ import annotations

import json
import random

import numpy as np
import pytest

from dialrep.attrib import (
    AttributionRecord,
    ElementSpan,
    aggregate,
    element_table,
    load_attributions,
    validate_record,
    write_attribution_jsonl,
)
from dialrep.metrics import RepetitionRecord


def make_record(matrix, spans, sample_id="s0", model="m", model_type="base",
                target_len=None):
    matrix = np.asarray(matrix, dtype=np.float64)
    n_in = matrix.shape[0]
    if target_len is None:
        target_len = matrix.shape[1]
    return AttributionRecord(
        sample_id=sample_id, model=model, model_type=model_type,
        input_tokens=[f"t{i}" for i in range(n_in)],
        target_len=target_len,
        matrix=matrix,
        elements=tuple(spans),
    )


def standard_sample_record(rng, n_ctx=9, ctx_len=2, target_len=3, model_type="base",
                           sample_id="s0"):
    """A full-shape record: speaker label + utterance per context turn, then a
    target label and the target span, with a valid causal mask."""
    spans = []
    pos = 0
    for u in range(1, n_ctx + 1):
        spans.append(ElementSpan("speaker_label", u, pos, pos + 1))
        pos += 1
        spans.append(ElementSpan("utterance", u, pos, pos + ctx_len))
        pos += ctx_len
    spans.append(ElementSpan("target_label", None, pos, pos + 1))
    pos += 1
    target_start = pos
    spans.append(ElementSpan("target", None, pos, pos + target_len))
    pos += target_len
    matrix = rng.standard_normal((pos, target_len))
    for j in range(target_len):
        matrix[target_start + j :, j] = 0.0
    return make_record(matrix, spans, sample_id=sample_id, model_type=model_type)


class TestValidation:
    def test_well_formed(self):
        rng = np.random.default_rng(0)
        rec = standard_sample_record(rng)
        errors, warnings = validate_record(rec)
        assert errors == [] and warnings == []

    def test_dimension_mismatch_rejected(self, tmp_path):
        rec = make_record([[1.0, 2.0]], [ElementSpan("target", None, 0, 1)],
                          sample_id="bad-dims")
        rec.input_tokens = ["a", "b", "c"]
        errors, _ = validate_record(rec)
        assert any("rows" in e for e in errors)
        path = tmp_path / "a.jsonl"
        obj = {
            "sample_id": "bad-dims", "model": "m", "model_type": "base",
            "input_tokens": ["a", "b", "c"], "target_len": 2,
            "elements": [{"kind": "target", "u": None, "start": 0, "end": 3}],
            "matrix": [[1.0, 2.0]],
        }
        path.write_text(json.dumps(obj) + "\n", encoding="utf-8")
        records, issues = load_attributions(path)
        assert records == []
        assert any(i.level == "error" and i.sample_id == "bad-dims" for i in issues)

    def test_overlapping_spans_rejected(self):
        rec = make_record(
            np.zeros((4, 2)),
            [ElementSpan("utterance", 1, 0, 3), ElementSpan("target", None, 2, 4)],
        )
        errors, _ = validate_record(rec)
        assert any("ordered and gap-free" in e for e in errors)

    def test_uncovered_tokens_rejected(self):
        rec = make_record(
            np.zeros((5, 2)),
            [ElementSpan("utterance", 1, 0, 2), ElementSpan("target", None, 2, 4)],
        )
        errors, _ = validate_record(rec)
        assert any("5 input tokens" in e for e in errors)

    def test_twenty_one_spans_single_target(self):
        rng = np.random.default_rng(1)
        rec = standard_sample_record(rng, n_ctx=9, ctx_len=2, target_len=3)
        # 9 speaker labels + 9 utterances + 1 target label -> add one more
        # leading speaker_label to reach 21 spans total
        spans = [ElementSpan("speaker_label", None, 0, 1)] + [
            ElementSpan(s.kind, s.utterance_index, s.start + 1, s.end + 1)
            for s in rec.elements
        ]
        matrix = np.vstack([np.zeros((1, rec.target_len)), rec.matrix])
        rec2 = make_record(matrix, spans, target_len=rec.target_len)
        assert len(rec2.elements) == 21
        errors, warnings = validate_record(rec2)
        assert errors == [] and warnings == []
        assert sum(1 for s in rec2.elements if s.kind == "target") == 1

    def test_multiple_targets_rejected(self):
        rec = make_record(
            np.zeros((4, 2)),
            [ElementSpan("target", None, 0, 2), ElementSpan("target", None, 2, 4)],
        )
        errors, _ = validate_record(rec)
        assert any("exactly one target" in e for e in errors)

    def test_target_not_last_rejected(self):
        rec = make_record(
            np.zeros((4, 2)),
            [ElementSpan("target", None, 0, 2), ElementSpan("utterance", 1, 2, 4)],
        )
        errors, _ = validate_record(rec)
        assert any("last element" in e for e in errors)

    def test_causal_mask_violation_warns(self):
        matrix = np.ones((3, 2))  # target rows should be zero above diagonal
        rec = make_record(
            matrix,
            [ElementSpan("utterance", 1, 0, 1), ElementSpan("target", None, 1, 3)],
        )
        errors, warnings = validate_record(rec)
        assert errors == []
        assert any("causal mask" in w for w in warnings)

    def test_nonfinite_rejected(self):
        matrix = np.zeros((2, 1))
        matrix[0, 0] = np.inf
        rec = make_record(matrix, [ElementSpan("utterance", 1, 0, 1),
                                   ElementSpan("target", None, 1, 2)])
        errors, _ = validate_record(rec)
        assert any("non-finite" in e for e in errors)

    def test_bad_record_rejected_others_kept(self, tmp_path):
        rng = np.random.default_rng(2)
        good = standard_sample_record(rng, sample_id="good")
        path = tmp_path / "mixed.jsonl"
        write_attribution_jsonl([good], path)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps({"sample_id": "broken", "model": "m"}) + "\n")
        records, issues = load_attributions(path)
        assert [r.sample_id for r in records] == ["good"]
        assert any(i.sample_id == "broken" for i in issues)


class TestAggregate:
    def test_hand_sum(self):
        rec = make_record([[1.0, 2.0], [3.0, 4.0]],
                          [ElementSpan("utterance", 1, 0, 1),
                           ElementSpan("target", None, 1, 2)])
        agg = aggregate(rec)
        assert agg.phi_raw.tolist() == [3.0, 7.0]

    def test_hand_normalize_center(self):
        # phi_raw [2, -1, 1] -> normalized [1, -0.5, 0.5] -> centered
        rec = make_record(
            [[2.0], [-1.0], [1.0]],
            [ElementSpan("utterance", 1, 0, 1), ElementSpan("utterance", 2, 1, 2),
             ElementSpan("target", None, 2, 3)],
            target_len=1,
        )
        agg = aggregate(rec)
        assert agg.phi_raw.tolist() == [2.0, -1.0, 1.0]
        assert agg.phi == pytest.approx([2 / 3, -5 / 6, 1 / 6], abs=1e-12)

    def test_constant_raw_centers_to_zero(self):
        rec = make_record(
            [[5.0], [5.0], [5.0]],
            [ElementSpan("utterance", 1, 0, 1), ElementSpan("utterance", 2, 1, 2),
             ElementSpan("target", None, 2, 3)],
        )
        assert aggregate(rec).phi == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)

    def test_all_zero_matrix(self):
        rec = make_record(
            np.zeros((3, 2)),
            [ElementSpan("utterance", 1, 0, 1), ElementSpan("target", None, 1, 3)],
        )
        agg = aggregate(rec)
        assert agg.phi.tolist() == [0.0, 0.0]

    def _random_records(self, n, seed=0):
        rng = np.random.default_rng(seed)
        py_rng = random.Random(seed)
        records = []
        for i in range(n):
            n_elem = py_rng.randint(3, 21)
            span_lens = [py_rng.randint(1, 3) for _ in range(n_elem)]
            total = sum(span_lens)
            target_len = span_lens[-1]
            spans = []
            pos = 0
            for k, ln in enumerate(span_lens):
                kind = "target" if k == n_elem - 1 else \
                    py_rng.choice(["speaker_label", "utterance", "target_label"])
                u = py_rng.randint(1, 9) if kind in ("speaker_label", "utterance") else None
                spans.append(ElementSpan(kind, u, pos, pos + ln))
                pos += ln
            matrix = rng.standard_normal((total, target_len))
            target_start = total - target_len
            for j in range(target_len):
                matrix[target_start + j :, j] = 0.0
            records.append(make_record(matrix, spans, sample_id=f"s{i}"))
        return records

    def test_invariants_on_random_records(self):
        for rec in self._random_records(200, seed=3):
            agg = aggregate(rec)
            assert abs(agg.phi.mean()) <= 1e-9
            if np.any(agg.phi_raw != 0.0):
                peak = np.abs(agg.phi_raw / np.abs(agg.phi_raw).max()).max()
                assert peak == pytest.approx(1.0, abs=1e-9)
            assert np.all(agg.phi >= -2.0) and np.all(agg.phi <= 2.0)

    def test_positive_scale_invariance(self):
        for rec in self._random_records(50, seed=4):
            base = aggregate(rec).phi
            scaled = aggregate(make_record(rec.matrix * 17.5, rec.elements,
                                           target_len=rec.target_len))
            assert scaled.phi == pytest.approx(base, abs=1e-9)

    def test_negative_scale_negates(self):
        for rec in self._random_records(20, seed=5):
            base = aggregate(rec).phi
            flipped = aggregate(make_record(-rec.matrix, rec.elements,
                                            target_len=rec.target_len))
            assert flipped.phi == pytest.approx(-base, abs=1e-9)

    def test_permutation_equivariance(self):
        # permuting element order permutes phi identically; permute the
        # non-target elements (target must stay last)
        rng = np.random.default_rng(6)
        rec = standard_sample_record(rng, n_ctx=4, ctx_len=2, target_len=2)
        agg = aggregate(rec)
        k = len(rec.elements) - 1
        perm = list(range(k))
        random.Random(0).shuffle(perm)
        # rebuild a record whose element blocks are permuted
        blocks = []
        for idx in perm:
            span = rec.elements[idx]
            blocks.append((span, rec.matrix[span.start : span.end]))
        blocks.append((rec.elements[-1],
                       rec.matrix[rec.elements[-1].start : rec.elements[-1].end]))
        spans2 = []
        rows = []
        pos = 0
        for span, chunk in blocks:
            spans2.append(ElementSpan(span.kind, span.utterance_index, pos,
                                      pos + (span.end - span.start)))
            rows.append(chunk)
            pos += span.end - span.start
        rec2 = AttributionRecord(
            sample_id=rec.sample_id, model=rec.model, model_type=rec.model_type,
            input_tokens=rec.input_tokens, target_len=rec.target_len,
            matrix=np.vstack(rows), elements=tuple(spans2),
        )
        agg2 = aggregate(rec2)
        expected = [agg.phi[idx] for idx in perm] + [agg.phi[-1]]
        assert agg2.phi == pytest.approx(expected, abs=1e-12)

    def test_phi_raw_linearity(self):
        rng = np.random.default_rng(7)
        rec = standard_sample_record(rng, n_ctx=3, ctx_len=2, target_len=2)
        other = rng.standard_normal(rec.matrix.shape)
        a = aggregate(rec).phi_raw
        b = aggregate(make_record(other, rec.elements, target_len=rec.target_len)).phi_raw
        ab = aggregate(make_record(rec.matrix + other, rec.elements,
                                   target_len=rec.target_len)).phi_raw
        assert ab == pytest.approx(a + b, abs=1e-9)


class TestElementTable:
    def test_distances_once_each(self):
        rng = np.random.default_rng(8)
        rec = standard_sample_record(rng, n_ctx=9)
        rows = element_table([aggregate(rec)])
        utt_rows = [r for r in rows if r["kind"] == "utterance"]
        assert sorted(r["distance"] for r in utt_rows) == list(range(1, 10))
        for r in utt_rows:
            assert r["speaker_relation"] == ("within" if r["distance"] % 2 == 0 else "between")

    def test_join_attaches_measures(self):
        rng = np.random.default_rng(9)
        rec = standard_sample_record(rng, n_ctx=9, sample_id="s0")
        reps = [
            RepetitionRecord(
                sample_id="s0", prev_index=u, cur_index=10, distance=10 - u,
                speaker_relation="between" if (10 - u) % 2 else "within",
                vo=0.1 * u, co=0.01 * u, shared_constructions=[],
                pmi_avg=float(u) if u % 2 else None,
            )
            for u in range(1, 9)  # deliberately missing u = 9
        ]
        rows = element_table([aggregate(rec)], reps)
        by_u = {r["utterance_index"]: r for r in rows if r["kind"] == "utterance"}
        assert by_u[3]["co"] == pytest.approx(0.03)
        assert by_u[3]["vo"] == pytest.approx(0.3)
        # join miss keeps the row with absent fields
        assert by_u[9]["co"] is None and by_u[9]["vo"] is None

    def test_target_and_label_kinds_present(self):
        rng = np.random.default_rng(10)
        rec = standard_sample_record(rng)
        kinds = {r["kind"] for r in element_table([aggregate(rec)])}
        assert kinds == {"speaker_label", "utterance", "target_label", "target"}
