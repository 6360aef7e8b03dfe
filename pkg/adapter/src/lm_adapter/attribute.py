"""Attribution export in the exchange format the analytics package loads."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Sequence

from .deeplift import attribution_matrix
from .generate import sample_context
from .modeling import token_strings
from .prompts import render_prompt

log = logging.getLogger(__name__)


def export_attributions(
    model,
    tokenizer,
    samples: Sequence[dict],
    model_name: str,
    model_type: str,
    out_path: str | Path,
) -> int:
    """Attribute each sample's human target utterance to the full prompt and
    write one exchange record per sample. Matrix dimensions and span coverage
    are validated before writing; per-sample failures are logged and skipped.
    """
    written = 0
    with Path(out_path).open("w", encoding="utf-8", newline="\n") as fh:
        for sample in samples:
            try:
                record = attribution_record(model, tokenizer, sample,
                                            model_name, model_type)
            except Exception as exc:  # per-sample isolation
                log.warning("sample %s skipped: %s", sample.get("sample_id"), exc)
                continue
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            written += 1
    return written


def attribution_record(model, tokenizer, sample: dict, model_name: str,
                       model_type: str) -> dict:
    context, target_speaker, target_text = sample_context(sample)
    layout = render_prompt(tokenizer, context, target_speaker,
                           target_text=target_text)
    target_len = len(layout.ids) - layout.target_start
    matrix = attribution_matrix(model, layout.ids, layout.target_start, target_len)
    rows, cols = matrix.shape
    if rows != len(layout.ids) or cols != target_len:
        raise ValueError(f"matrix shape {matrix.shape} does not match layout")
    if layout.spans[-1].kind != "target" or layout.spans[-1].end != len(layout.ids):
        raise ValueError("span map does not end with the target span")
    return {
        "sample_id": sample["sample_id"],
        "model": model_name,
        "model_type": model_type,
        "input_tokens": token_strings(tokenizer, layout.ids),
        "target_len": target_len,
        "elements": layout.as_exchange_elements(),
        "matrix": [[float(v) for v in row] for row in matrix.tolist()],
        "meta": {
            "attribution_method": "rescale-rule contribution (zero-embedding baseline)",
            "target_of_attribution": "logit",
        },
    }
