"""Automatic metrics: strict reciting accuracy, EM, token F1, relevance sheets.

Reciting accuracy is deliberately strict: a masked span only counts when the
model also reproduces the fixed context following the mask (up to a 10-token
window), so spans that recur verbatim elsewhere in the passage cannot be
credited by accident.
"""

from __future__ import annotations

import csv
import json
import random
import string
from collections import Counter
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

from .builders import ANSWER_MARKER
from .masking import MaskedPassage, token_texts

RECITE_WINDOW = 10

_ARTICLES = {"a", "an", "the"}
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


class ScoringError(ValueError):
    """Raised on malformed or mismatched prediction inputs."""


@dataclass(frozen=True)
class PredictionRecord:
    example_id: str
    output_text: str


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, drop English articles, collapse whitespace."""
    text = text.lower().translate(_PUNCT_TABLE)
    return " ".join(t for t in text.split() if t not in _ARTICLES)


def exact_match(output: str, gold_answers: Sequence[str]) -> bool:
    """True iff the normalized output equals any normalized gold answer."""
    if not gold_answers:
        raise ScoringError("empty gold answer list")
    norm = normalize_answer(output)
    return any(norm == normalize_answer(g) for g in gold_answers)


def token_f1(output: str, gold_answers: Sequence[str]) -> float:
    """Bag-of-tokens F1 over normalized tokens, maximized over gold answers."""
    if not gold_answers:
        raise ScoringError("empty gold answer list")
    out_tokens = normalize_answer(output).split()
    best = 0.0
    for gold in gold_answers:
        gold_tokens = normalize_answer(gold).split()
        if not out_tokens and not gold_tokens:
            return 1.0
        common = Counter(out_tokens) & Counter(gold_tokens)
        same = sum(common.values())
        if same == 0:
            continue
        precision = same / len(out_tokens)
        recall = same / len(gold_tokens)
        best = max(best, 2 * precision * recall / (precision + recall))
    return best


def extract_answer_candidate(output: str, answer_marker: str = ANSWER_MARKER) -> str:
    """For bridge-style outputs, the text after the last marker; else the whole output."""
    pos = output.rfind(answer_marker)
    if pos < 0:
        return output
    return output[pos + len(answer_marker) :].strip()


def score_reciting(
    prediction: PredictionRecord | str,
    probe: MaskedPassage,
    window: int = RECITE_WINDOW,
) -> list[bool]:
    """Strict per-span correctness of a reciting output.

    For each masked span in order, the required token sequence is the gold
    span followed by up to ``window`` tokens of the fixed segment after it.
    The sequence must appear contiguously in the output at or after a cursor
    that starts at 0 and, on a hit, advances to the end of the gold match;
    the context tokens stay available to the next span.
    """
    output = prediction.output_text if isinstance(prediction, PredictionRecord) else prediction
    out_tokens = token_texts(output)
    results: list[bool] = []
    cursor = 0
    for i, seg in enumerate(probe.masked_segments()):
        gold = token_texts(seg.text)
        check = token_texts(probe.fixed_tail_after(i))[:window]
        required = gold + check
        if not required:
            results.append(True)
            continue
        hit = _find_subsequence(out_tokens, required, cursor)
        if hit is None:
            results.append(False)
        else:
            results.append(True)
            cursor = hit + len(gold)
    return results


def _find_subsequence(haystack: list[str], needle: list[str], start: int) -> int | None:
    """Leftmost index >= start where needle occurs contiguously in haystack."""
    last = len(haystack) - len(needle)
    first = needle[0]
    for j in range(max(start, 0), last + 1):
        if haystack[j] == first and haystack[j : j + len(needle)] == needle:
            return j
    return None


@dataclass(frozen=True)
class RecitingScore:
    per_span: tuple[tuple[str, int, bool], ...]  # (passage_id, span_index, correct)
    accuracy: float

    @property
    def total_spans(self) -> int:
        return len(self.per_span)

    @property
    def correct_spans(self) -> int:
        return sum(1 for _, _, ok in self.per_span if ok)


def aggregate_reciting(per_probe: Mapping[str, Sequence[bool]]) -> RecitingScore:
    """Pool per-span booleans keyed by passage id into one accuracy."""
    if not per_probe:
        raise ScoringError("no scored probes")
    per_span = tuple(
        (passage_id, i, bool(ok))
        for passage_id in sorted(per_probe)
        for i, ok in enumerate(per_probe[passage_id])
    )
    total = len(per_span)
    correct = sum(1 for _, _, ok in per_span if ok)
    return RecitingScore(per_span=per_span, accuracy=correct / total if total else 0.0)


@dataclass(frozen=True)
class QAScore:
    em: float
    f1: float
    per_item: tuple[tuple[str, bool, float], ...]  # (qa_id, em, f1)


def score_qa(
    predictions: Mapping[str, str],
    golds: Mapping[str, Sequence[str]],
    answer_marker: str = ANSWER_MARKER,
) -> QAScore:
    """EM/F1 over predictions keyed by example id; bridge outputs are split first."""
    missing = sorted(set(golds) - set(predictions))
    if missing:
        raise ScoringError(f"missing predictions for ids: {missing[:10]}")
    per_item = []
    for qa_id in sorted(golds):
        candidate = extract_answer_candidate(predictions[qa_id], answer_marker)
        gold_list = list(golds[qa_id])
        per_item.append(
            (qa_id, exact_match(candidate, gold_list), token_f1(candidate, gold_list))
        )
    n = len(per_item)
    if n == 0:
        raise ScoringError("nothing to score")
    return QAScore(
        em=sum(1 for _, em, _ in per_item if em) / n,
        f1=sum(f1 for _, _, f1 in per_item) / n,
        per_item=tuple(per_item),
    )


def export_relevance_sheet(
    predictions_a: Mapping[str, str],
    predictions_b: Mapping[str, str],
    golds: Mapping[str, tuple[str, Sequence[str]]],  # qa_id -> (question, answers)
    sheet_fp: IO[str],
    key_fp: IO[str],
    seed: int = 0,
) -> int:
    """Write a blinded A/B annotation sheet plus the hidden assignment key.

    Column order is randomized per row; the key file records which source
    system sits in output_A for each qa id, so the A>B / A=B / A<B tally can
    be recovered after annotation.
    """
    ids_a, ids_b, ids_g = set(predictions_a), set(predictions_b), set(golds)
    if ids_a != ids_g or ids_b != ids_g:
        missing = sorted((ids_g - ids_a) | (ids_g - ids_b) | (ids_a - ids_g) | (ids_b - ids_g))
        raise ScoringError(f"prediction/gold id mismatch: {missing[:10]}")
    rng = random.Random(seed)
    writer = csv.writer(sheet_fp)
    writer.writerow(["qa_id", "question", "gold", "output_A", "output_B", "judgment"])
    key: dict[str, str] = {}
    for qa_id in sorted(golds):
        question, answers = golds[qa_id]
        gold = " | ".join(answers)
        if rng.random() < 0.5:
            col_a, col_b, key[qa_id] = predictions_a[qa_id], predictions_b[qa_id], "a"
        else:
            col_a, col_b, key[qa_id] = predictions_b[qa_id], predictions_a[qa_id], "b"
        writer.writerow([qa_id, question, gold, col_a, col_b, ""])
    json.dump({"output_A_source": key}, key_fp, sort_keys=True, indent=2)
    return len(golds)


# --- predictions JSONL -------------------------------------------------------


def read_predictions(fp: IO[str]) -> list[PredictionRecord]:
    records = []
    for lineno, line in enumerate(fp, start=1):
        if not line.strip():
            continue
        rec = json.loads(line)
        try:
            records.append(PredictionRecord(example_id=rec["example_id"], output_text=rec["output"]))
        except KeyError as e:
            raise ScoringError(f"prediction line {lineno}: missing key {e}") from e
    return records


def write_predictions(records: Iterable[PredictionRecord], fp: IO[str]) -> None:
    for rec in records:
        fp.write(
            json.dumps(
                {"example_id": rec.example_id, "output": rec.output_text},
                ensure_ascii=False,
                sort_keys=True,
            )
            + "\n"
        )
