"""Test-train overlap analyses.

Three views of leakage: how many test answers already occur among training
answers, which training questions are candidate paraphrases of a sampled
test question (for human annotation), and how model outputs distribute over
the correct/incorrect x overlap/non-overlap contingency.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from .corpus import QAPair
from .scoring import ScoringError, normalize_answer


@dataclass(frozen=True)
class OverlapReport:
    answer_overlap: float
    contingency: dict[str, int]  # keys: correct_overlap, correct_non_overlap, ...
    o_test_overlap: float
    g_test_overlap: float


def answer_overlap(
    test_answers: Sequence[Sequence[str] | str],
    train_answers: Iterable[str],
) -> tuple[float, list[bool]]:
    """Fraction of test items whose gold answer already occurs in training answers.

    Each test item may carry several gold answers; it counts as overlapping
    when any of them matches a training answer after normalization.
    """
    train_set = {normalize_answer(a) for a in train_answers}
    if not train_set:
        raise ScoringError("empty training answer list")
    flags: list[bool] = []
    for item in test_answers:
        golds = [item] if isinstance(item, str) else list(item)
        if not golds:
            raise ScoringError("test item with no answers")
        flags.append(any(normalize_answer(g) in train_set for g in golds))
    if not flags:
        raise ScoringError("empty test answer list")
    return sum(flags) / len(flags), flags


def _is_token_subsequence(needle: list[str], haystack: list[str]) -> bool:
    """Contiguous token subsequence test."""
    if not needle:
        return False
    for j in range(len(haystack) - len(needle) + 1):
        if haystack[j : j + len(needle)] == needle:
            return True
    return False


def question_overlap_candidates(
    test_pairs: Sequence[QAPair],
    train_pairs: Sequence[QAPair],
    sheet_fp: IO[str],
    sample_n: int = 1000,
    seed: int = 0,
) -> int:
    """Mine annotation candidates for the question-overlap study.

    Samples ``sample_n`` test pairs, then lists every training question whose
    normalized answer is a contiguous token subsequence of the test answer.
    Rows go to a CSV sheet for the three-annotator judgment; test pairs with
    no candidate emit one row marked no-candidates. Returns the row count.
    """
    if sample_n > len(test_pairs):
        raise ScoringError(
            f"sample_n={sample_n} exceeds test pair count {len(test_pairs)}"
        )
    ordered = sorted(test_pairs, key=lambda q: q.id)
    rng = random.Random(seed)
    sampled = rng.sample(ordered, sample_n)

    train_index: list[tuple[list[str], QAPair, str]] = []
    for tp in sorted(train_pairs, key=lambda q: q.id):
        for ans in tp.answers:
            toks = normalize_answer(ans.text).split()
            if toks:
                train_index.append((toks, tp, ans.text))

    writer = csv.writer(sheet_fp)
    writer.writerow(["test_q", "test_a", "candidate_train_q", "candidate_train_a", "judgment"])
    rows = 0
    for qa in sampled:
        test_answer = qa.answers[0].text
        test_toks = normalize_answer(test_answer).split()
        found = False
        for train_toks, tp, train_answer in train_index:
            if _is_token_subsequence(train_toks, test_toks):
                writer.writerow([qa.question, test_answer, tp.question, train_answer, ""])
                rows += 1
                found = True
        if not found:
            writer.writerow([qa.question, test_answer, "<no-candidates>", "", ""])
            rows += 1
    return rows


def output_overlap_contingency(
    predictions: Sequence[str],
    gold_answers: Sequence[Sequence[str]],
    train_answers: Iterable[str],
    em_flags: Sequence[bool],
) -> OverlapReport:
    """Cross-tabulate output correctness against train-answer overlap.

    An output counts as overlapping when its normalized text occurs among the
    normalized training answers. Also reports the output-overlap and
    gold-overlap fractions side by side.
    """
    if not (len(predictions) == len(gold_answers) == len(em_flags)):
        raise ScoringError(
            f"length mismatch: {len(predictions)} predictions, "
            f"{len(gold_answers)} golds, {len(em_flags)} em flags"
        )
    if not predictions:
        raise ScoringError("nothing to analyze")
    train_set = {normalize_answer(a) for a in train_answers}

    counts = {
        "correct_overlap": 0,
        "correct_non_overlap": 0,
        "incorrect_overlap": 0,
        "incorrect_non_overlap": 0,
    }
    gold_hits = 0
    out_hits = 0
    for output, golds, em in zip(predictions, gold_answers, em_flags):
        out_overlap = normalize_answer(output) in train_set
        out_hits += out_overlap
        gold_hits += any(normalize_answer(g) in train_set for g in golds)
        row = "correct" if em else "incorrect"
        col = "overlap" if out_overlap else "non_overlap"
        counts[f"{row}_{col}"] += 1

    n = len(predictions)
    return OverlapReport(
        answer_overlap=gold_hits / n,
        contingency=counts,
        o_test_overlap=out_hits / n,
        g_test_overlap=gold_hits / n,
    )


def render_contingency(report: OverlapReport) -> str:
    """Markdown 2x2 with "percent (count)" cells."""
    n = sum(report.contingency.values())

    def cell(key: str) -> str:
        count = report.contingency[key]
        return f"{100.0 * count / n:.1f}% ({count})"

    lines = [
        "|  | Overlap | Non-Overlap |",
        "| --- | --- | --- |",
        f"| Correct | {cell('correct_overlap')} | {cell('correct_non_overlap')} |",
        f"| Incorrect | {cell('incorrect_overlap')} | {cell('incorrect_non_overlap')} |",
    ]
    return "\n".join(lines)
