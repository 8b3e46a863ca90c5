"""Assemble JSONL training/evaluation files for each regime.

Four regimes share one record shape (TrainExample): denoising LM-finetune,
the reciting probe, plain QA-finetune, and QA-bridge-tune whose target is
the source passage concatenated with the answer behind a marker token.
The JSONL emitted here is the sole contract with any model runner.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from typing import IO, Iterable

from .corpus import Corpus, expand_multi_answers
from .masking import (
    DEFAULT_MASK_TOKEN,
    MaskedPassage,
    MaskingError,
    answer_span_mask,
    random_infill_mask,
    tokenize,
)
from .seeds import derive_seed

logger = logging.getLogger(__name__)

TASKS = ("lm_finetune", "recite", "qa_finetune", "qa_bridge")

ANSWER_MARKER = "<ANSWER>"
PASSAGE_PREFIX = "<PASSAGE>"
PASSAGE_SUFFIX = "</PASSAGE>"
QUESTION_PREFIX = "<QUESTION>"
QUESTION_SUFFIX = "</QUESTION>"
ANSWER_SUFFIX = "</ANSWER>"


class BuilderError(ValueError):
    """Raised when a dataset cannot be assembled from the given corpus."""


@dataclass(frozen=True)
class TrainExample:
    id: str
    task: str
    input_text: str
    target_text: str
    passage_id: str | None = None
    decorated: bool = False

    def __post_init__(self):
        if self.task not in TASKS:
            raise BuilderError(f"unknown task {self.task!r}")


def build_lm_finetune(
    corpus: Corpus,
    rate: float = 0.30,
    mean_span_len: float = 3.0,
    seed: int = 0,
    epochs_variants: int = 1,
    mask_token: str = DEFAULT_MASK_TOKEN,
) -> list[TrainExample]:
    """One randomly infill-masked variant of every passage per epoch variant."""
    if not corpus.passages:
        raise BuilderError("empty corpus")
    examples: list[TrainExample] = []
    for passage in corpus.passages:
        for v in range(epochs_variants):
            mp = random_infill_mask(
                passage,
                rate=rate,
                mean_span_len=mean_span_len,
                seed=derive_seed(seed, "mask", passage.id, str(v)),
                mask_token=mask_token,
            )
            examples.append(
                TrainExample(
                    id=f"{passage.id}::lm{v}",
                    task="lm_finetune",
                    input_text=mp.masked_text(),
                    target_text=passage.text,
                    passage_id=passage.id,
                )
            )
    return examples


@dataclass(frozen=True)
class ReciteBuild:
    examples: tuple[TrainExample, ...]
    probes: tuple[MaskedPassage, ...]  # aligned with examples, needed for scoring
    skipped: int  # passages with no usable answer span


def build_recite_eval(corpus: Corpus, mask_token: str = DEFAULT_MASK_TOKEN) -> ReciteBuild:
    """One reciting probe per passage: every answer span masked, target is the passage."""
    grouped = corpus.qa_by_passage()
    examples: list[TrainExample] = []
    probes: list[MaskedPassage] = []
    skipped = 0
    for passage in corpus.passages:
        try:
            mp = answer_span_mask(passage, grouped.get(passage.id, []), mask_token=mask_token)
        except MaskingError:
            skipped += 1
            continue
        examples.append(
            TrainExample(
                id=f"{passage.id}::recite",
                task="recite",
                input_text=mp.masked_text(),
                target_text=passage.text,
                passage_id=passage.id,
            )
        )
        probes.append(mp)
    if skipped:
        logger.warning("build_recite_eval: skipped %d passages without answer spans", skipped)
    return ReciteBuild(examples=tuple(examples), probes=tuple(probes), skipped=skipped)


def build_qa_finetune(corpus: Corpus, expand: bool = True) -> list[TrainExample]:
    """Question-in, answer-out pairs; multi-answer questions expanded for training."""
    pairs = expand_multi_answers(corpus.qa_pairs) if expand else list(corpus.qa_pairs)
    return [
        TrainExample(
            id=qa.id,
            task="qa_finetune",
            input_text=qa.question,
            target_text=qa.answers[0].text,
            passage_id=qa.passage_id,
        )
        for qa in pairs
    ]


def escape_marker(text: str, marker: str = ANSWER_MARKER) -> str:
    """Hide natural marker occurrences so the bridge target stays parseable."""
    return text.replace(marker, marker[:-1] + "\\" + marker[-1])


def unescape_marker(text: str, marker: str = ANSWER_MARKER) -> str:
    return text.replace(marker[:-1] + "\\" + marker[-1], marker)


def build_qa_bridge(
    corpus: Corpus,
    answer_marker: str = ANSWER_MARKER,
    max_target_tokens: int | None = None,
    expand: bool = True,
) -> list[TrainExample]:
    """Bridge targets: the related passage, the answer marker, then the answer.

    When max_target_tokens is set, the passage portion is truncated from the
    left; the marker and answer are never dropped.
    """
    index = corpus.passages_index()
    pairs = expand_multi_answers(corpus.qa_pairs) if expand else list(corpus.qa_pairs)
    examples: list[TrainExample] = []
    for qa in pairs:
        passage = index.get(qa.passage_id)
        if passage is None:
            raise BuilderError(f"qa {qa.id!r}: passage {qa.passage_id!r} not in corpus")
        passage_text = escape_marker(passage.text, answer_marker)
        answer = qa.answers[0].text
        if max_target_tokens is not None:
            budget = max_target_tokens - len(tokenize(answer)) - 1  # marker counts as 1
            toks = tokenize(passage_text)
            if budget < 0:
                budget = 0
            if len(toks) > budget:
                passage_text = passage_text[toks[len(toks) - budget].char_start :] if budget else ""
        target = f"{passage_text} {answer_marker} {answer}" if passage_text else f"{answer_marker} {answer}"
        examples.append(
            TrainExample(
                id=f"{qa.id}::bridge",
                task="qa_bridge",
                input_text=qa.question,
                target_text=target,
                passage_id=qa.passage_id,
            )
        )
    return examples


def parse_bridge_target(target: str, answer_marker: str = ANSWER_MARKER) -> tuple[str, str]:
    """Split a bridge target back into (passage_text, answer) on the last marker."""
    pos = target.rfind(answer_marker)
    if pos < 0:
        raise BuilderError(f"no {answer_marker!r} marker in bridge target")
    passage = unescape_marker(target[:pos].rstrip(), answer_marker)
    answer = target[pos + len(answer_marker) :].lstrip()
    return passage, answer


def decorate_prefix_suffix(
    example: TrainExample,
    passage_prefix: str = PASSAGE_PREFIX,
    passage_suffix: str = PASSAGE_SUFFIX,
    question_prefix: str = QUESTION_PREFIX,
    question_suffix: str = QUESTION_SUFFIX,
    answer_suffix: str = ANSWER_SUFFIX,
) -> TrainExample:
    """Wrap inputs/targets in task-marker tokens to decouple LM and QA spaces."""
    if example.decorated:
        raise BuilderError(f"example {example.id!r} is already decorated")
    if example.task in ("lm_finetune", "recite"):
        return replace(
            example,
            input_text=f"{passage_prefix} {example.input_text} {passage_suffix}",
            target_text=f"{example.target_text} {passage_suffix}",
            decorated=True,
        )
    return replace(
        example,
        input_text=f"{question_prefix} {example.input_text} {question_suffix}",
        target_text=f"{example.target_text} {answer_suffix}",
        decorated=True,
    )


def strip_decoration(
    example: TrainExample,
    passage_prefix: str = PASSAGE_PREFIX,
    passage_suffix: str = PASSAGE_SUFFIX,
    question_prefix: str = QUESTION_PREFIX,
    question_suffix: str = QUESTION_SUFFIX,
    answer_suffix: str = ANSWER_SUFFIX,
) -> TrainExample:
    """Inverse of decorate_prefix_suffix."""
    if not example.decorated:
        raise BuilderError(f"example {example.id!r} is not decorated")

    def unwrap(text: str, prefix: str, suffix: str) -> str:
        if not (text.startswith(prefix + " ") and text.endswith(" " + suffix)):
            raise BuilderError(f"example {example.id!r}: markers missing or malformed")
        return text[len(prefix) + 1 : -len(suffix) - 1]

    def unsuffix(text: str, suffix: str) -> str:
        if not text.endswith(" " + suffix):
            raise BuilderError(f"example {example.id!r}: target suffix missing")
        return text[: -len(suffix) - 1]

    if example.task in ("lm_finetune", "recite"):
        return replace(
            example,
            input_text=unwrap(example.input_text, passage_prefix, passage_suffix),
            target_text=unsuffix(example.target_text, passage_suffix),
            decorated=False,
        )
    return replace(
        example,
        input_text=unwrap(example.input_text, question_prefix, question_suffix),
        target_text=unsuffix(example.target_text, answer_suffix),
        decorated=False,
    )


# --- JSONL interchange ------------------------------------------------------


def example_to_dict(ex: TrainExample) -> dict:
    return {
        "id": ex.id,
        "task": ex.task,
        "input": ex.input_text,
        "target": ex.target_text,
        "passage_id": ex.passage_id,
        "decorated": ex.decorated,
    }


def example_from_dict(rec: dict) -> TrainExample:
    return TrainExample(
        id=rec["id"],
        task=rec["task"],
        input_text=rec["input"],
        target_text=rec["target"],
        passage_id=rec.get("passage_id"),
        decorated=bool(rec.get("decorated", False)),
    )


def write_examples(examples: Iterable[TrainExample], fp: IO[str]) -> None:
    for ex in examples:
        fp.write(json.dumps(example_to_dict(ex), ensure_ascii=False, sort_keys=True) + "\n")


def read_examples(fp: IO[str]) -> list[TrainExample]:
    return [example_from_dict(json.loads(line)) for line in fp if line.strip()]
