"""Mask policies over passages.

Two policies share one representation: random span-infill masking produces
the denoising training signal, answer-span masking produces the reciting
probe. Both decompose a passage into alternating fixed and masked segments
whose concatenation (with gold texts restored) reproduces the passage
byte-for-byte.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass
from typing import IO, Iterable

from .corpus import Passage, QAPair

DEFAULT_MASK_TOKEN = "<mask>"

# Maximal runs of letters/digits; any other non-space character (incl. "_")
# is a token of its own.
_TOKEN_RE = re.compile(r"[^\W_]+|\S", re.UNICODE)


class MaskingError(ValueError):
    """Raised when a passage cannot be masked under the requested policy."""


@dataclass(frozen=True)
class Token:
    text: str
    char_start: int
    char_end: int


def tokenize(text: str) -> list[Token]:
    """Unicode-aware word/punctuation split with source offsets."""
    return [
        Token(text=m.group(), char_start=m.start(), char_end=m.end())
        for m in _TOKEN_RE.finditer(text)
    ]


def token_texts(text: str) -> list[str]:
    return [m.group() for m in _TOKEN_RE.finditer(text)]


@dataclass(frozen=True)
class Segment:
    kind: str  # "fixed" | "masked"
    text: str  # fixed text, or the gold text hidden behind the mask
    origin: str | None = None  # masked only: "random" | "answer_span"
    qa_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class MaskedPassage:
    passage_id: str
    segments: tuple[Segment, ...]
    mask_token: str = DEFAULT_MASK_TOKEN

    def __post_init__(self):
        if not any(s.kind == "masked" for s in self.segments):
            raise MaskingError(f"passage {self.passage_id!r}: no masked segment")

    def original_text(self) -> str:
        return "".join(s.text for s in self.segments)

    def masked_text(self) -> str:
        return "".join(
            self.mask_token if s.kind == "masked" else s.text for s in self.segments
        )

    def masked_segments(self) -> list[Segment]:
        return [s for s in self.segments if s.kind == "masked"]

    def fixed_tail_after(self, mask_index: int) -> str:
        """The fixed text immediately following the mask_index-th masked segment ("" if none)."""
        seen = -1
        for i, seg in enumerate(self.segments):
            if seg.kind == "masked":
                seen += 1
                if seen == mask_index:
                    if i + 1 < len(self.segments) and self.segments[i + 1].kind == "fixed":
                        return self.segments[i + 1].text
                    return ""
        raise IndexError(mask_index)


def _segments_from_char_spans(
    text: str,
    spans: list[tuple[int, int, tuple[str, ...]]],
    origin: str,
) -> tuple[Segment, ...]:
    """Assemble alternating segments from sorted, disjoint char spans."""
    segments: list[Segment] = []
    cursor = 0
    for start, end, qa_ids in spans:
        if start > cursor:
            segments.append(Segment(kind="fixed", text=text[cursor:start]))
        segments.append(
            Segment(kind="masked", text=text[start:end], origin=origin, qa_ids=qa_ids)
        )
        cursor = end
    if cursor < len(text):
        segments.append(Segment(kind="fixed", text=text[cursor:]))
    return tuple(segments)


def _poisson(rng: random.Random, mean: float) -> int:
    # Knuth's method; mean is small (~3) so this is cheap.
    limit = math.exp(-mean)
    k = 0
    p = 1.0
    while True:
        p *= rng.random()
        if p <= limit:
            return k
        k += 1


def random_infill_mask(
    passage: Passage,
    rate: float,
    mean_span_len: float = 3.0,
    seed: int = 0,
    mask_token: str = DEFAULT_MASK_TOKEN,
) -> MaskedPassage:
    """Mask random token spans until the masked fraction reaches ``rate``.

    Span lengths are Poisson-distributed with the given mean, clipped to at
    least 1 and to the remaining token budget, so the final masked fraction
    stays within ±(mean_span_len/|tokens|) of the rate. Spans snap to token
    boundaries and never overlap; one mask symbol replaces the whole span.
    """
    if not 0.0 < rate < 1.0:
        raise MaskingError(f"rate must be in (0,1), got {rate}")
    tokens = tokenize(passage.text)
    n = len(tokens)
    if n < 4:
        raise MaskingError(f"passage {passage.id!r} too short to mask ({n} tokens)")

    rng = random.Random(seed)
    target = math.ceil(rate * n)
    taken = [False] * n
    masked = 0
    spans: list[tuple[int, int]] = []  # token index ranges [s, e)
    while masked < target:
        length = max(1, _poisson(rng, mean_span_len))
        length = min(length, target - masked)
        starts = None
        while length >= 1:
            starts = [
                s for s in range(n - length + 1) if not any(taken[s : s + length])
            ]
            if starts:
                break
            length -= 1
        if not starts:
            break  # no legal span remains
        s = rng.choice(starts)
        for i in range(s, s + length):
            taken[i] = True
        spans.append((s, s + length))
        masked += length

    spans.sort()
    char_spans: list[tuple[int, int, tuple[str, ...]]] = []
    for s, e in spans:
        start = tokens[s].char_start
        end = tokens[e - 1].char_end
        # merge with the previous span when nothing separates them in the text
        if char_spans and char_spans[-1][1] == start:
            prev = char_spans.pop()
            char_spans.append((prev[0], end, ()))
        else:
            char_spans.append((start, end, ()))
    return MaskedPassage(
        passage_id=passage.id,
        segments=_segments_from_char_spans(passage.text, char_spans, "random"),
        mask_token=mask_token,
    )


def answer_span_mask(
    passage: Passage,
    qa_pairs: Iterable[QAPair],
    mask_token: str = DEFAULT_MASK_TOKEN,
) -> MaskedPassage:
    """Mask every gold answer span of the passage; the reciting probe.

    Overlapping or touching spans merge into one masked segment that records
    every contributing qa id. The result is independent of qa_pair order.
    """
    raw: list[tuple[int, int, str]] = []
    for qa in qa_pairs:
        if qa.passage_id != passage.id:
            raise MaskingError(
                f"qa {qa.id!r} references passage {qa.passage_id!r}, not {passage.id!r}"
            )
        for ans in qa.answers:
            start, end = ans.char_start, ans.char_start + len(ans.text)
            if 0 <= start < end <= len(passage.text):
                raw.append((start, end, qa.id))
    if not raw:
        raise MaskingError(f"passage {passage.id!r} has no in-passage answer span")

    raw.sort()
    merged: list[tuple[int, int, set[str]]] = []
    for start, end, qa_id in raw:
        if merged and start <= merged[-1][1]:
            prev = merged[-1]
            merged[-1] = (prev[0], max(prev[1], end), prev[2] | {qa_id})
        else:
            merged.append((start, end, {qa_id}))
    spans = [(s, e, tuple(sorted(ids))) for s, e, ids in merged]
    return MaskedPassage(
        passage_id=passage.id,
        segments=_segments_from_char_spans(passage.text, spans, "answer_span"),
        mask_token=mask_token,
    )


# --- JSONL interchange ------------------------------------------------------


def masked_passage_to_dict(mp: MaskedPassage) -> dict:
    return {
        "passage_id": mp.passage_id,
        "segments": [
            {
                "kind": s.kind,
                "text": s.text,
                "origin": s.origin,
                "qa_ids": list(s.qa_ids),
            }
            for s in mp.segments
        ],
        "mask_token": mp.mask_token,
    }


def masked_passage_from_dict(rec: dict) -> MaskedPassage:
    return MaskedPassage(
        passage_id=rec["passage_id"],
        segments=tuple(
            Segment(
                kind=s["kind"],
                text=s["text"],
                origin=s.get("origin"),
                qa_ids=tuple(s.get("qa_ids") or ()),
            )
            for s in rec["segments"]
        ),
        mask_token=rec.get("mask_token", DEFAULT_MASK_TOKEN),
    )


def write_masked_passages(probes: Iterable[MaskedPassage], fp: IO[str]) -> None:
    for mp in probes:
        fp.write(json.dumps(masked_passage_to_dict(mp), ensure_ascii=False, sort_keys=True) + "\n")


def read_masked_passages(fp: IO[str]) -> list[MaskedPassage]:
    return [masked_passage_from_dict(json.loads(line)) for line in fp if line.strip()]
