"""SQuAD-format ingestion, deterministic splitting, and subset extraction.

The corpus is the root data structure of the pipeline: passages are the
knowledge units fed to a model, QA pairs are the probes asked about them.
All sampling here is a pure function of (ids, seed) so reruns are
byte-identical and reordering the input never changes a selection.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import IO, Iterable

from .seeds import derive_seed


class CorpusError(ValueError):
    """Raised when input data violates the corpus schema or an invariant."""


@dataclass(frozen=True)
class Passage:
    id: str
    title: str
    text: str


@dataclass(frozen=True)
class AnswerSpan:
    text: str
    char_start: int


@dataclass(frozen=True)
class QAPair:
    id: str
    passage_id: str
    question: str
    answers: tuple[AnswerSpan, ...]


@dataclass(frozen=True)
class RejectedRecord:
    kind: str  # "passage" or "qa"
    id: str
    reason: str


@dataclass(frozen=True)
class Corpus:
    """Ordered, validated collection of passages and their QA pairs.

    Passages and QA pairs are kept sorted by id so every downstream seeded
    operation sees the same order regardless of how the corpus was built.
    """

    passages: tuple[Passage, ...]
    qa_pairs: tuple[QAPair, ...]
    split_label: str = "unsplit"

    def __post_init__(self):
        if self.split_label not in ("train", "dev", "test", "unsplit"):
            raise CorpusError(f"unknown split label {self.split_label!r}")
        object.__setattr__(self, "passages", tuple(sorted(self.passages, key=lambda p: p.id)))
        object.__setattr__(self, "qa_pairs", tuple(sorted(self.qa_pairs, key=lambda q: q.id)))
        by_id = {}
        for p in self.passages:
            if not p.text.strip():
                raise CorpusError(f"passage {p.id!r} has empty text")
            if p.id in by_id:
                raise CorpusError(f"duplicate passage id {p.id!r}")
            by_id[p.id] = p
        for qa in self.qa_pairs:
            if qa.passage_id not in by_id:
                raise CorpusError(f"qa {qa.id!r} references unknown passage {qa.passage_id!r}")
            if not qa.answers:
                raise CorpusError(f"qa {qa.id!r} has no answers")

    def passage_by_id(self, passage_id: str) -> Passage:
        for p in self.passages:
            if p.id == passage_id:
                return p
        raise KeyError(passage_id)

    def passages_index(self) -> dict[str, Passage]:
        return {p.id: p for p in self.passages}

    def qa_by_passage(self) -> dict[str, list[QAPair]]:
        grouped: dict[str, list[QAPair]] = {}
        for qa in self.qa_pairs:
            grouped.setdefault(qa.passage_id, []).append(qa)
        return grouped


def parse_squad(raw: bytes | str, rejects: list[RejectedRecord] | None = None) -> Corpus:
    """Parse a SQuAD v1.1/v2.0 JSON document into a Corpus.

    Unanswerable (is_impossible) questions are dropped: closed-book QA needs a
    gold answer. Paragraphs with empty context and answers whose offsets do
    not match the context are rejected individually; pass a ``rejects`` list
    to collect them, parsing continues either way.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise CorpusError(f"malformed SQuAD JSON at byte offset {e.pos}: {e.msg}") from e
    if not isinstance(doc, dict) or "data" not in doc:
        raise CorpusError("not a SQuAD document: missing top-level 'data' key")

    passages: list[Passage] = []
    qa_pairs: list[QAPair] = []
    title_counts: dict[str, int] = {}

    for article in doc["data"]:
        title = article.get("title", "")
        for paragraph in article.get("paragraphs", []):
            index = title_counts.get(title, 0)
            title_counts[title] = index + 1
            passage_id = f"{title}#{index}"
            context = paragraph.get("context", "")
            if not context.strip():
                if rejects is not None:
                    rejects.append(RejectedRecord("passage", passage_id, "empty context"))
                continue
            passages.append(Passage(id=passage_id, title=title, text=context))
            for qa in paragraph.get("qas", []):
                qa_id = str(qa.get("id", ""))
                if qa.get("is_impossible", False):
                    continue
                answers: list[AnswerSpan] = []
                seen: set[tuple[str, int]] = set()
                bad = None
                for ans in qa.get("answers", []):
                    text = ans["text"]
                    start = int(ans["answer_start"])
                    if context[start : start + len(text)] != text:
                        bad = (
                            f"answer offset mismatch: expected {text!r}, "
                            f"found {context[start:start + len(text)]!r} at {start}"
                        )
                        continue
                    if (text, start) not in seen:
                        seen.add((text, start))
                        answers.append(AnswerSpan(text=text, char_start=start))
                if not answers:
                    if rejects is not None:
                        rejects.append(
                            RejectedRecord("qa", qa_id, bad or "no gold answers")
                        )
                    continue
                qa_pairs.append(
                    QAPair(
                        id=qa_id,
                        passage_id=passage_id,
                        question=qa["question"],
                        answers=tuple(answers),
                    )
                )

    return Corpus(passages=tuple(passages), qa_pairs=tuple(qa_pairs))


def _restrict(corpus: Corpus, passage_ids: set[str], label: str) -> Corpus:
    passages = tuple(p for p in corpus.passages if p.id in passage_ids)
    qa_pairs = tuple(q for q in corpus.qa_pairs if q.passage_id in passage_ids)
    return Corpus(passages=passages, qa_pairs=qa_pairs, split_label=label)


def split_dev_test(corpus: Corpus, seed: int) -> tuple[Corpus, Corpus]:
    """Partition a corpus into two halves at passage level.

    Passages are ordered by a keyed hash of their id, so the assignment is
    independent of input order, and adding or removing unrelated passages
    only moves records near the boundary. QA pairs follow their passage.
    """
    if corpus.split_label not in ("unsplit", "dev"):
        raise CorpusError(f"cannot split a corpus labelled {corpus.split_label!r}")
    if len(corpus.passages) < 2:
        raise CorpusError("need at least 2 passages to split")
    key = derive_seed(seed, "split").to_bytes(8, "big")
    ranked = sorted(
        corpus.passages,
        key=lambda p: (hashlib.blake2b(p.id.encode("utf-8"), key=key, digest_size=16).hexdigest(), p.id),
    )
    half = (len(ranked) + 1) // 2
    dev_ids = {p.id for p in ranked[:half]}
    test_ids = {p.id for p in ranked[half:]}
    return _restrict(corpus, dev_ids, "dev"), _restrict(corpus, test_ids, "test")


@dataclass(frozen=True)
class Subset:
    """A passage subset with its internal 8:1:1 train/dev/test assignment."""

    full: Corpus
    train: Corpus
    dev: Corpus
    test: Corpus


def extract_subset(corpus: Corpus, n_passages: int, seed: int) -> Subset:
    """Sample ``n_passages`` passages without replacement via a seeded shuffle.

    The shuffle runs over the sorted id list, so the selection is a function
    of (ids, n, seed) only. The selected passages are further assigned
    train/dev/test at roughly 8:1:1 (passage level); QA pairs inherit the
    assignment of their passage.
    """
    ids = sorted(p.id for p in corpus.passages)
    if not 1 <= n_passages <= len(ids):
        raise CorpusError(
            f"n_passages={n_passages} out of range 1..{len(ids)}"
        )
    rng = random.Random(derive_seed(seed, "subset"))
    rng.shuffle(ids)
    chosen = ids[:n_passages]

    n_dev = n_passages // 10
    n_test = n_passages // 10
    n_train = n_passages - n_dev - n_test
    train_ids = set(chosen[:n_train])
    dev_ids = set(chosen[n_train : n_train + n_dev])
    test_ids = set(chosen[n_train + n_dev :])

    return Subset(
        full=_restrict(corpus, set(chosen), "unsplit"),
        train=_restrict(corpus, train_ids, "train"),
        dev=_restrict(corpus, dev_ids, "dev"),
        test=_restrict(corpus, test_ids, "test"),
    )


def expand_multi_answers(qa_pairs: Iterable[QAPair]) -> list[QAPair]:
    """Split each QA pair with k distinct answer texts into k one-answer pairs.

    Pairs whose answers all share one text pass through unchanged. Expanded
    ids get a deterministic ``::aN`` suffix in first-occurrence order.
    """
    out: list[QAPair] = []
    for qa in qa_pairs:
        distinct: list[AnswerSpan] = []
        seen: set[str] = set()
        for ans in qa.answers:
            if ans.text not in seen:
                seen.add(ans.text)
                distinct.append(ans)
        if len(distinct) == 1:
            out.append(qa)
        else:
            for i, ans in enumerate(distinct):
                out.append(
                    QAPair(
                        id=f"{qa.id}::a{i}",
                        passage_id=qa.passage_id,
                        question=qa.question,
                        answers=(ans,),
                    )
                )
    return out


def base_qa_id(example_or_qa_id: str) -> str:
    """Strip the multi-answer expansion suffix, if any."""
    head, sep, tail = example_or_qa_id.rpartition("::a")
    if sep and tail.isdigit():
        return head
    return example_or_qa_id


# --- canonical corpus file: JSON Lines, kinds "passage" and "qa" -----------


def write_corpus(corpus: Corpus, fp: IO[str]) -> None:
    """Write the canonical corpus JSONL: passage records then qa records, sorted by id."""
    for p in corpus.passages:
        fp.write(
            json.dumps(
                {"kind": "passage", "id": p.id, "title": p.title, "text": p.text},
                ensure_ascii=False,
                sort_keys=True,
            )
            + "\n"
        )
    for qa in corpus.qa_pairs:
        fp.write(
            json.dumps(
                {
                    "kind": "qa",
                    "id": qa.id,
                    "passage_id": qa.passage_id,
                    "question": qa.question,
                    "answers": [
                        {"text": a.text, "char_start": a.char_start} for a in qa.answers
                    ],
                },
                ensure_ascii=False,
                sort_keys=True,
            )
            + "\n"
        )


def read_corpus(fp: IO[str], split_label: str = "unsplit") -> Corpus:
    passages: list[Passage] = []
    qa_pairs: list[QAPair] = []
    for lineno, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusError(f"bad corpus line {lineno}: {e.msg}") from e
        kind = rec.get("kind")
        if kind == "passage":
            passages.append(Passage(id=rec["id"], title=rec["title"], text=rec["text"]))
        elif kind == "qa":
            qa_pairs.append(
                QAPair(
                    id=rec["id"],
                    passage_id=rec["passage_id"],
                    question=rec["question"],
                    answers=tuple(
                        AnswerSpan(text=a["text"], char_start=a["char_start"])
                        for a in rec["answers"]
                    ),
                )
            )
        else:
            raise CorpusError(f"bad corpus line {lineno}: unknown kind {kind!r}")
    return Corpus(passages=tuple(passages), qa_pairs=tuple(qa_pairs), split_label=split_label)
