import json
import random

import pytest

from cbqa.corpus import AnswerSpan, Corpus, Passage, QAPair, parse_squad

WORDS = (
    "city river castle bridge harbor market cathedral plague treaty king "
    "queen duke norman saxon fleet siege council charter wool trade silver "
    "grain monastery bishop chronicle border famine rebellion parliament tax"
).split()


def make_squad_doc(n_articles=2, paragraphs_per_article=2, qas_per_paragraph=2, seed=0):
    """Synthetic SQuAD v2.0 document with in-context answer spans."""
    rng = random.Random(seed)
    data = []
    qa_counter = 0
    for a in range(n_articles):
        title = f"Article_{a}"
        paragraphs = []
        for p in range(paragraphs_per_article):
            words = [rng.choice(WORDS) for _ in range(40)]
            context = " ".join(words) + "."
            qas = []
            for q in range(qas_per_paragraph):
                start_word = rng.randrange(0, 38)
                span_words = words[start_word : start_word + rng.choice([1, 2])]
                answer = " ".join(span_words)
                answer_start = context.index(answer)
                qa_counter += 1
                qas.append(
                    {
                        "id": f"q{qa_counter:04d}",
                        "question": f"What comes at position {start_word} of paragraph {p} in {title}?",
                        "is_impossible": False,
                        "answers": [{"text": answer, "answer_start": answer_start}],
                    }
                )
            paragraphs.append({"context": context, "qas": qas})
        data.append({"title": title, "paragraphs": paragraphs})
    return {"version": "v2.0", "data": data}


def make_corpus(n_passages=10, qas_per_passage=2, seed=0) -> Corpus:
    doc = make_squad_doc(
        n_articles=n_passages,
        paragraphs_per_article=1,
        qas_per_paragraph=qas_per_passage,
        seed=seed,
    )
    return parse_squad(json.dumps(doc))


@pytest.fixture
def squad_doc():
    return make_squad_doc()


@pytest.fixture
def small_corpus():
    return make_corpus(n_passages=10, qas_per_passage=2, seed=1)


@pytest.fixture
def socal_passage_and_qa():
    text = (
        "Southern California, often abbreviated SoCal, is a geographic and "
        "cultural region that generally comprises the southern portion of "
        "the U.S. state of California."
    )
    passage = Passage(id="SoCal#0", title="SoCal", text=text)
    qa = QAPair(
        id="socal-q1",
        passage_id="SoCal#0",
        question="What is Southern California often abbreviated as?",
        answers=(AnswerSpan(text="SoCal", char_start=text.index("SoCal")),),
    )
    return passage, qa
