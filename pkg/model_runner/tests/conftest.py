import json
import random

import pytest

WORDS = (
    "city river castle bridge harbor market cathedral plague treaty king "
    "queen duke norman saxon fleet siege council charter wool trade silver "
    "grain monastery bishop chronicle border famine rebellion parliament tax "
    "abbey crown levy mill ledger guild ransom envoy mercer bailiff"
).split()


def make_squad_doc(n_passages=25, qas_per_passage=3, seed=42):
    """Synthetic SQuAD v2.0 document; answers are in-context word spans."""
    rng = random.Random(seed)
    data = []
    qa_counter = 0
    for i in range(n_passages):
        title = f"Article_{i}"
        words = [rng.choice(WORDS) for _ in range(40)]
        context = " ".join(words) + "."
        qas = []
        for q in range(qas_per_passage):
            start_word = rng.randrange(0, 38)
            answer = " ".join(words[start_word : start_word + rng.choice([1, 2])])
            qa_counter += 1
            qas.append(
                {
                    "id": f"q{qa_counter:04d}",
                    "question": f"What comes at position {start_word} of {title}?",
                    "is_impossible": False,
                    "answers": [{"text": answer, "answer_start": context.index(answer)}],
                }
            )
        data.append({"title": title, "paragraphs": [{"context": context, "qas": qas}]})
    return {"version": "v2.0", "data": data}


@pytest.fixture
def train_file(tmp_path):
    """A minimal valid TrainExample JSONL file."""
    path = tmp_path / "train.jsonl"
    rows = [
        {"id": "p#0::lm0", "task": "lm_finetune", "input": "a <mask> c d",
         "target": "a b c d", "passage_id": "p#0", "decorated": False},
        {"id": "p#1::lm0", "task": "lm_finetune", "input": "<mask> f g h",
         "target": "e f g h", "passage_id": "p#1", "decorated": False},
        {"id": "q1", "task": "qa_finetune", "input": "what follows a ?",
         "target": "b", "passage_id": "p#0", "decorated": False},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return path
