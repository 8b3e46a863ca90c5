"""TrainExample JSONL reading and schema validation.

The JSONL files are the only contract with the dataset toolkit; they are
never mutated here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

REQUIRED_KEYS = ("id", "task", "input", "target")
KNOWN_TASKS = ("lm_finetune", "recite", "qa_finetune", "qa_bridge")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Example:
    id: str
    task: str
    input_text: str
    target_text: str


def load_examples(path: str | Path) -> list[Example]:
    examples: list[Example] = []
    with open(path, encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}:{lineno}: not JSON: {e.msg}") from e
            missing = [k for k in REQUIRED_KEYS if k not in rec]
            if missing:
                raise SchemaError(f"{path}:{lineno}: missing keys {missing}")
            if rec["task"] not in KNOWN_TASKS:
                raise SchemaError(f"{path}:{lineno}: unknown task {rec['task']!r}")
            examples.append(
                Example(
                    id=str(rec["id"]),
                    task=rec["task"],
                    input_text=rec["input"],
                    target_text=rec["target"],
                )
            )
    return examples


def write_predictions(records: list[tuple[str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        for example_id, output in records:
            fp.write(
                json.dumps(
                    {"example_id": example_id, "output": output},
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )
