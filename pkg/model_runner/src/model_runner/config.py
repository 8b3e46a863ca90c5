"""Run configuration.

A run is an ordered list of finetuning stages over TrainExample JSONL files
(e.g. lm_finetune then qa_finetune). Each stage gets its own checkpoint so
reciting can be evaluated both after LM-finetuning and after QA-finetuning.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import yaml

DEFAULT_SPECIAL_TOKENS = [
    "<mask>",
    "<ANSWER>",
    "<PASSAGE>",
    "</PASSAGE>",
    "<QUESTION>",
    "</QUESTION>",
    "</ANSWER>",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StageConfig:
    name: str
    file: str
    epochs: int = 50
    learning_rate: float = 3e-4
    batch_size: int = 16


@dataclass(frozen=True)
class ModelConfig:
    # desk-scale defaults; no pretrained checkpoint is assumed available
    d_model: int = 256
    layers: int = 3
    heads: int = 4
    ffn_dim: int = 512


@dataclass(frozen=True)
class RunConfig:
    base_model: str  # "scratch" or a local pretrained checkpoint path
    stages: tuple[StageConfig, ...]
    output_dir: str
    seed: int = 0
    max_source_len: int = 512
    max_target_len: int = 512
    max_new_tokens: int = 256
    num_beams: int = 1
    special_tokens: tuple[str, ...] = tuple(DEFAULT_SPECIAL_TOKENS)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if not self.stages:
            raise ConfigError("config declares no stages")
        names = [s.name for s in self.stages]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate stage names: {names}")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["stages"] = [asdict(s) for s in self.stages]
        data["special_tokens"] = list(self.special_tokens)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        try:
            stages = tuple(StageConfig(**s) for s in data["stages"])
            model = ModelConfig(**(data.get("model") or {}))
            return cls(
                base_model=data.get("base_model", "scratch"),
                stages=stages,
                output_dir=data["output_dir"],
                seed=int(data.get("seed", 0)),
                max_source_len=int(data.get("max_source_len", 512)),
                max_target_len=int(data.get("max_target_len", 512)),
                max_new_tokens=int(data.get("max_new_tokens", 256)),
                num_beams=int(data.get("num_beams", 1)),
                special_tokens=tuple(data.get("special_tokens", DEFAULT_SPECIAL_TOKENS)),
                model=model,
            )
        except (KeyError, TypeError) as e:
            raise ConfigError(f"bad run config: {e}") from e


def load_config(path: str | Path) -> RunConfig:
    with open(path, encoding="utf-8") as fp:
        data = yaml.safe_load(fp)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: not a config mapping")
    return RunConfig.from_dict(data)
