"""Experiment manifests.

A manifest captures everything a pipeline run needs: corpus path, subset
selection, builder configuration, and the master seed. Reruns from the same
manifest are byte-identical; each stage draws its randomness from a named
substream of the master seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import IO

import yaml

from .builders import ANSWER_MARKER
from .masking import DEFAULT_MASK_TOKEN


class ManifestError(ValueError):
    """Raised on missing or inconsistent manifest fields."""


@dataclass(frozen=True)
class BuilderConfig:
    rate: float = 0.30
    mean_span_len: float = 3.0
    epochs_variants: int = 1
    decorated: bool = False
    mask_token: str = DEFAULT_MASK_TOKEN
    answer_marker: str = ANSWER_MARKER
    max_target_tokens: int | None = None


@dataclass(frozen=True)
class SubsetSpec:
    n_passages: int


@dataclass(frozen=True)
class ExperimentManifest:
    name: str
    corpus_path: str
    seed: int
    out_dir: str
    subset: SubsetSpec | None = None
    builders: BuilderConfig = field(default_factory=BuilderConfig)

    def to_dict(self) -> dict:
        data = {
            "name": self.name,
            "corpus": self.corpus_path,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "builders": asdict(self.builders),
        }
        if self.subset is not None:
            data["subset"] = {"n_passages": self.subset.n_passages}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentManifest":
        try:
            name = data["name"]
            corpus_path = data["corpus"]
            seed = int(data["seed"])
            out_dir = data["out_dir"]
        except KeyError as e:
            raise ManifestError(f"manifest missing required key {e}") from e
        subset = None
        if data.get("subset") is not None:
            subset = SubsetSpec(n_passages=int(data["subset"]["n_passages"]))
        builders = BuilderConfig(**(data.get("builders") or {}))
        return cls(
            name=name,
            corpus_path=corpus_path,
            seed=seed,
            out_dir=out_dir,
            subset=subset,
            builders=builders,
        )


def load_manifest(path: str | Path) -> ExperimentManifest:
    with open(path, encoding="utf-8") as fp:
        data = yaml.safe_load(fp)
    if not isinstance(data, dict):
        raise ManifestError(f"{path}: not a manifest mapping")
    return ExperimentManifest.from_dict(data)


def dump_manifest(manifest: ExperimentManifest, fp: IO[str]) -> None:
    yaml.safe_dump(manifest.to_dict(), fp, sort_keys=True, default_flow_style=False)
