"""Experiment configuration and the mode/input/lexicalizer variant grid."""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field, fields

from .dataset_io import config_hash
from .generator import GeneratorConfig, InputMode, OutputMode
from .lexicalization import LexStrategyKind, LmConfig
from .reranker import RerankerConfig

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass
class ExperimentConfig:
    dataset: str | None = None
    lexicon: str | None = None
    dictionary: str | None = None
    output_dir: str = "output"
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    reranker: RerankerConfig = field(default_factory=RerankerConfig)
    lm: LmConfig = field(default_factory=LmConfig)
    ngram_order: int = 5
    lexicalizer: LexStrategyKind = LexStrategyKind.RNN_LM
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    abstract_dont_care: bool = False
    abstract_counts: bool = True
    split_ratios: tuple[float, float, float] = (3, 1, 1)
    lm_temperature: float = 1.0
    rerank_weight: float | None = None

    def __post_init__(self):
        self.lexicalizer = LexStrategyKind(self.lexicalizer)
        self.split_ratios = tuple(self.split_ratios)
        self.seeds = list(self.seeds)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"Unknown experiment config keys: {', '.join(unknown)}")
        data = dict(data)
        for name, sub in (("generator", GeneratorConfig), ("reranker", RerankerConfig), ("lm", LmConfig)):
            if name in data:
                data[name] = sub(**data[name])
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        data = asdict(self)
        data["generator"] = self.generator.to_dict()
        data["lexicalizer"] = self.lexicalizer.value
        data["split_ratios"] = list(self.split_ratios)
        return data

    def validate(self):
        if not self.seeds:
            raise ValueError("At least one seed is required")
        if self.ngram_order < 1:
            raise ValueError(f"ngram_order must be at least 1, got {self.ngram_order}")
        if len(self.split_ratios) != 3 or any(r <= 0 for r in self.split_ratios):
            raise ValueError(f"split_ratios must be three positive numbers, got {self.split_ratios}")
        self.generator.validate()
        self.reranker.validate()
        self.lm.validate()
        return self

    def hash(self) -> str:
        return config_hash(self.to_dict())


@dataclass(frozen=True)
class Variant:
    mode: OutputMode
    input_mode: InputMode
    lexicalizer: LexStrategyKind

    @property
    def model_name(self) -> str:
        """Variants sharing a model name share the trained generator and reranker."""
        return f"{self.mode.value}-{self.input_mode.value}"

    @property
    def name(self) -> str:
        return f"{self.model_name}-{self.lexicalizer.value}"


def variant_grid() -> list[Variant]:
    return [
        Variant(mode, input_mode, lex)
        for mode, input_mode, lex in itertools.product(OutputMode, InputMode, LexStrategyKind)
    ]
