from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from importlib import resources
from types import SimpleNamespace

from .exceptions import MissingPrerequisiteError

logger = logging.getLogger(__name__)

DONT_CARE = "dont_care"
PLACEHOLDER_PREFIX = "X-"

_non_delex_slots = frozenset({"kids_allowed"})
_verbatim_slots = frozenset({"count"})
_case_sensitive_slots = frozenset({"name", "near", "address", "area", "phone", "postcode"})


def read_key_list(lines):
    """Keys of a plain key-list file: one key per line, ``#`` comments and blank lines skipped."""
    keys = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        keys.append(line)
    return tuple(keys)


def _load_resource(name: str) -> tuple[str, ...]:
    text = resources.files("morpho_nlg").joinpath("resources", name).read_text(encoding="utf-8")
    return read_key_list(text.splitlines())


@dataclass(frozen=True)
class Registry:
    """Closed sets of DA types and slots."""

    da_types: frozenset[str]
    slots: frozenset[str]

    @classmethod
    def default(cls) -> Registry:
        return cls(frozenset(_load_resource("da_types.txt")), frozenset(_load_resource("slots.txt")))

    @classmethod
    def from_files(cls, da_types_path: str, slots_path: str) -> Registry:
        with open(da_types_path, encoding="utf-8") as f:
            da_types = read_key_list(f)
        with open(slots_path, encoding="utf-8") as f:
            slots = read_key_list(f)
        return cls(frozenset(da_types), frozenset(slots))


@dataclass(frozen=True)
class DAConfig:
    """How dialogue acts are delexicalized and matched against text.

    ``abstract_dont_care`` and ``abstract_counts`` select the signature convention: whether
    ``dont_care`` values and count-slot numerals are replaced by placeholders.
    """

    registry: Registry
    delex_slots: frozenset[str]
    abstract_dont_care: bool = False
    abstract_counts: bool = True
    verbatim_slots: frozenset[str] = _verbatim_slots
    case_sensitive_slots: frozenset[str] = _case_sensitive_slots

    @classmethod
    def default(cls, registry: Registry | None = None, **kwargs) -> DAConfig:
        registry = registry or Registry.default()
        delex_slots = kwargs.pop("delex_slots", registry.slots - _non_delex_slots)
        return cls(registry=registry, delex_slots=frozenset(delex_slots), **kwargs)

    def is_abstracted(self, slot: str | None, value: str | None) -> bool:
        if slot is None or value is None or slot not in self.delex_slots:
            return False
        if value == DONT_CARE and not self.abstract_dont_care:
            return False
        if slot in self.verbatim_slots and not self.abstract_counts:
            return False
        return True


def placeholder(slot: str) -> str:
    return f"{PLACEHOLDER_PREFIX}{slot}"


def placeholder_slot(token: str) -> str | None:
    if token.startswith(PLACEHOLDER_PREFIX) and len(token) > len(PLACEHOLDER_PREFIX):
        return token[len(PLACEHOLDER_PREFIX) :]
    return None


def create_run_context(*, da_config, output_dir, seed, required_paths=()):
    for path in required_paths:
        if not os.path.exists(path):
            raise MissingPrerequisiteError(path, "Input file")

    os.makedirs(output_dir, exist_ok=True)
    logger.debug("Run context: output_dir=%s seed=%s", output_dir, seed)

    return SimpleNamespace(
        da_config=da_config,
        registry=da_config.registry,
        output_dir=output_dir,
        seed=seed,
        inputs={},
        outputs=[],
    )
