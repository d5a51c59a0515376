"""Dialogue acts: parsing, canonical serialization, delexicalization and encoder input triples.

DA strings follow the grammar ``datype(slot=value, ...)``, with acts joined by ``&``, multiword
values in double quotes and slotless acts written as ``goodbye()``::

    inform(food=Turkish,name="Green Spirit",price_range=expensive)&?reqmore()
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NewType

from .context import DAConfig, placeholder
from .exceptions import DASyntaxError, EmptyDialogueActError, UnknownDATypeError, UnknownSlotError

NONE_TOKEN = "<none>"

DASignature = NewType("DASignature", str)

_da_type_re = re.compile(r"[?A-Za-z_][\w?]*")
_slot_re = re.compile(r"[A-Za-z_]\w*")
_bare_value_re = re.compile(r'[^,()&"=]*')
_needs_quotes_re = re.compile(r'[\s,()&="]')


@dataclass(frozen=True)
class DAItem:
    da_type: str
    slot: str | None = None
    value: str | None = None

    def __post_init__(self):
        if self.value is not None and self.slot is None:
            raise ValueError(f"DA item of type {self.da_type!r} has a value but no slot")


@dataclass(frozen=True)
class DialogueAct:
    items: tuple[DAItem, ...]

    def __post_init__(self):
        if not self.items:
            raise EmptyDialogueActError()

    def __str__(self):
        return serialize_da(self)

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    @property
    def da_types(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(item.da_type for item in self.items))

    @property
    def primary_type(self) -> str:
        return self.items[0].da_type

    def has_slots(self) -> bool:
        return any(item.slot is not None for item in self.items)

    def values_by_slot(self) -> dict[str, list[str]]:
        values: dict[str, list[str]] = {}
        for item in self.items:
            if item.slot is not None and item.value is not None:
                values.setdefault(item.slot, []).append(item.value)
        return values


def _skip_ws(text, pos):
    while pos < len(text) and text[pos].isspace():
        pos += 1
    return pos


def parse_da(text: str, config: DAConfig | None = None) -> DialogueAct:
    """Parse a DA string; ``config`` (when given) restricts DA types and slots to its registry."""
    n = len(text)
    items = []
    pos = 0
    while True:
        pos = _skip_ws(text, pos)
        m = _da_type_re.match(text, pos)
        if not m:
            raise DASyntaxError(text, pos, "expected DA type")
        da_type = m.group()
        pos = _skip_ws(text, m.end())
        if pos >= n or text[pos] != "(":
            raise DASyntaxError(text, pos, "expected '('")
        pos = _skip_ws(text, pos + 1)

        if pos < n and text[pos] == ")":
            items.append(DAItem(da_type))
            pos += 1
        else:
            while True:
                pos = _skip_ws(text, pos)
                m = _slot_re.match(text, pos)
                if not m:
                    raise DASyntaxError(text, pos, "expected slot name")
                slot = m.group()
                pos = _skip_ws(text, m.end())
                value = None
                if pos < n and text[pos] == "=":
                    pos = _skip_ws(text, pos + 1)
                    if pos < n and text[pos] == '"':
                        end = text.find('"', pos + 1)
                        if end == -1:
                            raise DASyntaxError(text, n, "unterminated quoted value")
                        raw = text[pos + 1 : end]
                        pos = end + 1
                    else:
                        m = _bare_value_re.match(text, pos)
                        raw = m.group()
                        pos = m.end()
                    value = " ".join(raw.split())
                    if not value:
                        raise DASyntaxError(text, pos, "empty value")
                items.append(DAItem(da_type, slot, value))
                pos = _skip_ws(text, pos)
                if pos >= n:
                    raise DASyntaxError(text, pos, "expected ',' or ')'")
                if text[pos] == ",":
                    pos += 1
                    continue
                if text[pos] == ")":
                    pos += 1
                    break
                raise DASyntaxError(text, pos, "expected ',' or ')'")

        pos = _skip_ws(text, pos)
        if pos >= n:
            break
        if text[pos] != "&":
            raise DASyntaxError(text, pos, "expected '&' or end of input")
        pos += 1

    if config is not None:
        for item in items:
            if item.da_type not in config.registry.da_types:
                raise UnknownDATypeError(item.da_type)
            if item.slot is not None and item.slot not in config.registry.slots:
                raise UnknownSlotError(item.slot)

    return DialogueAct(tuple(items))


def _format_value(value):
    if '"' in value:
        raise ValueError(f"DA value {value!r} contains a double quote")
    if _needs_quotes_re.search(value):
        return f'"{value}"'
    return value


def serialize_da(da: DialogueAct) -> str:
    """Canonical DA string; consecutive items of one DA type share an act."""
    acts: list[tuple[str, list[str]]] = []
    for item in da.items:
        if item.slot is None:
            acts.append((item.da_type, []))
            continue
        part = item.slot if item.value is None else f"{item.slot}={_format_value(item.value)}"
        if acts and acts[-1][0] == item.da_type and acts[-1][1]:
            acts[-1][1].append(part)
        else:
            acts.append((item.da_type, [part]))
    return "&".join(f"{da_type}({','.join(parts)})" for da_type, parts in acts)


def delexicalize_da(da: DialogueAct, config: DAConfig | None = None):
    """Replace abstracted values by ``X-<slot>``.

    Returns the delexicalized DA and a map slot -> original values (in DA order; a slot repeated
    in the DA has several values).
    """
    config = config or DAConfig.default()
    substitutions: dict[str, list[str]] = {}
    items = []
    for item in da.items:
        if config.is_abstracted(item.slot, item.value):
            substitutions.setdefault(item.slot, []).append(item.value)
            items.append(DAItem(item.da_type, item.slot, placeholder(item.slot)))
        else:
            items.append(item)
    return DialogueAct(tuple(items)), substitutions


def da_signature(da: DialogueAct, config: DAConfig | None = None) -> DASignature:
    delex_da, _ = delexicalize_da(da, config)
    return DASignature(serialize_da(delex_da))


def da_to_triples(da: DialogueAct, lexicalized: bool = False, config: DAConfig | None = None):
    """Encoder input: one (DA type, slot, value) triple per item; absent parts are ``<none>``."""
    if not lexicalized:
        da, _ = delexicalize_da(da, config)
    return [(item.da_type, item.slot or NONE_TOKEN, item.value or NONE_TOKEN) for item in da.items]


def da_indicators(da: DialogueAct, config: DAConfig | None = None) -> frozenset[str]:
    """Indicators a reranker classifies: DA types, plus ``type|slot|value`` for each delexicalized item."""
    delex_da, _ = delexicalize_da(da, config)
    indicators = set(delex_da.da_types)
    for item in delex_da.items:
        if item.slot is not None:
            indicators.add(f"{item.da_type}|{item.slot}|{item.value or NONE_TOKEN}")
    return frozenset(indicators)
