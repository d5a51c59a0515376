"""Text delexicalization against a DA, corpus consistency checks and relexicalization."""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .context import DAConfig, placeholder, placeholder_slot
from .dialogue_acts import DialogueAct
from .exceptions import MissingAssignmentError, UnknownSlotValueError
from .morphology import ANY_TAG, WILDCARD, FormLexicon, MorphTag, SurfaceForm, filter_forms

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Instance:
    """One dataset row.

    ``lemmas`` and ``delex_tags`` are aligned to ``delex_text``; ``tags`` to ``text``. Before
    preparation (no ``delex_text``), ``lemmas`` are aligned to ``text``.
    """

    da: DialogueAct
    text: tuple[str, ...]
    delex_text: tuple[str, ...] | None = None
    lemmas: tuple[str, ...] | None = None
    tags: tuple[MorphTag, ...] | None = None
    delex_tags: tuple[MorphTag, ...] | None = None


@dataclass(frozen=True)
class Match:
    slot: str
    value: str
    form: SurfaceForm
    position: int
    length: int


@dataclass(frozen=True)
class DelexResult:
    tokens: list[str]
    matches: list[Match]
    missing: list[str]
    ambiguous: list[tuple[int, str, str]] = field(default_factory=list)

    def project(self, seq: Sequence, fill) -> list:
        """Collapse a sequence aligned to the original text onto the delexicalized tokens.

        ``fill(match, original_span)`` supplies the element standing for each matched span.
        """
        starts = {m.position: m for m in self.matches}
        out = []
        i = 0
        while i < len(seq):
            m = starts.get(i)
            if m is None:
                out.append(seq[i])
                i += 1
            else:
                out.append(fill(m, seq[i : i + m.length]))
                i += m.length
        return out


def _verbatim_form(value: str) -> SurfaceForm:
    return SurfaceForm(value, value, ANY_TAG)


def is_open_value(lex: FormLexicon, slot: str, value: str, config: DAConfig) -> bool:
    """Values standing for themselves: numerals, verbatim slots and slots the lexicon has no entries for."""
    return slot in config.verbatim_slots or value.isdigit() or not lex.values_for_slot(slot)


def value_forms(lex: FormLexicon, slot: str, value: str, config: DAConfig | None = None) -> list[SurfaceForm]:
    """Surface forms of a slot value; open values are their own single form."""
    config = config or DAConfig.default()
    forms = lex.forms(slot, value)
    if forms:
        return forms
    if is_open_value(lex, slot, value, config):
        return [_verbatim_form(value)]
    raise UnknownSlotValueError(slot, value)


def _span_matches(span, form_tokens, case_sensitive):
    if case_sensitive:
        return list(span) == form_tokens
    return [t.casefold() for t in span] == [t.casefold() for t in form_tokens]


def delexicalize_text(tokens: Sequence[str], da: DialogueAct, lex: FormLexicon, config: DAConfig | None = None):
    """Greedy leftmost-longest replacement of slot value mentions by ``X-<slot>`` tokens.

    Each abstracted DA item is consumed by at most one span. Equal-length matches of different slots
    go to the item earlier in the DA; such ties are reported in ``ambiguous``.
    """
    config = config or DAConfig.default()
    candidates = []
    for item in da.items:
        if not config.is_abstracted(item.slot, item.value):
            continue
        forms = lex.forms(item.slot, item.value)
        if not forms and is_open_value(lex, item.slot, item.value, config):
            forms = [_verbatim_form(item.value)]
        candidates.append((item.slot, item.value, forms, item.slot in config.case_sensitive_slots))

    consumed = [False] * len(candidates)
    out: list[str] = []
    matches: list[Match] = []
    ambiguous: list[tuple[int, str, str]] = []
    n = len(tokens)
    i = 0
    while i < n:
        best = None
        for k, (slot, value, forms, case_sensitive) in enumerate(candidates):
            if consumed[k]:
                continue
            for sf in forms:
                form_tokens = sf.tokens
                length = len(form_tokens)
                if i + length > n or not _span_matches(tokens[i : i + length], form_tokens, case_sensitive):
                    continue
                if best is None or length > best[0]:
                    best = (length, k, sf)
                elif length == best[0] and candidates[best[1]][0] != slot:
                    ambiguous.append((i, candidates[best[1]][0], slot))
        if best is None:
            out.append(tokens[i])
            i += 1
            continue
        length, k, sf = best
        consumed[k] = True
        slot, value = candidates[k][0], candidates[k][1]
        matches.append(Match(slot, value, sf, i, length))
        out.append(placeholder(slot))
        i += length

    missing = [candidates[k][0] for k in range(len(candidates)) if not consumed[k]]
    return DelexResult(out, matches, missing, ambiguous)


def delex_lemmas(result: DelexResult, lemmas: Sequence[str]) -> list[str]:
    return result.project(lemmas, lambda m, span: placeholder(m.slot))


def delex_tags(result: DelexResult, tags: Sequence[MorphTag]) -> list[MorphTag]:
    """Placeholders take the tag of their matched form; verbatim forms keep the text's tag."""

    def fill(m, span):
        if m.form.tag == ANY_TAG and span:
            return span[0]
        return m.form.tag

    return result.project(tags, fill)


@dataclass
class ConsistencyReport:
    n_instances: int
    missing: list[tuple[int, list[str]]] = field(default_factory=list)
    per_slot: Counter = field(default_factory=Counter)
    ambiguous: list[tuple[int, int, str, str]] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.missing

    @property
    def n_missing(self) -> int:
        return sum(self.per_slot.values())

    def summary(self) -> str:
        lines = [f"{self.n_missing} missing in {len(self.missing)} of {self.n_instances} instances"]
        for slot, count in sorted(self.per_slot.items()):
            lines.append(f"  {slot}: {count}")
        for index, slots in self.missing:
            lines.append(f"  instance {index}: missing {', '.join(slots)}")
        for index, position, kept, other in self.ambiguous:
            lines.append(f"  instance {index}: token {position} matched by {kept} and {other}, kept {kept}")
        return "\n".join(lines)


def consistency_check(instances: Sequence[Instance], lex: FormLexicon, config: DAConfig | None = None):
    report = ConsistencyReport(len(instances))
    for index, inst in enumerate(instances):
        result = delexicalize_text(inst.text, inst.da, lex, config)
        if result.missing:
            report.missing.append((index, result.missing))
            report.per_slot.update(result.missing)
        for position, kept, other in result.ambiguous:
            report.ambiguous.append((index, position, kept, other))
    if report.ambiguous:
        logger.warning("%d shared-form tie-breaks during consistency check", len(report.ambiguous))
    logger.info("Consistency check: %d missing mentions in %d instances", report.n_missing, len(instances))
    return report


def _rough_choice(forms: list[SurfaceForm], original: MorphTag) -> SurfaceForm:
    """Prefer a form agreeing with ``original`` in case and number."""
    for sf in forms:
        if sf.tag.case == original.case and sf.tag.number == original.number:
            return sf
    if original.pos != WILDCARD:
        return filter_forms(forms, MorphTag.pattern(pos=original.pos))[0]
    return forms[0]


def relexicalize_with_forms(
    tokens: Sequence[str],
    assignment: Mapping[str, str | Sequence[str]],
    lex: FormLexicon,
    tag_hints: Sequence[MorphTag | None] | None = None,
    original_tags: Sequence[MorphTag | None] | None = None,
    config: DAConfig | None = None,
):
    """Fill placeholders; returns the tokens and the surface form chosen for each placeholder.

    ``tag_hints`` restrict forms with the exact/coarse/any backoff; ``original_tags`` (the tags of
    the forms the placeholders replaced) select forms by rough case and number agreement.
    """
    config = config or DAConfig.default()
    slots = [s for s in (placeholder_slot(t) for t in tokens) if s is not None]
    unassigned = sorted({s for s in slots if s not in assignment})
    if unassigned:
        raise MissingAssignmentError(unassigned)

    queues = {s: [v] if isinstance(v, str) else list(v) for s, v in assignment.items()}
    used: Counter = Counter()
    out: list[str] = []
    chosen: list[SurfaceForm] = []
    j = 0
    for token in tokens:
        slot = placeholder_slot(token)
        if slot is None:
            out.append(token)
            continue
        values = queues[slot]
        value = values[min(used[slot], len(values) - 1)]
        used[slot] += 1
        forms = value_forms(lex, slot, value, config)
        hint = tag_hints[j] if tag_hints is not None else None
        original = original_tags[j] if original_tags is not None else None
        if hint is not None:
            sf = filter_forms(forms, hint)[0]
        elif original is not None:
            sf = _rough_choice(forms, original)
        else:
            sf = forms[0]
        chosen.append(sf)
        out.extend(sf.tokens)
        j += 1
    return out, chosen


def relexicalize(tokens, assignment, lex, tag_hints=None, original_tags=None, config=None) -> list[str]:
    out, _ = relexicalize_with_forms(tokens, assignment, lex, tag_hints, original_tags, config)
    return out


def prepare_instance(
    inst: Instance, lex: FormLexicon, config: DAConfig | None = None
) -> tuple[Instance, DelexResult]:
    """Fill ``delex_text`` and collapse ``lemmas``/``tags`` onto it."""
    result = delexicalize_text(inst.text, inst.da, lex, config)
    lemmas = inst.lemmas
    if lemmas is not None and len(lemmas) == len(inst.text):
        lemmas = tuple(delex_lemmas(result, lemmas))
    tags = None
    if inst.tags is not None and len(inst.tags) == len(inst.text):
        tags = tuple(delex_tags(result, inst.tags))
    prepared = Instance(inst.da, inst.text, tuple(result.tokens), lemmas, inst.tags, tags)
    return prepared, result
