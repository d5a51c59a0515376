"""Positional morphological tags, the slot-value surface form lexicon and the morphological dictionary."""

from __future__ import annotations

import enum
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, replace

from .exceptions import CorpusFormatError, MisalignedRowError, MorphoNLGError, TagAlphabetError, TagLengthError

logger = logging.getLogger(__name__)

TAG_LENGTH = 15
WILDCARD = "-"
NO_KEY = "_"

# 0-based offsets of the categories used for matching
POS, SUBPOS, GENDER, NUMBER, CASE = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class MorphTag:
    positions: str

    def __str__(self):
        return self.positions

    @property
    def pos(self) -> str:
        return self.positions[POS]

    @property
    def subpos(self) -> str:
        return self.positions[SUBPOS]

    @property
    def gender(self) -> str:
        return self.positions[GENDER]

    @property
    def number(self) -> str:
        return self.positions[NUMBER]

    @property
    def case(self) -> str:
        return self.positions[CASE]

    @classmethod
    def pattern(cls, pos=WILDCARD, subpos=WILDCARD, gender=WILDCARD, number=WILDCARD, case=WILDCARD) -> MorphTag:
        """A tag with only the given categories set, e.g. ``MorphTag.pattern(case="2")``."""
        return cls(pos + subpos + gender + number + case + WILDCARD * (TAG_LENGTH - 5))


ANY_TAG = MorphTag(WILDCARD * TAG_LENGTH)


def parse_tag(s: str) -> MorphTag:
    if len(s) != TAG_LENGTH:
        raise TagLengthError(s, TAG_LENGTH)
    for i, ch in enumerate(s):
        if not ch.isprintable() or ch.isspace():
            raise TagAlphabetError(s, i + 1)
    return MorphTag(s)


def is_tag(s: str) -> bool:
    return len(s) == TAG_LENGTH and all(ch.isprintable() and not ch.isspace() for ch in s)


class MatchLevel(enum.Enum):
    EXACT = "exact"
    COARSE_POS = "coarse_pos"
    ANY = "any"


def tag_match(candidate: MorphTag, pattern: MorphTag, level: MatchLevel = MatchLevel.EXACT) -> bool:
    if level is MatchLevel.ANY:
        return True
    if level is MatchLevel.COARSE_POS:
        return pattern.pos == WILDCARD or pattern.pos == candidate.pos
    return all(p == WILDCARD or p == c for p, c in zip(pattern.positions, candidate.positions))


def _backoff(items, tag_of, pattern):
    for level in (MatchLevel.EXACT, MatchLevel.COARSE_POS):
        matched = [item for item in items if tag_match(tag_of(item), pattern, level)]
        if matched:
            return matched
    return list(items)


@dataclass(frozen=True)
class SurfaceForm:
    form: str
    lemma: str
    tag: MorphTag
    frequency: int = 0

    def __post_init__(self):
        if not self.form:
            raise ValueError("Surface form must be non-empty")
        if self.frequency < 0:
            raise ValueError(f"Negative frequency for {self.form!r}")

    @property
    def tokens(self) -> list[str]:
        return self.form.split()


class FormLexicon:
    """Map (slot, value) -> inflected surface forms, in lexicon order.

    Built once, then frozen; a frozen lexicon is safe to share.
    """

    def __init__(self):
        self._entries: dict[tuple[str, str], list[SurfaceForm]] = {}
        self._frozen = False

    def add(self, slot: str, value: str, form: str, lemma: str, tag: MorphTag | str, frequency: int = 0):
        if self._frozen:
            raise RuntimeError("Cannot add to a frozen lexicon")
        tag = tag if isinstance(tag, MorphTag) else parse_tag(tag)
        forms = self._entries.setdefault((slot, value), [])
        for i, existing in enumerate(forms):
            if existing.form == form and existing.tag == tag:
                forms[i] = replace(existing, frequency=existing.frequency + frequency)
                return
        forms.append(SurfaceForm(form, lemma, tag, frequency))

    def freeze(self) -> FormLexicon:
        self._frozen = True
        return self

    def forms(self, slot: str, value: str) -> list[SurfaceForm]:
        return list(self._entries.get((slot, value), ()))

    def keys(self):
        return list(self._entries)

    def values_for_slot(self, slot: str) -> list[str]:
        return [value for s, value in self._entries if s == slot]

    def __contains__(self, key):
        return key in self._entries

    def __len__(self):
        return len(self._entries)

    def with_frequencies(self, counts: Mapping[tuple[str, str, str], int]) -> FormLexicon:
        """Copy with frequencies set from ``(slot, value, form) -> count``."""
        lex = FormLexicon()
        for (slot, value), forms in self._entries.items():
            for sf in forms:
                lex.add(slot, value, sf.form, sf.lemma, sf.tag, counts.get((slot, value, sf.form), 0))
        return lex.freeze()


def forms_for(lex: FormLexicon, slot: str, value: str) -> list[SurfaceForm]:
    return lex.forms(slot, value)


def filter_forms(forms: list[SurfaceForm], pattern: MorphTag) -> list[SurfaceForm]:
    """Forms matching ``pattern`` exactly, else by coarse POS, else all of them."""
    return _backoff(forms, lambda sf: sf.tag, pattern)


@dataclass(frozen=True)
class DictEntry:
    tag: MorphTag
    form: str
    frequency: int


class MorphDictionary:
    """Lemma -> (tag, form) inventory used to inflect generated lemma-tag sequences."""

    def __init__(self, entries: Mapping[str, list[DictEntry]] | None = None):
        self._entries: dict[str, list[DictEntry]] = {}
        for lemma, items in (entries or {}).items():
            self._entries[lemma] = sorted(items, key=lambda e: -e.frequency)

    def forms(self, lemma: str) -> list[DictEntry]:
        return list(self._entries.get(lemma, ()))

    def lemmas(self):
        return list(self._entries)

    def __contains__(self, lemma):
        return lemma in self._entries

    def __len__(self):
        return len(self._entries)

    @property
    def distinct_forms(self) -> int:
        return len({e.form for items in self._entries.values() for e in items})


def generate_form(dictionary: MorphDictionary, lemma: str, pattern: MorphTag) -> list[str]:
    """Inflect ``lemma`` for ``pattern``, most frequent first; unknown lemmas are returned verbatim."""
    entries = dictionary.forms(lemma)
    if not entries:
        return [lemma]
    matched = _backoff(entries, lambda e: e.tag, pattern)
    return list(dict.fromkeys(e.form for e in matched))


def ingest_dictionary(rows: Iterable) -> MorphDictionary:
    """Build a dictionary from ``(form, lemma, tag[, frequency])`` rows; duplicates sum frequencies."""
    counts: dict[str, dict[tuple[MorphTag, str], int]] = {}
    for line_number, row in enumerate(rows, start=1):
        if len(row) not in (3, 4):
            raise MisalignedRowError(line_number, f"expected 3 or 4 columns, got {len(row)}")
        form, lemma, tag = row[0], row[1], row[2]
        if not form or not lemma:
            raise MisalignedRowError(line_number, "empty form or lemma")
        try:
            tag = tag if isinstance(tag, MorphTag) else parse_tag(tag)
        except MorphoNLGError as e:
            raise MisalignedRowError(line_number, str(e)) from e
        frequency = int(row[3]) if len(row) == 4 else 1
        by_lemma = counts.setdefault(lemma, {})
        by_lemma[(tag, form)] = by_lemma.get((tag, form), 0) + frequency

    return MorphDictionary(
        {
            lemma: [DictEntry(tag, form, freq) for (tag, form), freq in items.items()]
            for lemma, items in counts.items()
        }
    )


def lexicon_rows(lex: FormLexicon):
    """Dictionary rows contributed by lexicon entries (each surface form counted once)."""
    for slot, value in lex.keys():
        for sf in lex.forms(slot, value):
            yield (sf.form, sf.lemma, sf.tag, max(sf.frequency, 1))


def _read_rows(path):
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            yield line_number, line.split("\t")


def load_lexicon(path) -> FormLexicon:
    """Read a lexicon TSV: slot, value, form, lemma, tag[, frequency]."""
    lex = FormLexicon()
    for line_number, cols in _read_rows(path):
        if len(cols) not in (5, 6):
            raise CorpusFormatError(path, line_number, f"expected 5 or 6 columns, got {len(cols)}")
        slot, value, form, lemma, tag = cols[:5]
        try:
            frequency = int(cols[5]) if len(cols) == 6 else 0
            lex.add(slot, value, form, lemma, parse_tag(tag), frequency)
        except (MorphoNLGError, ValueError) as e:
            raise CorpusFormatError(path, line_number, str(e)) from e
    logger.info("Loaded %d slot values from %s", len(lex), path)
    return lex.freeze()


def save_lexicon(lex: FormLexicon, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("# slot\tvalue\tform\tlemma\ttag\tfrequency\n")
        for slot, value in lex.keys():
            for sf in lex.forms(slot, value):
                f.write(f"{slot}\t{value}\t{sf.form}\t{sf.lemma}\t{sf.tag}\t{sf.frequency}\n")


def load_dictionary(path) -> MorphDictionary:
    rows = []
    line_numbers = []
    for line_number, cols in _read_rows(path):
        if len(cols) != 6:
            raise MisalignedRowError(line_number, f"expected 6 columns, got {len(cols)}")
        rows.append((cols[2], cols[3], cols[4], cols[5]))
        line_numbers.append(line_number)
    try:
        return ingest_dictionary(rows)
    except MisalignedRowError as e:
        raise MisalignedRowError(line_numbers[e.line_number - 1], e.reason) from e


def save_dictionary(dictionary: MorphDictionary, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("# slot\tvalue\tform\tlemma\ttag\tfrequency\n")
        for lemma in sorted(dictionary.lemmas()):
            for e in dictionary.forms(lemma):
                f.write(f"{NO_KEY}\t{NO_KEY}\t{e.form}\t{lemma}\t{e.tag}\t{e.frequency}\n")
