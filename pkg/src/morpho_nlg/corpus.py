"""Corpus pipeline: deduplication, LM-weighted expansion, overlap-free splitting and statistics."""

from __future__ import annotations

import json
import logging
import zlib
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .context import DAConfig, placeholder_slot
from .delex import Instance, relexicalize_with_forms
from .dialogue_acts import DAItem, DASignature, DialogueAct, da_signature, serialize_da
from .exceptions import CorpusFormatError, EmptyCorpusError, TargetCountError
from .morphology import ANY_TAG, FormLexicon, MorphTag
from .ngram_lm import NGramModel, score, softmax_over_scores

logger = logging.getLogger(__name__)

PARTS = ("train", "dev", "test")
DEFAULT_RATIOS = (3, 1, 1)


@dataclass
class UniqueText:
    """One distinct delexicalized text of a signature, with the first instance carrying it."""

    delex_text: tuple[str, ...]
    count: int
    instance: Instance

    @property
    def lm_tokens(self) -> tuple[str, ...]:
        return self.instance.lemmas if self.instance.lemmas is not None else self.delex_text


def deduplicate(
    instances: Sequence[Instance], config: DAConfig | None = None
) -> dict[DASignature, list[UniqueText]]:
    uniques: dict[DASignature, dict[tuple[str, ...], UniqueText]] = {}
    for index, inst in enumerate(instances):
        if inst.delex_text is None:
            raise ValueError(f"Instance {index} has no delexicalized text; run prepare first")
        by_text = uniques.setdefault(da_signature(inst.da, config), {})
        if inst.delex_text in by_text:
            by_text[inst.delex_text].count += 1
        else:
            by_text[inst.delex_text] = UniqueText(inst.delex_text, 1, inst)
    result = {sig: list(by_text.values()) for sig, by_text in uniques.items()}
    logger.info(
        "Deduplicated %d instances into %d unique texts over %d signatures",
        len(instances),
        sum(len(u) for u in result.values()),
        len(result),
    )
    return result


def signature_rng(seed: int, signature: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(signature.encode("utf-8"))])


def targets_from_instances(instances: Sequence[Instance], config: DAConfig | None = None) -> dict[str, int]:
    return dict(Counter(da_signature(inst.da, config) for inst in instances))


def read_targets(path) -> dict[str, int]:
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise CorpusFormatError(path, e.lineno, e.msg) from e
    if not isinstance(data, dict) or not all(isinstance(v, int) and v >= 0 for v in data.values()):
        raise CorpusFormatError(path, 1, "targets must map signatures to non-negative integers")
    return data


def write_targets(targets: Mapping[str, int], path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(dict(sorted(targets.items())), f, ensure_ascii=False, indent=1)
        f.write("\n")


@dataclass
class ExpansionResult:
    instances: list[Instance]
    review: list[tuple[str, str]] = field(default_factory=list)
    copies: dict[str, Counter] = field(default_factory=dict)


def _draw_values(rng, lex: FormLexicon, slot: str, originals: list[str]) -> list[str]:
    values = lex.values_for_slot(slot)
    if not values:
        return list(originals)
    picks = rng.choice(len(values), size=len(originals), replace=len(values) < len(originals))
    return [values[int(i)] for i in picks]


def _relexicalized_copy(unique: UniqueText, rng, lex: FormLexicon, config: DAConfig) -> Instance:
    original = unique.instance
    abstracted: dict[str, list[str]] = {}
    for item in original.da.items:
        if config.is_abstracted(item.slot, item.value):
            abstracted.setdefault(item.slot, []).append(item.value)
    assignment = {slot: _draw_values(rng, lex, slot, values) for slot, values in abstracted.items()}

    queues = {slot: list(values) for slot, values in assignment.items()}
    items = []
    for item in original.da.items:
        if config.is_abstracted(item.slot, item.value):
            items.append(DAItem(item.da_type, item.slot, queues[item.slot].pop(0)))
        else:
            items.append(item)
    da = DialogueAct(tuple(items))

    delex_tags = original.delex_tags
    original_tags = placeholder_tags(original) if delex_tags is not None else None
    tokens, chosen = relexicalize_with_forms(
        unique.delex_text, assignment, lex, original_tags=original_tags, config=config
    )

    tags = None
    if delex_tags is not None:
        tags = []
        forms = iter(chosen)
        for tok, tag in zip(unique.delex_text, delex_tags):
            if placeholder_slot(tok) is None:
                tags.append(tag)
                continue
            sf = next(forms)
            tags.extend([tag if sf.tag == ANY_TAG else sf.tag] * len(sf.tokens))
        tags = tuple(tags)

    logger.debug("Relexicalized copy %s", serialize_da(da))
    return Instance(da, tuple(tokens), unique.delex_text, original.lemmas, tags, delex_tags)


def expand(
    uniques: Mapping[str, Sequence[UniqueText]],
    targets: Mapping[str, int],
    lm: NGramModel,
    lex: FormLexicon,
    seed: int,
    config: DAConfig | None = None,
    temperature: float = 1.0,
) -> ExpansionResult:
    """Keep each unique text once, then sample LM-weighted relexicalized copies up to each target.

    Signatures without a target keep their uniques only.
    """
    config = config or DAConfig.default()
    missing = sorted(sig for sig, n in targets.items() if n > 0 and not uniques.get(sig))
    if missing:
        raise EmptyCorpusError(f"unique translations for signature {missing[0]}")

    result = ExpansionResult([])
    for sig in sorted(uniques):
        group = list(uniques[sig])
        target = targets.get(sig, len(group))
        if target < len(group):
            raise TargetCountError(sig, target, len(group))
        result.instances.extend(u.instance for u in group)
        n_extra = target - len(group)
        if n_extra == 0:
            continue

        rng = signature_rng(seed, sig)
        probs = softmax_over_scores([score(lm, u.lm_tokens) for u in group], temperature)
        picks = rng.choice(len(group), size=n_extra, p=probs)
        result.copies[sig] = Counter(int(i) for i in picks)
        for i in picks:
            inst = _relexicalized_copy(group[int(i)], rng, lex, config)
            result.instances.append(inst)
            result.review.append((serialize_da(inst.da), " ".join(inst.text)))

    logger.info("Expanded to %d instances (%d relexicalized copies)", len(result.instances), len(result.review))
    return result


@dataclass
class SplitSpec:
    assignment: dict[str, str]
    ratios: tuple[float, float, float]
    instance_counts: dict[str, int]
    da_types: dict[str, tuple[str, ...]]
    warnings: list[str] = field(default_factory=list)

    def signatures(self, part: str) -> list[str]:
        return sorted(sig for sig, p in self.assignment.items() if p == part)

    def partition(
        self, instances: Sequence[Instance], config: DAConfig | None = None
    ) -> dict[str, list[Instance]]:
        parts: dict[str, list[Instance]] = {p: [] for p in PARTS}
        for inst in instances:
            parts[self.assignment[da_signature(inst.da, config)]].append(inst)
        return parts

    def summary_frame(self) -> pd.DataFrame:
        rows = []
        total = sum(self.instance_counts.values()) or 1
        for part in PARTS:
            sigs = self.signatures(part)
            n = sum(self.instance_counts[s] for s in sigs)
            rows.append(
                {
                    "part": part,
                    "signatures": len(sigs),
                    "instances": n,
                    "share": n / total,
                    "da_types": len(set().union(*(self.da_types[s] for s in sigs))),
                }
            )
        return pd.DataFrame(rows).set_index("part")


def split(
    instances: Sequence[Instance],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    seed: int = 0,
    pinned: set[str] | None = None,
    config: DAConfig | None = None,
) -> SplitSpec:
    """Assign whole signature groups to train/dev/test.

    Pinned signatures (default: those of slotless DAs) go to train. Each DA type found in at least
    three signatures, as any of their items, first gets one in every part; the rest go largest-first
    to the part furthest below its instance target.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"Expected three positive ratios, got {tuple(ratios)}")

    counts: Counter = Counter()
    da_types: dict[str, tuple[str, ...]] = {}
    slotless: set[str] = set()
    for inst in instances:
        sig = da_signature(inst.da, config)
        counts[sig] += 1
        da_types.setdefault(sig, inst.da.da_types)
        if not inst.da.has_slots():
            slotless.add(sig)
    pinned = slotless if pinned is None else set(pinned) & set(counts)

    total = sum(counts.values())
    targets = {part: total * r / sum(ratios) for part, r in zip(PARTS, ratios)}
    filled = dict.fromkeys(PARTS, 0)
    assignment: dict[str, str] = {}
    warnings: list[str] = []

    def assign(sig, part):
        assignment[sig] = part
        filled[part] += counts[sig]

    for sig in sorted(pinned):
        assign(sig, "train")

    rng = np.random.default_rng(seed)
    # a signature counts for every DA type among its items
    sigs_by_type: dict[str, list[str]] = {}
    for sig in sorted(counts):
        for da_type in da_types[sig]:
            sigs_by_type.setdefault(da_type, []).append(sig)

    for da_type in sorted(sigs_by_type):
        sigs = sigs_by_type[da_type]
        if all(sig in pinned for sig in sigs):
            continue
        if len(sigs) < len(PARTS):
            warnings.append(f"DA type {da_type} has {len(sigs)} signatures and cannot appear in every part")
            continue
        covered = {assignment[sig] for sig in sigs if sig in assignment}
        candidates = [str(sig) for sig in rng.permutation(sigs) if str(sig) not in assignment]
        for part in (p for p in PARTS if p not in covered):
            if not candidates:
                warnings.append(f"DA type {da_type} has no free signature left for {part}")
                break
            assign(candidates.pop(0), part)

    rest = [sig for sig in sorted(counts) if sig not in assignment]
    rest = [rest[int(i)] for i in rng.permutation(len(rest))]
    rest.sort(key=lambda s: -counts[s])
    for sig in rest:
        part = max(PARTS, key=lambda p: targets[p] - filled[p])
        assign(sig, part)

    empty = [p for p in PARTS if filled[p] == 0]
    if empty:
        warnings.append(f"Empty parts: {', '.join(empty)}")
    for w in warnings:
        logger.warning("Split: %s", w)
    logger.info("Split %d signatures: %s", len(counts), ", ".join(f"{p}={filled[p]}" for p in PARTS))

    return SplitSpec(assignment, tuple(float(r) for r in ratios), dict(counts), da_types, warnings)


@dataclass
class CorpusStats:
    instances: int = 0
    unique_delex_instances: int = 0
    unique_signatures: int = 0
    unique_lemmas: int = 0
    unique_forms: int = 0
    avg_lexicalizations: float | None = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(self)])


def avg_lexicalizations(lex: FormLexicon, config: DAConfig | None = None) -> float:
    """Mean number of distinct surface forms per slot value; numerals are left out."""
    config = config or DAConfig.default()
    sizes = [
        len({sf.form for sf in lex.forms(slot, value)})
        for slot, value in lex.keys()
        if slot not in config.verbatim_slots and not value.isdigit()
    ]
    return float(np.mean(sizes)) if sizes else 0.0


def corpus_stats(instances: Sequence[Instance], lex: FormLexicon | None = None, config: DAConfig | None = None):
    """Instance counts plus lemma and form vocabularies of the delexicalized text."""
    stats = CorpusStats()
    if lex is not None:
        stats.avg_lexicalizations = avg_lexicalizations(lex, config)
    if not instances:
        return stats
    signatures = set()
    texts = set()
    lemmas: set[str] = set()
    forms: set[str] = set()
    for inst in instances:
        sig = da_signature(inst.da, config)
        signatures.add(sig)
        delex = inst.delex_text if inst.delex_text is not None else inst.text
        texts.add((sig, delex))
        forms.update(delex)
        lemmas.update(inst.lemmas if inst.lemmas is not None else delex)
    stats.instances = len(instances)
    stats.unique_delex_instances = len(texts)
    stats.unique_signatures = len(signatures)
    stats.unique_lemmas = len(lemmas)
    stats.unique_forms = len(forms)
    return stats


def placeholder_tags(inst: Instance) -> list[MorphTag]:
    """Tags of the forms each placeholder of ``inst.delex_text`` replaced."""
    if inst.delex_text is None or inst.delex_tags is None:
        return []
    return [t for tok, t in zip(inst.delex_text, inst.delex_tags) if placeholder_slot(tok)]
