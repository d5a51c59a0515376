from __future__ import annotations

import pytest

from morpho_nlg.context import DAConfig
from morpho_nlg.corpus import (
    PARTS,
    UniqueText,
    avg_lexicalizations,
    corpus_stats,
    deduplicate,
    expand,
    read_targets,
    signature_rng,
    split,
    targets_from_instances,
    write_targets,
)
from morpho_nlg.delex import Instance, delexicalize_text, prepare_instance
from morpho_nlg.dialogue_acts import da_signature, parse_da
from morpho_nlg.exceptions import CorpusFormatError, EmptyCorpusError, TargetCountError
from morpho_nlg.morphology import parse_tag
from morpho_nlg.ngram_lm import train_lm


def _prepared(da, text, lexicon, config, lemmas=None, tags=None):
    inst = Instance(
        parse_da(da, config),
        tuple(text.split()),
        lemmas=tuple(lemmas.split()) if lemmas else None,
        tags=tuple(parse_tag(t) for t in tags) if tags else None,
    )
    return prepare_instance(inst, lexicon, config)[0]


TYPES = ["inform", "?confirm", "?select", "inform_only_match", "inform_no_match"]


def _synthetic_corpus(sigs_per_type=6, copies=2, config=None):
    """Two instances per signature; signatures are a DA type with a growing set of slots."""
    config = config or DAConfig.default()
    slots = ["name", "food", "area", "near", "phone", "price_range"]
    types = TYPES
    instances = []
    for t in types:
        for k in range(1, sigs_per_type + 1):
            da = parse_da(f"{t}({','.join(f'{s}=v{j}' for j, s in enumerate(slots[:k]))})", config)
            delex = tuple(f"X-{s}" for s in slots[:k])
            for _ in range(copies):
                instances.append(Instance(da, delex, delex_text=delex))
    instances.append(Instance(parse_da("goodbye()", config), ("nashle",), delex_text=("nashle",)))
    instances.append(Instance(parse_da("?reqmore()", config), ("ještě",), delex_text=("ještě",)))
    return instances


def test_deduplicate_groups_by_signature(lexicon, da_config):
    instances = [
        _prepared(
            "inform(name=Ananta,price_range=expensive)", "Ananta je drahá restaurace .", lexicon, da_config
        ),
        _prepared(
            'inform(name="Café Savoy",price_range=expensive)',
            "Café Savoy je drahá restaurace .",
            lexicon,
            da_config,
        ),
        _prepared("inform(name=Ananta,price_range=expensive)", "Ananta je drahé bistro .", lexicon, da_config),
        _prepared("inform(name=Ananta,food=Turkish)", "V Anantě vaří tureckou kuchyni .", lexicon, da_config),
    ]
    uniques = deduplicate(instances, da_config)
    sig = "inform(name=X-name,price_range=X-price_range)"
    assert sorted(uniques) == ["inform(name=X-name,food=X-food)", sig]
    assert [(u.delex_text, u.count) for u in uniques[sig]] == [
        (("X-name", "je", "X-price_range", "restaurace", "."), 2),
        (("X-name", "je", "X-price_range", "bistro", "."), 1),
    ]


def test_deduplicate_needs_prepared_instances(da_config):
    with pytest.raises(ValueError):
        deduplicate([Instance(parse_da("goodbye()"), ("nashle",))], da_config)


def test_targets_file_round_trip(tmp_path, da_config):
    instances = _synthetic_corpus(config=da_config)
    counts = targets_from_instances(instances, da_config)
    assert sum(counts.values()) == len(instances)
    path = tmp_path / "targets.json"
    write_targets(counts, path)
    assert read_targets(path) == counts


@pytest.mark.parametrize("content", ['{"goodbye()": -1}', "[1, 2]", '{"goodbye()": 3'])
def test_read_targets_rejects_malformed_files(tmp_path, content):
    path = tmp_path / "targets.json"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(CorpusFormatError):
        read_targets(path)


def test_signature_rng_is_stable():
    a = signature_rng(3, "inform(name=X-name)").random(4)
    b = signature_rng(3, "inform(name=X-name)").random(4)
    c = signature_rng(3, "inform(food=X-food)").random(4)
    assert list(a) == list(b)
    assert list(a) != list(c)


def _two_uniques(lexicon, da_config):
    texts = ["Ananta je drahá restaurace .", "Ananta je opravdu drahá restaurace ."]
    instances = [
        _prepared("inform(name=Ananta,price_range=expensive)", t, lexicon, da_config) for t in texts
    ]
    return deduplicate(instances, da_config)


def test_expand_hits_targets_exactly(lexicon, da_config):
    uniques = _two_uniques(lexicon, da_config)
    (sig,) = uniques
    lm = train_lm([u.lm_tokens for u in uniques[sig]], order=3)
    result = expand(uniques, {sig: 25}, lm, lexicon, seed=7, config=da_config)
    assert len(result.instances) == 25
    assert len(result.review) == 23
    assert all(da_signature(inst.da, da_config) == sig for inst in result.instances)
    for inst in result.instances:
        matched = delexicalize_text(inst.text, inst.da, lexicon, da_config)
        assert not matched.missing
        assert tuple(matched.tokens) == inst.delex_text


def test_expand_equal_scores_split_evenly(lexicon, da_config):
    uniques = _two_uniques(lexicon, da_config)
    (sig,) = uniques

    class FlatLm:
        order = 1

        def logprob(self, word, history=()):
            return -1.0

    # two uniques with identical texts score the same
    group = uniques[sig]
    uniques = {sig: [group[0], UniqueText(group[0].delex_text, 1, group[0].instance)]}
    result = expand(uniques, {sig: 2000}, FlatLm(), lexicon, seed=1, config=da_config)
    copies = result.copies[sig]
    assert sum(copies.values()) == 1998
    assert 0.9 <= copies[0] / copies[1] <= 1.1


def test_expand_is_deterministic(lexicon, da_config):
    uniques = _two_uniques(lexicon, da_config)
    (sig,) = uniques
    lm = train_lm([u.lm_tokens for u in uniques[sig]], order=2)
    a = expand(uniques, {sig: 10}, lm, lexicon, seed=3, config=da_config)
    b = expand(uniques, {sig: 10}, lm, lexicon, seed=3, config=da_config)
    assert a.review == b.review
    assert [i.text for i in a.instances] == [i.text for i in b.instances]


def test_expand_errors(lexicon, da_config):
    uniques = _two_uniques(lexicon, da_config)
    (sig,) = uniques
    lm = train_lm([u.lm_tokens for u in uniques[sig]], order=2)
    with pytest.raises(TargetCountError) as excinfo:
        expand(uniques, {sig: 1}, lm, lexicon, seed=0, config=da_config)
    assert (excinfo.value.target, excinfo.value.n_unique) == (1, 2)
    with pytest.raises(EmptyCorpusError):
        expand(uniques, {"goodbye()": 3}, lm, lexicon, seed=0, config=da_config)


def test_expand_keeps_open_slot_values(lexicon, da_config):
    inst = _prepared('inform(name=Ananta,phone="+420-123")', "Ananta má telefon +420-123 .", lexicon, da_config)
    uniques = deduplicate([inst], da_config)
    (sig,) = uniques
    lm = train_lm([u.lm_tokens for u in uniques[sig]], order=2)
    result = expand(uniques, {sig: 6}, lm, lexicon, seed=2, config=da_config)
    assert len(result.instances) == 6
    names = {sf.form for value in lexicon.values_for_slot("name") for sf in lexicon.forms("name", value)}
    for copy in result.instances:
        assert copy.text[-2:] == ("+420-123", ".")
        assert " ".join(copy.text[:-4]) in names


def test_split_has_no_signature_overlap(da_config):
    instances = _synthetic_corpus(config=da_config)
    spec = split(instances, seed=1, config=da_config)
    parts = spec.partition(instances, da_config)
    sigs = {p: {da_signature(i.da, da_config) for i in parts[p]} for p in PARTS}
    assert not sigs["train"] & sigs["dev"]
    assert not sigs["train"] & sigs["test"]
    assert not sigs["dev"] & sigs["test"]
    assert sum(len(v) for v in parts.values()) == len(instances)


def test_split_pins_slotless_to_train(da_config):
    instances = _synthetic_corpus(config=da_config)
    spec = split(instances, seed=2, config=da_config)
    assert spec.assignment["goodbye()"] == "train"
    assert spec.assignment["?reqmore()"] == "train"


def test_split_covers_each_da_type(da_config):
    instances = _synthetic_corpus(config=da_config)
    spec = split(instances, seed=0, config=da_config)
    summary = spec.summary_frame()
    for part in PARTS:
        types = set().union(*(spec.da_types[s] for s in spec.signatures(part)))
        assert set(TYPES) <= types
    assert summary["instances"].sum() == len(instances)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_split_covers_types_of_secondary_items(seed, da_config):
    instances = _synthetic_corpus(config=da_config)
    for t in ["inform", "?confirm", "inform_no_match"]:
        delex = ("X-name", "?")
        instances.append(Instance(parse_da(f"{t}(name=v0)&?reqmore()", da_config), delex, delex_text=delex))
    spec = split(instances, seed=seed, config=da_config)
    assert spec.assignment["?reqmore()"] == "train"
    for part in PARTS:
        types = set().union(*(spec.da_types[s] for s in spec.signatures(part)))
        assert "?reqmore" in types
    assert spec.summary_frame().loc["test", "da_types"] >= len(TYPES) + 1


def test_split_proportions(da_config):
    instances = _synthetic_corpus(config=da_config)
    spec = split(instances, seed=4, config=da_config)
    share = spec.summary_frame()["share"]
    assert share["train"] == pytest.approx(0.6, abs=0.1)
    assert share["dev"] == pytest.approx(0.2, abs=0.1)
    assert share["test"] == pytest.approx(0.2, abs=0.1)


def test_split_is_deterministic(da_config):
    instances = _synthetic_corpus(config=da_config)
    first = split(instances, seed=5, config=da_config)
    assert first.assignment == split(instances, seed=5, config=da_config).assignment


def test_split_warns_when_type_is_too_small(da_config):
    instances = _synthetic_corpus(config=da_config)
    instances.append(Instance(parse_da("?request(area=v0)", da_config), ("X-area",), delex_text=("X-area",)))
    spec = split(instances, seed=0, config=da_config)
    assert any("?request" in w for w in spec.warnings)


def test_split_rejects_bad_ratios(da_config):
    with pytest.raises(ValueError):
        split(_synthetic_corpus(config=da_config), ratios=(3, 1), config=da_config)


def test_corpus_stats(lexicon, da_config, toy_records):
    instances = [
        _prepared(r["da"], r["text"], lexicon, da_config, r["lemmas"], r["tags"]) for r in toy_records
    ]
    stats = corpus_stats(instances, lexicon, da_config)
    assert stats.instances == 5
    assert stats.unique_signatures == 3
    assert stats.unique_delex_instances == 5
    assert stats.avg_lexicalizations == pytest.approx(avg_lexicalizations(lexicon, da_config))
    assert corpus_stats(instances, config=da_config).avg_lexicalizations is None
    frame = stats.to_frame()
    assert frame.loc[0, "instances"] == 5


def test_avg_lexicalizations(lexicon, da_config):
    # Ananta 5 distinct forms, two single-form names, 2 + 2 adjective forms
    assert avg_lexicalizations(lexicon, da_config) == pytest.approx((5 + 1 + 1 + 2 + 2) / 5)
