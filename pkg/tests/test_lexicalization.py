from __future__ import annotations

import pytest

from morpho_nlg.delex import Instance
from morpho_nlg.dialogue_acts import parse_da
from morpho_nlg.exceptions import MissingAssignmentError, UnknownSlotValueError
from morpho_nlg.lexicalization import (
    BiRnnLm,
    LexStrategy,
    LexStrategyKind,
    LmConfig,
    candidate_forms,
    form_frequencies,
    lexicalize_output,
    merged_tokens,
    select_form,
    train_bi_lm,
)
from morpho_nlg.morphology import MorphTag
from morpho_nlg.neural import Vocabulary

MOST_FREQUENT = LexStrategy(LexStrategyKind.MOST_FREQUENT)


def test_candidate_forms(lexicon, da_config):
    instrumental = candidate_forms(lexicon, "name", "Ananta", MorphTag.pattern(case="7"))
    assert [sf.form for sf in instrumental] == ["Anantou"]
    assert len(candidate_forms(lexicon, "name", "Ananta")) == 6
    (count,) = candidate_forms(lexicon, "count", "3", config=da_config)
    assert count.form == "3"
    with pytest.raises(UnknownSlotValueError):
        candidate_forms(lexicon, "name", "Nowhere", config=da_config)


def test_select_most_frequent(lexicon):
    counted = lexicon.with_frequencies({("price_range", "expensive", "drahé"): 4})
    candidates = counted.forms("price_range", "expensive")
    assert select_form(MOST_FREQUENT, [], [], candidates).form == "drahé"
    # ties go to the first form
    assert select_form(MOST_FREQUENT, [], [], lexicon.forms("price_range", "expensive")).form == "drahá"
    with pytest.raises(ValueError):
        select_form(MOST_FREQUENT, [], [], [])


def test_select_random_is_seeded(lexicon):
    candidates = lexicon.forms("name", "Ananta")
    picks = [[select_form(s, [], [], candidates).form for _ in range(10)]
             for s in (LexStrategy("random", seed=2), LexStrategy("random", seed=2))]
    assert picks[0] == picks[1]


def test_rnn_lm_strategy_needs_a_model():
    with pytest.raises(ValueError):
        LexStrategy(LexStrategyKind.RNN_LM)


def test_lexicalize_word_forms(lexicon, da_config):
    da = parse_da('inform(name="Green Spirit",price_range=expensive)', da_config)
    out = lexicalize_output(["X-name", "je", "X-price_range", "restaurace", "."], da, lexicon, MOST_FREQUENT,
                            da_config=da_config)
    assert out == ["Green", "Spirit", "je", "drahá", "restaurace", "."]


def test_lexicalize_lemma_tag_hints(lexicon, da_config):
    da = parse_da("inform(name=Ananta,food=Turkish)", da_config)
    tokens = ["V", "X-name", "NNFS6-----A----", "vaří", "X-food", "AAFS4----1A----", "kuchyni"]
    out = lexicalize_output(tokens, da, lexicon, MOST_FREQUENT, mode="lemma_tag", da_config=da_config)
    assert out == ["V", "Anantě", "vaří", "tureckou", "kuchyni"]


def test_lexicalize_repeated_slot(lexicon, da_config):
    da = parse_da('inform(name=Ananta,name="Green Spirit")', da_config)
    out = lexicalize_output(["X-name", "nebo", "X-name", "a", "X-name"], da, lexicon, MOST_FREQUENT,
                            da_config=da_config)
    # the last value is reused once the slot's values run out
    assert out == ["Ananta", "nebo", "Green", "Spirit", "a", "Green", "Spirit"]


def test_lexicalize_open_slot_value(lexicon, da_config):
    da = parse_da('inform(name=Ananta,phone="+420-123")', da_config)
    out = lexicalize_output(["X-name", "má", "telefon", "X-phone"], da, lexicon, LexStrategy("random", seed=0),
                            da_config=da_config)
    assert out[0] in {sf.form for sf in lexicon.forms("name", "Ananta")}
    assert out[1:] == ["má", "telefon", "+420-123"]
    (phone,) = candidate_forms(lexicon, "phone", "+420-123", config=da_config)
    assert phone.form == "+420-123"


def test_lexicalize_missing_value(lexicon, da_config):
    da = parse_da("inform(name=Ananta)", da_config)
    with pytest.raises(MissingAssignmentError) as excinfo:
        lexicalize_output(["X-name", "X-food"], da, lexicon, MOST_FREQUENT, da_config=da_config)
    assert excinfo.value.slots == ["food"]


def _instances(records, config):
    return [Instance(parse_da(r["da"], config), tuple(r["text"].split())) for r in records]


def test_form_frequencies(lexicon, da_config, toy_records):
    counts = form_frequencies(_instances(toy_records, da_config), lexicon, da_config)
    assert counts[("name", "Ananta", "Anantě")] == 1
    assert counts[("price_range", "expensive", "drahá")] == 1
    assert counts[("food", "Turkish", "tureckou")] == 2
    assert sum(counts.values()) == 8


def test_merged_tokens(lexicon, da_config, toy_records):
    inst = _instances(toy_records, da_config)[2]
    assert merged_tokens(inst, lexicon, da_config) == ["Café Savoy", "je", "drahé", "bistro", "."]
    assert merged_tokens(inst, lexicon, da_config, merge=False)[:2] == ["Café", "Savoy"]


def test_zero_lm_is_uniform_and_falls_back_on_frequency(lexicon, da_config):
    vocab = Vocabulary(["Ananta", "je", "drahá", "drahé"])
    lm = BiRnnLm.initialize(LmConfig(embedding_size=4, cell_size=4), vocab, seed=0, zero=True)
    assert lm.next_prob("fwd", ["Ananta"], "je") == pytest.approx(1 / len(vocab))
    scores = lm.form_scores(["Ananta", "je"], ["."], ["drahá", "drahé"])
    assert scores[0] == pytest.approx(scores[1])
    counted = lexicon.with_frequencies({("price_range", "expensive", "drahé"): 1})
    strategy = LexStrategy(LexStrategyKind.RNN_LM, lm=lm)
    choice = select_form(strategy, ["Ananta", "je"], ["."], counted.forms("price_range", "expensive"))
    assert choice.form == "drahé"


def test_bi_lm_save_load(tmp_path):
    corpus = [["Ananta", "je", "drahá", "restaurace", "."]]
    lm, log = train_bi_lm(corpus, LmConfig(embedding_size=4, cell_size=4, max_passes=2), seed=3)
    assert len(log) == 2
    path = tmp_path / "bi_lm.ckpt"
    lm.save(path)
    loaded = BiRnnLm.load(path)
    assert loaded.params.equal(lm.params)
    assert loaded.vocab.itos == lm.vocab.itos
    assert loaded.perplexity(corpus) == pytest.approx(lm.perplexity(corpus))


AGREEMENT_CORPUS = [
    "Ananta|je|drahá|restaurace|.",
    "Green Spirit|je|drahá|restaurace|.",
    "Café Savoy|je|drahé|bistro|.",
    "Ananta|je|drahé|bistro|.",
]


@pytest.mark.slow
def test_lm_picks_agreeing_form(lexicon, da_config):
    corpus = [s.split("|") for s in AGREEMENT_CORPUS]
    config = LmConfig(embedding_size=8, cell_size=16, learning_rate=0.02, batch_size=1, max_passes=60)
    lm, _ = train_bi_lm(corpus, config, seed=0)
    # most-frequent lexicalization always says "drahá"
    counted = lexicon.with_frequencies({("price_range", "expensive", "drahá"): 3,
                                        ("price_range", "expensive", "drahé"): 1})
    da = parse_da("inform(name=Ananta,price_range=expensive)", da_config)
    rnn = LexStrategy(LexStrategyKind.RNN_LM, lm=lm)
    bistro = ["X-name", "je", "X-price_range", "bistro", "."]
    restaurace = ["X-name", "je", "X-price_range", "restaurace", "."]
    assert lexicalize_output(bistro, da, counted, rnn, da_config=da_config)[2] == "drahé"
    assert lexicalize_output(restaurace, da, counted, rnn, da_config=da_config)[2] == "drahá"
    assert lexicalize_output(bistro, da, counted, MOST_FREQUENT, da_config=da_config)[2] == "drahá"
