from __future__ import annotations

import numpy as np
import pytest

from morpho_nlg.delex import Instance
from morpho_nlg.dialogue_acts import da_indicators, parse_da
from morpho_nlg.exceptions import EmptyCorpusError
from morpho_nlg.generator import Candidate
from morpho_nlg.neural import EOS, Vocabulary
from morpho_nlg.reranker import Reranker, RerankerConfig, rerank, reranker_classify, train_reranker

FULL = frozenset({"inform", "inform|name|X-name"})


def _candidates():
    return [
        Candidate(["X-name", "je", "tady", EOS], -1.0, indicators=frozenset({"inform"})),
        Candidate(["X-name", "je", "restaurace", EOS], -2.0, indicators=FULL),
        Candidate(["X-food", "kuchyně", EOS], -0.5, indicators=frozenset({"inform", "inform|food|X-food"})),
    ]


def test_rerank_by_penalty_then_logprob(da_config):
    ranked = rerank(_candidates(), parse_da("inform(name=Ananta)", da_config), da_config=da_config)
    assert [c.logprob for c in ranked] == [-2.0, -1.0, -0.5]
    assert [c.penalty for c in ranked] == [0, 1, 2]


def test_rerank_weighted_sort_is_stable(da_config):
    ranked = rerank(_candidates(), parse_da("inform(name=Ananta)", da_config), da_config=da_config,
                    penalty_weight=1.0)
    # the first two tie at -2.0 and keep their beam order
    assert [c.logprob for c in ranked] == [-1.0, -2.0, -0.5]


def _reranker(indicators, seed=0):
    config = RerankerConfig(embedding_size=3, cell_size=4)
    return Reranker.initialize(config, Vocabulary(["X-name", "je", "tady"]), indicators, seed)


def test_classify_thresholds_at_one_half():
    reranker = _reranker(["inform", "inform|name|X-name"])
    reranker.params["cls.W"][:] = 0.0
    reranker.params["cls.b"][:] = [5.0, -5.0]
    assert reranker_classify(reranker, ["X-name", "je", "tady"]) == frozenset({"inform"})
    with pytest.raises(ValueError):
        reranker.classify([])


def test_rerank_classifies_candidates_without_indicators(da_config):
    reranker = _reranker(sorted(FULL))
    reranker.params["cls.W"][:] = 0.0
    reranker.params["cls.b"][:] = 5.0
    candidates = [Candidate([EOS], -0.1), Candidate(["X-name", "je", "tady", EOS], -3.0)]
    ranked = rerank(candidates, parse_da("inform(name=Ananta)", da_config), reranker, da_config)
    assert [c.penalty for c in ranked] == [0, 2]
    assert ranked[0].indicators == FULL
    # an empty output expresses nothing
    assert ranked[1].indicators == frozenset()
    with pytest.raises(ValueError):
        rerank(candidates, parse_da("inform(name=Ananta)", da_config))


def test_save_load(tmp_path):
    reranker = _reranker(sorted(FULL), seed=4)
    path = tmp_path / "reranker.ckpt"
    reranker.save(path)
    loaded = Reranker.load(path)
    assert loaded.params.equal(reranker.params)
    assert loaded.indicators == reranker.indicators
    assert loaded.config == reranker.config
    np.testing.assert_array_equal(loaded.forward(["je", "tady"])[0], reranker.forward(["je", "tady"])[0])


def test_config_validation():
    with pytest.raises(ValueError):
        RerankerConfig(cell_size=0).validate()
    with pytest.raises(ValueError):
        RerankerConfig(validation_start=0).validate()


TRAIN = [
    ("inform(name=Ananta,food=Turkish)", "X-name nabízí X-food kuchyni ."),
    ("inform(name=Ananta,price_range=expensive)", "X-name je X-price_range restaurace ."),
    ("inform(name=Ananta,area=centre)", "X-name je v oblasti X-area ."),
    ("?request(food)", "jakou kuchyni hledáte ?"),
    ("goodbye()", "na shledanou ."),
    ("?reqmore()", "mohu vám ještě pomoci ?"),
]


def _instances(da_config):
    return [Instance(parse_da(da, da_config), tuple(t.split()), delex_text=tuple(t.split())) for da, t in TRAIN]


def test_training_log_and_inventory(da_config):
    instances = _instances(da_config)
    config = RerankerConfig(embedding_size=4, cell_size=4, passes=3, validation_start=2)
    reranker, log = train_reranker(config, instances, instances[:2], seed=1, da_config=da_config)
    frame = log.to_frame()
    assert list(frame["pass"]) == [1, 2, 3]
    assert np.isnan(frame["dev_score"][0])
    assert frame["kept"][1]
    assert set(reranker.indicators) == set().union(*(da_indicators(i.da, da_config) for i in instances))
    with pytest.raises(EmptyCorpusError):
        train_reranker(config, [], [], da_config=da_config)


@pytest.mark.slow
def test_reranker_learns_training_indicators(da_config):
    instances = _instances(da_config)
    config = RerankerConfig(embedding_size=8, cell_size=16, learning_rate=0.01, batch_size=1, passes=200)
    reranker, _ = train_reranker(config, instances, [], seed=0, da_config=da_config)
    for inst in instances:
        assert reranker.classify(list(inst.delex_text)) == da_indicators(inst.da, da_config)
