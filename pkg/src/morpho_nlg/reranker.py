"""Semantic reranker: a bidirectional LSTM classifier of the DA indicators a candidate output expresses."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import asdict, dataclass, replace

import numpy as np

from .context import DAConfig
from .delex import Instance
from .dialogue_acts import DialogueAct, da_indicators
from .exceptions import EmptyCorpusError, NonFiniteError
from .generator import Candidate, OutputMode, target_tokens
from .neural import (
    AdamState,
    ModelParams,
    Vocabulary,
    accumulate,
    adam_step,
    clip_global_norm,
    embedding_backward,
    init_embedding,
    init_linear,
    init_lstm,
    load_checkpoint,
    lstm_step,
    lstm_step_backward,
    save_checkpoint,
    sigmoid,
    sigmoid_bce,
)
from .training_log import TrainingLog

logger = logging.getLogger(__name__)

THRESHOLD = 0.5


@dataclass
class RerankerConfig:
    embedding_size: int = 50
    cell_size: int = 50
    learning_rate: float = 0.001
    batch_size: int = 20
    passes: int = 100
    validation_start: int = 10
    dev_error_weight: float = 10.0
    clip_norm: float = 5.0
    init_scale: float = 0.1
    min_token_freq: int = 1

    def validate(self):
        for name in ("embedding_size", "cell_size", "batch_size", "passes", "min_token_freq"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.learning_rate < 0 or self.dev_error_weight < 0 or self.validation_start < 1:
            raise ValueError("learning_rate and dev_error_weight must be non-negative, validation_start >= 1")
        return self

    def to_dict(self):
        return asdict(self)


class Reranker:
    def __init__(self, config: RerankerConfig, params: ModelParams, vocab: Vocabulary, indicators: Sequence[str]):
        self.config = config
        self.params = params
        self.vocab = vocab
        self.indicators = list(indicators)

    @classmethod
    def initialize(cls, config: RerankerConfig, vocab: Vocabulary, indicators: Sequence[str], seed: int):
        rng = np.random.default_rng(seed)
        e, h, s = config.embedding_size, config.cell_size, config.init_scale
        params = ModelParams(seed=seed)
        init_embedding(params, rng, "emb", len(vocab), e, s)
        init_lstm(params, rng, "fwd", e, h, s)
        init_lstm(params, rng, "bwd", e, h, s)
        init_linear(params, rng, "cls", 2 * h, len(indicators), s)
        return cls(config, params, vocab, indicators)

    def forward(self, tokens: Sequence[str]):
        """Indicator logits and the cache needed for the backward pass."""
        if not tokens:
            raise ValueError("Cannot classify an empty token list")
        p = self.params
        hidden = self.config.cell_size
        ids = np.array(self.vocab.encode(tokens), dtype=np.int64)
        xs = p["emb"][ids]
        h = c = np.zeros(hidden)
        fwd = []
        for x in xs:
            h, c, cache = lstm_step(p["fwd.W"], p["fwd.b"], x, h, c)
            fwd.append(cache)
        h_fwd = h
        h = c = np.zeros(hidden)
        bwd = []
        for x in xs[::-1]:
            h, c, cache = lstm_step(p["bwd.W"], p["bwd.b"], x, h, c)
            bwd.append(cache)
        features = np.concatenate([h_fwd, h])
        logits = p["cls.W"] @ features + p["cls.b"]
        return logits, (ids, fwd, bwd, features)

    def loss_and_grads(self, tokens, targets: np.ndarray):
        logits, (ids, fwd, bwd, features) = self.forward(tokens)
        loss, dlogits = sigmoid_bce(logits, targets)
        p = self.params
        hidden = self.config.cell_size
        grads = p.zeros_like()
        grads["cls.W"] += np.outer(dlogits, features)
        grads["cls.b"] += dlogits
        dfeatures = p["cls.W"].T @ dlogits
        dxs = np.zeros((len(ids), p["emb"].shape[1]))
        for name, caches, dh, order in (
            ("fwd", fwd, dfeatures[:hidden], range(len(ids) - 1, -1, -1)),
            ("bwd", bwd, dfeatures[hidden:], range(len(ids))),
        ):
            dc = np.zeros(hidden)
            for step, position in zip(reversed(range(len(caches))), order):
                dx, dh, dc, dW, db = lstm_step_backward(dh, dc, p[f"{name}.W"], caches[step])
                grads[f"{name}.W"] += dW
                grads[f"{name}.b"] += db
                dxs[position] += dx
        grads["emb"] += embedding_backward(dxs, ids, p["emb"].shape)
        return loss, grads

    def classify(self, tokens: Sequence[str]) -> frozenset[str]:
        logits, _ = self.forward(tokens)
        probs = sigmoid(logits)
        return frozenset(ind for ind, prob in zip(self.indicators, probs) if prob >= THRESHOLD)

    def target_vector(self, indicators) -> np.ndarray:
        return np.array([1.0 if ind in indicators else 0.0 for ind in self.indicators])

    def save(self, path):
        metadata = {
            "kind": "reranker",
            "config": self.config.to_dict(),
            "vocab": self.vocab.itos,
            "indicators": self.indicators,
        }
        save_checkpoint(self.params, path, metadata)

    @classmethod
    def load(cls, path) -> Reranker:
        params = load_checkpoint(path)
        meta = params.metadata
        return cls(RerankerConfig(**meta["config"]), params, Vocabulary(meta["vocab"], ()), meta["indicators"])


def reranker_classify(reranker: Reranker, tokens: Sequence[str]) -> frozenset[str]:
    """Indicators whose sigmoid output is at least 0.5."""
    return reranker.classify(tokens)


def rerank(candidates: Sequence[Candidate], input_da: DialogueAct, reranker: Reranker | None = None,
           da_config: DAConfig | None = None, penalty_weight: float | None = None) -> list[Candidate]:
    """Order candidates by the number of indicator differences against ``input_da``.

    Candidates that already carry indicators are not reclassified. The default order is
    (penalty, then log-probability); with ``penalty_weight`` it is ``logprob - weight * penalty``.
    Sorting is stable.
    """
    expected = da_indicators(input_da, da_config)
    scored = []
    for cand in candidates:
        indicators = cand.indicators
        if indicators is None:
            if reranker is None:
                raise ValueError("Candidates without indicators need a reranker")
            indicators = reranker.classify(cand.output) if cand.output else frozenset()
        scored.append(replace(cand, indicators=indicators, penalty=len(indicators ^ expected)))
    if penalty_weight is None:
        return sorted(scored, key=lambda c: (c.penalty, -c.logprob))
    return sorted(scored, key=lambda c: -(c.logprob - penalty_weight * c.penalty))


def _error_rate(reranker: Reranker, examples) -> float:
    """Share of misclassified indicator outputs."""
    if not examples:
        return 0.0
    wrong = 0
    for tokens, target in examples:
        logits, _ = reranker.forward(tokens)
        wrong += int(np.sum((sigmoid(logits) >= THRESHOLD) != (target > 0.5)))
    return wrong / (len(examples) * max(1, len(reranker.indicators)))


def train_reranker(config: RerankerConfig, train: Sequence[Instance], dev: Sequence[Instance], seed: int = 0,
                   mode: OutputMode = OutputMode.WORD_FORMS, da_config: DAConfig | None = None,
                   log: TrainingLog | None = None):
    """Train on the gold outputs of ``train``.

    From pass ``validation_start`` on, parameters minimizing train error + weight x dev error are kept.
    """
    config.validate()
    if not train:
        raise EmptyCorpusError("reranker training set")
    log = log if log is not None else TrainingLog(stage="reranker")

    train_tokens = [target_tokens(inst, mode) for inst in train]
    train_inds = [da_indicators(inst.da, da_config) for inst in train]
    inventory = sorted(set().union(*train_inds))
    vocab = Vocabulary.build(train_tokens, config.min_token_freq)
    reranker = Reranker.initialize(config, vocab, inventory, seed)
    train_examples = [(t, reranker.target_vector(i)) for t, i in zip(train_tokens, train_inds)]
    dev_examples = [
        (target_tokens(inst, mode), reranker.target_vector(da_indicators(inst.da, da_config))) for inst in dev
    ]
    logger.info("Training reranker on %d instances, %d indicators", len(train_examples), len(inventory))

    rng = np.random.default_rng(seed)
    adam = AdamState.for_params(reranker.params, config.learning_rate)
    best_cost = np.inf
    best_params = reranker.params.copy()
    for pass_index in range(1, config.passes + 1):
        order = rng.permutation(len(train_examples))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grads = reranker.params.zeros_like()
            for i in batch:
                loss, g = reranker.loss_and_grads(*train_examples[int(i)])
                total += loss
                accumulate(grads, g)
            for g in grads.values():
                g /= len(batch)
            clip_global_norm(grads, config.clip_norm)
            adam_step(adam, reranker.params, grads)
        mean_loss = total / len(train_examples)
        if not np.isfinite(mean_loss):
            raise NonFiniteError(f"reranker training loss at pass {pass_index}")

        kept = False
        cost = np.nan
        if pass_index >= config.validation_start:
            dev_error = _error_rate(reranker, dev_examples)
            cost = _error_rate(reranker, train_examples) + config.dev_error_weight * dev_error
            if cost < best_cost:
                best_cost = cost
                best_params = reranker.params.copy()
                kept = True
        log.append(pass_index, mean_loss, cost, kept)

    if best_cost == np.inf:
        best_params = reranker.params.copy()
    reranker.params = best_params
    logger.info("Reranker trained for %d passes, best validation cost %.4f", config.passes, best_cost)
    return reranker, log
