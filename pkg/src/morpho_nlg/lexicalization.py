"""Placeholder lexicalization: candidate forms, selection strategies and the bidirectional LSTM LM."""

from __future__ import annotations

import enum
import logging
import math
from collections import Counter
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from .context import DAConfig, placeholder_slot
from .delex import Instance, delexicalize_text, value_forms
from .dialogue_acts import DialogueAct, delexicalize_da
from .exceptions import EmptyCorpusError, MissingAssignmentError, NonFiniteError
from .generator import OutputMode
from .morphology import FormLexicon, MorphTag, SurfaceForm, filter_forms, is_tag, parse_tag
from .neural import (
    EOS,
    GO,
    AdamState,
    ModelParams,
    Vocabulary,
    accumulate,
    adam_step,
    clip_global_norm,
    init_embedding,
    init_linear,
    init_lstm,
    load_checkpoint,
    log_softmax,
    lstm_step,
    lstm_step_backward,
    save_checkpoint,
    softmax_xent,
)
from .training_log import TrainingLog

logger = logging.getLogger(__name__)

DIRECTIONS = ("fwd", "bwd")


@dataclass
class LmConfig:
    embedding_size: int = 50
    cell_size: int = 50
    learning_rate: float = 0.001
    batch_size: int = 20
    max_passes: int = 50
    min_token_freq: int = 1
    merge_multiword: bool = True
    clip_norm: float = 5.0
    init_scale: float = 0.1

    def validate(self):
        for name in ("embedding_size", "cell_size", "batch_size", "max_passes", "min_token_freq"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        return self

    def to_dict(self):
        return asdict(self)


class BiRnnLm:
    """Forward and backward LSTM language models over one vocabulary."""

    def __init__(self, config: LmConfig, params: ModelParams, vocab: Vocabulary):
        self.config = config
        self.params = params
        self.vocab = vocab

    @classmethod
    def initialize(cls, config: LmConfig, vocab: Vocabulary, seed: int, zero: bool = False):
        rng = np.random.default_rng(seed)
        e, h, s = config.embedding_size, config.cell_size, config.init_scale
        params = ModelParams(seed=seed)
        for d in DIRECTIONS:
            init_embedding(params, rng, f"{d}.emb", len(vocab), e, s)
            init_lstm(params, rng, f"{d}.lstm", e, h, s)
            init_linear(params, rng, f"{d}.out", h, len(vocab), s)
        if zero:
            for value in params.arrays.values():
                value[...] = 0.0
        return cls(config, params, vocab)

    def _step(self, direction, token_id, h, c):
        p = self.params
        x = p[f"{direction}.emb"][token_id]
        h, c, cache = lstm_step(p[f"{direction}.lstm.W"], p[f"{direction}.lstm.b"], x, h, c)
        logits = p[f"{direction}.out.W"] @ h + p[f"{direction}.out.b"]
        return logits, h, c, cache

    def _units(self, form: str) -> list[str]:
        return [form] if self.config.merge_multiword else form.split()

    def state_after(self, direction: str, context: Sequence[str]):
        """``(h, c, log-probabilities of the next token)`` after reading the start marker and ``context``."""
        h = c = np.zeros(self.config.cell_size)
        logits = None
        for token_id in [self.vocab.index(GO), *self.vocab.encode(context)]:
            logits, h, c, _ = self._step(direction, token_id, h, c)
        return h, c, log_softmax(logits)

    def continuation_logprob(self, direction: str, state, units: Sequence[str]) -> float:
        h, c, logp = state
        total = 0.0
        for k, unit in enumerate(units):
            token_id = self.vocab.index(unit)
            total += float(logp[token_id])
            if k + 1 < len(units):
                logits, h, c, _ = self._step(direction, token_id, h, c)
                logp = log_softmax(logits)
        return total

    def form_scores(self, left: Sequence[str], right: Sequence[str], forms: Sequence[str]) -> list[float]:
        """ln p_fwd(form | left) + ln p_bwd(form | right) for each candidate form."""
        fwd_state = self.state_after("fwd", left)
        bwd_state = self.state_after("bwd", list(reversed(right)))
        scores = []
        for form in forms:
            units = self._units(form)
            scores.append(
                self.continuation_logprob("fwd", fwd_state, units)
                + self.continuation_logprob("bwd", bwd_state, list(reversed(units)))
            )
        return scores

    def next_prob(self, direction: str, context: Sequence[str], token: str) -> float:
        return math.exp(self.state_after(direction, context)[2][self.vocab.index(token)])

    def loss_and_grads(self, direction: str, tokens: Sequence[str]):
        p = self.params
        inputs = [self.vocab.index(GO), *self.vocab.encode(tokens)]
        targets = [*self.vocab.encode(tokens), self.vocab.index(EOS)]
        hidden = self.config.cell_size
        h = c = np.zeros(hidden)
        steps = []
        loss = 0.0
        for x_id, y in zip(inputs, targets):
            logits, h, c, cache = self._step(direction, x_id, h, c)
            step_loss, dlogits = softmax_xent(logits, y)
            loss += step_loss
            steps.append((x_id, h, dlogits, cache))

        grads = {name: np.zeros_like(value) for name, value in p.items() if name.startswith(f"{direction}.")}
        dh = np.zeros(hidden)
        dc = np.zeros(hidden)
        for x_id, h_t, dlogits, cache in reversed(steps):
            grads[f"{direction}.out.W"] += np.outer(dlogits, h_t)
            grads[f"{direction}.out.b"] += dlogits
            dh = dh + p[f"{direction}.out.W"].T @ dlogits
            dx, dh, dc, dW, db = lstm_step_backward(dh, dc, p[f"{direction}.lstm.W"], cache)
            grads[f"{direction}.lstm.W"] += dW
            grads[f"{direction}.lstm.b"] += db
            grads[f"{direction}.emb"][x_id] += dx
        return loss, len(targets), grads

    def perplexity(self, corpus: Sequence[Sequence[str]]) -> float:
        """Mean of the two directions' per-token perplexities."""
        values = []
        for direction in DIRECTIONS:
            total = 0.0
            n = 0
            for tokens in corpus:
                seq = tokens if direction == "fwd" else list(reversed(tokens))
                h = c = np.zeros(self.config.cell_size)
                for x_id, y in zip([self.vocab.index(GO), *self.vocab.encode(seq)],
                                   [*self.vocab.encode(seq), self.vocab.index(EOS)]):
                    logits, h, c, _ = self._step(direction, x_id, h, c)
                    total -= float(log_softmax(logits)[y])
                    n += 1
            values.append(math.exp(total / n) if n else float("inf"))
        return float(np.mean(values))

    def save(self, path):
        metadata = {"kind": "bi_lm", "config": self.config.to_dict(), "vocab": self.vocab.itos}
        save_checkpoint(self.params, path, metadata)

    @classmethod
    def load(cls, path) -> BiRnnLm:
        params = load_checkpoint(path)
        meta = params.metadata
        return cls(LmConfig(**meta["config"]), params, Vocabulary(meta["vocab"], ()))


def merged_tokens(inst: Instance, lex: FormLexicon, da_config: DAConfig | None = None, merge: bool = True):
    """The instance's original text with each slot value mention as a single token."""
    if not merge:
        return list(inst.text)
    result = delexicalize_text(inst.text, inst.da, lex, da_config)
    return result.project(list(inst.text), lambda m, span: " ".join(span))


def train_bi_lm(corpus: Sequence[Sequence[str]], config: LmConfig, dev: Sequence[Sequence[str]] | None = None,
                seed: int = 0, log: TrainingLog | None = None):
    """Train both directions on next-token cross-entropy; keeps the best dev-perplexity parameters."""
    config.validate()
    corpus = [list(s) for s in corpus if s]
    if not corpus:
        raise EmptyCorpusError("lexicalizer LM corpus")
    dev = [list(s) for s in dev if s] if dev else corpus
    log = log if log is not None else TrainingLog(stage="lexicalizer-lm")

    vocab = Vocabulary.build(corpus, config.min_token_freq)
    lm = BiRnnLm.initialize(config, vocab, seed)
    rng = np.random.default_rng(seed)
    adam = AdamState.for_params(lm.params, config.learning_rate)
    best = lm.perplexity(dev)
    best_params = lm.params.copy()
    logger.info("Training lexicalizer LM on %d sentences, vocabulary %d (initial dev perplexity %.2f)",
                len(corpus), len(vocab), best)

    for pass_index in range(1, config.max_passes + 1):
        order = rng.permutation(len(corpus))
        total = 0.0
        n_tokens = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grads = lm.params.zeros_like()
            for i in batch:
                tokens = corpus[int(i)]
                for direction in DIRECTIONS:
                    seq = tokens if direction == "fwd" else tokens[::-1]
                    loss, n, g = lm.loss_and_grads(direction, seq)
                    total += loss
                    n_tokens += n
                    accumulate(grads, g)
            for g in grads.values():
                g /= len(batch)
            clip_global_norm(grads, config.clip_norm)
            adam_step(adam, lm.params, grads)
        mean_loss = total / n_tokens
        if not np.isfinite(mean_loss):
            raise NonFiniteError(f"lexicalizer LM loss at pass {pass_index}")
        ppl = lm.perplexity(dev)
        kept = ppl < best
        if kept:
            best = ppl
            best_params = lm.params.copy()
        log.append(pass_index, mean_loss, ppl, kept)

    lm.params = best_params
    logger.info("Lexicalizer LM trained, best dev perplexity %.2f", best)
    return lm, log


class LexStrategyKind(str, enum.Enum):
    RANDOM = "random"
    MOST_FREQUENT = "most_frequent"
    RNN_LM = "rnn_lm"


@dataclass
class LexStrategy:
    kind: LexStrategyKind
    seed: int = 0
    lm: BiRnnLm | None = None
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.kind = LexStrategyKind(self.kind)
        if self.kind is LexStrategyKind.RNN_LM and self.lm is None:
            raise ValueError("The rnn_lm strategy needs a trained language model")
        self.rng = np.random.default_rng(self.seed)


def candidate_forms(lex: FormLexicon, slot: str, value: str, tag_hint: MorphTag | None = None,
                    config: DAConfig | None = None) -> list[SurfaceForm]:
    """All forms of a slot value, narrowed by ``tag_hint`` with exact/coarse/any backoff."""
    forms = value_forms(lex, slot, value, config)
    return filter_forms(forms, tag_hint) if tag_hint is not None else forms


def select_form(strategy: LexStrategy, left: Sequence[str], right: Sequence[str],
                candidates: Sequence[SurfaceForm]) -> SurfaceForm:
    if not candidates:
        raise ValueError("No candidate forms to select from")
    if len(candidates) == 1:
        return candidates[0]
    if strategy.kind is LexStrategyKind.RANDOM:
        return candidates[int(strategy.rng.integers(len(candidates)))]
    if strategy.kind is LexStrategyKind.MOST_FREQUENT:
        return candidates[max(range(len(candidates)), key=lambda i: (candidates[i].frequency, -i))]
    scores = strategy.lm.form_scores(left, right, [sf.form for sf in candidates])
    return candidates[max(range(len(candidates)), key=lambda i: (scores[i], candidates[i].frequency, -i))]


def lexicalize_output(tokens: Sequence[str], da: DialogueAct, lex: FormLexicon, strategy: LexStrategy,
                      mode: OutputMode = OutputMode.WORD_FORMS, da_config: DAConfig | None = None) -> list[str]:
    """Fill placeholders left to right with forms of the DA's values.

    In lemma-tag mode a tag right after a placeholder is its hint and is dropped from the output.
    The k-th placeholder of a slot takes the slot's k-th DA value (the last one when exhausted).
    """
    mode = OutputMode(mode)
    _, values = delexicalize_da(da, da_config)
    items: list[tuple[str, MorphTag | None]] = []
    i = 0
    while i < len(tokens):
        token = tokens[i]
        hint = None
        if placeholder_slot(token) is not None and mode is OutputMode.LEMMA_TAG:
            if i + 1 < len(tokens) and is_tag(tokens[i + 1]):
                hint = parse_tag(tokens[i + 1])
                i += 1
        items.append((token, hint))
        i += 1

    missing = sorted({s for s in (placeholder_slot(t) for t, _ in items) if s is not None and s not in values})
    if missing:
        raise MissingAssignmentError(missing)

    merge = strategy.lm.config.merge_multiword if strategy.lm is not None else True
    used: Counter = Counter()
    context: list[str] = []
    out: list[str] = []
    for k, (token, hint) in enumerate(items):
        slot = placeholder_slot(token)
        if slot is None:
            context.append(token)
            out.append(token)
            continue
        slot_values = values[slot]
        value = slot_values[min(used[slot], len(slot_values) - 1)]
        used[slot] += 1
        candidates = candidate_forms(lex, slot, value, hint, da_config)
        right = [t for t, _ in items[k + 1 :]]
        sf = select_form(strategy, context, right, candidates)
        context.extend([sf.form] if merge else sf.tokens)
        out.extend(sf.tokens)
    return out


def form_frequencies(
    instances: Sequence[Instance], lex: FormLexicon, da_config: DAConfig | None = None
) -> Counter:
    """``(slot, value, form)`` counts of the forms matched in the instances' texts."""
    counts: Counter = Counter()
    for inst in instances:
        for m in delexicalize_text(inst.text, inst.da, lex, da_config).matches:
            counts[(m.slot, m.value, m.form.form)] += 1
    return counts
