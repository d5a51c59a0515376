"""Attention seq2seq generator: bidirectional LSTM encoder over DA triples, LSTM decoder, beam search.

Outputs are either delexicalized word forms or interleaved lemma/tag tokens, which
``realize_lemma_tags`` inflects with a morphological dictionary.
"""

from __future__ import annotations

import enum
import logging
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from .context import DAConfig, placeholder_slot
from .delex import Instance
from .dialogue_acts import DialogueAct, da_to_triples
from .evaluation import EvalPair, bleu
from .exceptions import EmptyCorpusError, EmptyDialogueActError, LengthMismatchError, NonFiniteError
from .morphology import ANY_TAG, MorphDictionary, MorphTag, generate_form, is_tag, parse_tag
from .neural import (
    EOS,
    GO,
    AdamState,
    ModelParams,
    Vocabulary,
    accumulate,
    adam_step,
    attend,
    attend_backward,
    clip_global_norm,
    dropout_mask,
    embedding_backward,
    init_attention,
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


class OutputMode(str, enum.Enum):
    WORD_FORMS = "word_forms"
    LEMMA_TAG = "lemma_tag"


class InputMode(str, enum.Enum):
    DELEXICALIZED = "delexicalized"
    LEXICALIZED = "lexicalized"


class PatienceRule(str, enum.Enum):
    TOP_K = "top_k"
    MAX = "max"


@dataclass
class GeneratorConfig:
    mode: OutputMode = OutputMode.WORD_FORMS
    input_mode: InputMode = InputMode.DELEXICALIZED
    embedding_size: int = 200
    cell_size: int = 200
    attention_size: int = 200
    learning_rate: float = 0.005
    dropout: float = 0.5
    batch_size: int = 20
    min_passes: int = 50
    max_passes: int = 1000
    patience: int = 50
    top_k: int = 10
    patience_rule: PatienceRule = PatienceRule.TOP_K
    beam_size: int = 20
    max_output_len: int = 50
    min_token_freq: int = 2
    clip_norm: float = 5.0
    init_scale: float = 0.1

    def __post_init__(self):
        self.mode = OutputMode(self.mode)
        self.input_mode = InputMode(self.input_mode)
        self.patience_rule = PatienceRule(self.patience_rule)

    def validate(self):
        for name in ("embedding_size", "cell_size", "attention_size", "batch_size", "max_passes", "patience",
                     "top_k", "beam_size", "max_output_len", "min_token_freq"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.learning_rate < 0 or self.init_scale <= 0 or self.clip_norm < 0:
            raise ValueError("learning_rate, clip_norm must be non-negative and init_scale positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.min_passes < 0 or self.min_passes > self.max_passes:
            raise ValueError(f"min_passes must be in [0, max_passes], got {self.min_passes}")
        return self

    def to_dict(self):
        return {k: (v.value if isinstance(v, enum.Enum) else v) for k, v in asdict(self).items()}


@dataclass
class Candidate:
    tokens: list[str]
    logprob: float
    penalty: int = 0
    indicators: frozenset[str] | None = None

    @property
    def output(self) -> list[str]:
        return self.tokens[:-1] if self.tokens and self.tokens[-1] == EOS else list(self.tokens)


@dataclass
class EncoderOutput:
    memory: np.ndarray
    h0: np.ndarray
    c0: np.ndarray
    ids: np.ndarray
    forward: list = field(default_factory=list)
    backward: list = field(default_factory=list)


@dataclass
class StepCache:
    prev: int
    context: np.ndarray
    attention: object
    lstm: object
    mask: np.ndarray
    features: np.ndarray


class Seq2SeqGenerator:
    """Parameters and vocabularies of one generator, with forward and backward passes."""

    def __init__(self, config: GeneratorConfig, params: ModelParams, in_vocab: Vocabulary, out_vocab: Vocabulary):
        self.config = config
        self.params = params
        self.in_vocab = in_vocab
        self.out_vocab = out_vocab

    @classmethod
    def initialize(cls, config: GeneratorConfig, in_vocab: Vocabulary, out_vocab: Vocabulary, seed: int):
        rng = np.random.default_rng(seed)
        e, h, s = config.embedding_size, config.cell_size, config.init_scale
        params = ModelParams(seed=seed)
        init_embedding(params, rng, "enc.emb", len(in_vocab), e, s)
        init_lstm(params, rng, "enc.fwd", 3 * e, h, s)
        init_lstm(params, rng, "enc.bwd", 3 * e, h, s)
        init_embedding(params, rng, "dec.emb", len(out_vocab), e, s)
        init_attention(params, rng, "att", h, 2 * h, config.attention_size, s)
        init_lstm(params, rng, "dec.lstm", e + 2 * h, h, s)
        init_linear(params, rng, "out", 3 * h, len(out_vocab), s)
        return cls(config, params, in_vocab, out_vocab)

    def encode(self, triples: Sequence[tuple[str, str, str]]) -> EncoderOutput:
        if not triples:
            raise EmptyDialogueActError()
        p = self.params
        ids = np.array([self.in_vocab.encode(t) for t in triples], dtype=np.int64)
        n = ids.shape[0]
        xs = p["enc.emb"][ids].reshape(n, -1)
        hidden = self.config.cell_size

        hf = np.zeros((n, hidden))
        cf = np.zeros((n, hidden))
        h = c = np.zeros(hidden)
        forward = []
        for j in range(n):
            h, c, cache = lstm_step(p["enc.fwd.W"], p["enc.fwd.b"], xs[j], h, c)
            hf[j], cf[j] = h, c
            forward.append(cache)

        hb = np.zeros((n, hidden))
        cb = np.zeros((n, hidden))
        h = c = np.zeros(hidden)
        backward = [None] * n
        for j in reversed(range(n)):
            h, c, cache = lstm_step(p["enc.bwd.W"], p["enc.bwd.b"], xs[j], h, c)
            hb[j], cb[j] = h, c
            backward[j] = cache

        memory = np.concatenate([hf, hb], axis=1)
        return EncoderOutput(memory, hf[-1] + hb[0], cf[-1] + cb[0], ids, forward, backward)

    def encode_da(self, da: DialogueAct, da_config: DAConfig | None = None) -> EncoderOutput:
        lexicalized = self.config.input_mode is InputMode.LEXICALIZED
        return self.encode(da_to_triples(da, lexicalized=lexicalized, config=da_config))

    def decoder_step(self, enc: EncoderOutput, prev: int, h, c, training=False, rng=None):
        """One decoder step; returns ``(logits, h', c', cache)``."""
        p = self.params
        context, _, att_cache = attend(p, "att", h, enc.memory)
        x = np.concatenate([p["dec.emb"][prev], context])
        h_new, c_new, lstm_cache = lstm_step(p["dec.lstm.W"], p["dec.lstm.b"], x, h, c)
        if training and self.config.dropout > 0:
            mask = dropout_mask(h_new.shape, self.config.dropout, rng)
        else:
            mask = np.ones_like(h_new)
        features = np.concatenate([h_new * mask, context])
        logits = p["out.W"] @ features + p["out.b"]
        return logits, h_new, c_new, StepCache(prev, context, att_cache, lstm_cache, mask, features)

    def _step_backward(self, dlogits, dh, dc, cache: StepCache, grads, dmemory):
        p = self.params
        hidden = self.config.cell_size
        emb = self.config.embedding_size
        grads["out.W"] += np.outer(dlogits, cache.features)
        grads["out.b"] += dlogits
        dfeatures = p["out.W"].T @ dlogits
        dh_total = dfeatures[:hidden] * cache.mask + dh
        dcontext = dfeatures[hidden:]
        dx, dh_prev, dc_prev, dW, db = lstm_step_backward(dh_total, dc, p["dec.lstm.W"], cache.lstm)
        grads["dec.lstm.W"] += dW
        grads["dec.lstm.b"] += db
        grads["dec.emb"][cache.prev] += dx[:emb]
        dcontext = dcontext + dx[emb:]
        att_grads, dstate, dmem = attend_backward(dcontext, p, "att", cache.attention)
        accumulate(grads, att_grads)
        dmemory += dmem
        return dh_prev + dstate, dc_prev

    def _encoder_backward(self, enc: EncoderOutput, dmemory, dh0, dc0, grads):
        p = self.params
        hidden = self.config.cell_size
        n = enc.ids.shape[0]
        dxs = np.zeros((n, p["enc.fwd.W"].shape[1] - hidden))

        dh, dc = dh0.copy(), dc0.copy()
        for j in reversed(range(n)):
            dx, dh, dc, dW, db = lstm_step_backward(dmemory[j, :hidden] + dh, dc, p["enc.fwd.W"], enc.forward[j])
            grads["enc.fwd.W"] += dW
            grads["enc.fwd.b"] += db
            dxs[j] += dx

        dh, dc = dh0.copy(), dc0.copy()
        for j in range(n):
            dx, dh, dc, dW, db = lstm_step_backward(dmemory[j, hidden:] + dh, dc, p["enc.bwd.W"], enc.backward[j])
            grads["enc.bwd.W"] += dW
            grads["enc.bwd.b"] += db
            dxs[j] += dx

        grads["enc.emb"] += embedding_backward(dxs.reshape(n, 3, -1), enc.ids, p["enc.emb"].shape)

    def loss_and_grads(self, triples, target: Sequence[str], training=True, rng=None):
        """Summed token cross-entropy of ``target`` + end marker, and its parameter gradients."""
        enc = self.encode(triples)
        ids = self.out_vocab.encode(target) + [self.out_vocab.index(EOS)]
        h, c = enc.h0, enc.c0
        prev = self.out_vocab.index(GO)
        steps = []
        loss = 0.0
        for y in ids:
            logits, h, c, cache = self.decoder_step(enc, prev, h, c, training, rng)
            step_loss, dlogits = softmax_xent(logits, y)
            loss += step_loss
            steps.append((dlogits, cache))
            prev = y

        grads = self.params.zeros_like()
        dmemory = np.zeros_like(enc.memory)
        dh = np.zeros(self.config.cell_size)
        dc = np.zeros(self.config.cell_size)
        for dlogits, cache in reversed(steps):
            dh, dc = self._step_backward(dlogits, dh, dc, cache, grads, dmemory)
        self._encoder_backward(enc, dmemory, dh, dc, grads)
        return loss, len(ids), grads

    def save(self, path, extra: dict | None = None):
        metadata = {
            "kind": "generator",
            "config": self.config.to_dict(),
            "in_vocab": self.in_vocab.itos,
            "out_vocab": self.out_vocab.itos,
            **(extra or {}),
        }
        save_checkpoint(self.params, path, metadata)

    @classmethod
    def load(cls, path) -> Seq2SeqGenerator:
        params = load_checkpoint(path)
        meta = params.metadata
        config = GeneratorConfig(**meta["config"])
        return cls(config, params, Vocabulary(meta["in_vocab"], ()), Vocabulary(meta["out_vocab"], ()))


def encode(model: Seq2SeqGenerator, triples) -> np.ndarray:
    """Per-position ``[forward; backward]`` encoder states."""
    return model.encode(triples).memory


def beam_decode(model: Seq2SeqGenerator, enc: EncoderOutput, beam_size: int = 20, max_len: int = 50):
    """Beam search; at the last of ``max_len`` steps only the end marker may be emitted.

    Returns up to ``beam_size`` finished candidates, best log-probability first.
    """
    go = model.out_vocab.index(GO)
    eos = model.out_vocab.index(EOS)
    allowed = [i for i in range(len(model.out_vocab)) if i != go]
    active = [([], 0.0, enc.h0, enc.c0)]
    finished: list[tuple[float, list[int]]] = []

    for t in range(max_len):
        expansions = []
        for k, (ids, logprob, h, c) in enumerate(active):
            logits, h2, c2, _ = model.decoder_step(enc, ids[-1] if ids else go, h, c)
            logp = log_softmax(logits)
            for y in [eos] if t == max_len - 1 else allowed:
                expansions.append((logprob + float(logp[y]), k, y, h2, c2))
        expansions.sort(key=lambda e: (-e[0], e[1], e[2]))

        survivors = []
        for logprob, k, y, h2, c2 in expansions[:beam_size]:
            ids = active[k][0] + [y]
            if y == eos:
                finished.append((logprob, ids))
            else:
                survivors.append((ids, logprob, h2, c2))
        active = survivors
        if not active:
            break
        # log-probabilities only decrease, so a full set of better finished hypotheses is final
        finished.sort(key=lambda f: -f[0])
        if len(finished) >= beam_size and finished[beam_size - 1][0] >= active[0][1]:
            break

    finished.sort(key=lambda f: -f[0])
    return [Candidate(model.out_vocab.decode(ids), logprob) for logprob, ids in finished[:beam_size]]


def greedy_decode(model: Seq2SeqGenerator, enc: EncoderOutput, max_len: int = 50) -> Candidate:
    return beam_decode(model, enc, beam_size=1, max_len=max_len)[0]


def interleave(lemmas: Sequence[str], tags: Sequence[MorphTag | str]) -> list[str]:
    if len(lemmas) != len(tags):
        raise LengthMismatchError("lemmas and tags", len(lemmas), len(tags))
    out = []
    for lemma, tag in zip(lemmas, tags):
        out.extend([lemma, str(tag)])
    return out


def deinterleave(tokens: Sequence[str]) -> tuple[list[str], list[MorphTag]]:
    """Split alternating lemma/tag tokens.

    A lemma not followed by a tag gets a wildcard tag; a tag with no lemma before it is dropped.
    """
    lemmas: list[str] = []
    tags: list[MorphTag] = []
    repairs = 0
    expecting_tag = False
    for token in tokens:
        token_is_tag = is_tag(token)
        if expecting_tag:
            if token_is_tag:
                tags.append(parse_tag(token))
                expecting_tag = False
                continue
            tags.append(ANY_TAG)
            repairs += 1
        if token_is_tag:
            repairs += 1
            continue
        lemmas.append(token)
        expecting_tag = True
    if expecting_tag:
        tags.append(ANY_TAG)
        repairs += 1
    if repairs:
        logger.warning("Repaired %d lemma/tag alternation errors in %r", repairs, " ".join(tokens))
    return lemmas, tags


def realize_lemma_tags(lemmas: Sequence[str], tags: Sequence[MorphTag | str], dictionary: MorphDictionary,
                       keep_placeholder_tags: bool = False) -> list[str]:
    """Inflect each lemma for its tag; placeholders pass through, optionally followed by their tag."""
    if len(lemmas) != len(tags):
        raise LengthMismatchError("lemmas and tags", len(lemmas), len(tags))
    out = []
    for lemma, tag in zip(lemmas, tags):
        tag = tag if isinstance(tag, MorphTag) else parse_tag(tag)
        if placeholder_slot(lemma) is not None:
            out.append(lemma)
            if keep_placeholder_tags:
                out.append(str(tag))
            continue
        out.append(generate_form(dictionary, lemma, tag)[0])
    return out


def target_tokens(inst: Instance, mode: OutputMode) -> list[str]:
    """Decoder targets of a prepared instance."""
    if inst.delex_text is None:
        raise ValueError("Instance has no delexicalized text; run prepare first")
    if OutputMode(mode) is OutputMode.WORD_FORMS:
        return list(inst.delex_text)
    if inst.lemmas is None or inst.delex_tags is None:
        raise ValueError("Lemma-tag mode needs lemmas and tags aligned to the delexicalized text")
    return interleave(inst.lemmas, inst.delex_tags)


class EarlyStopping:
    """Stop once the dev score has not changed for ``patience`` passes, after ``min_passes``.

    With the top-k rule a change is a score entering the set of the ``top_k`` best scores; with the
    max rule it is a new best score.
    """

    def __init__(self, patience, min_passes, max_passes, top_k=10, rule=PatienceRule.TOP_K):
        self.patience = patience
        self.min_passes = min_passes
        self.max_passes = max_passes
        self.top_k = top_k
        self.rule = PatienceRule(rule)
        self.top: list[float] = []
        self.best = -np.inf
        self.since_change = 0

    def update(self, pass_index: int, score: float) -> bool:
        """Record the score of pass ``pass_index`` (1-based); returns True when training should stop."""
        if self.rule is PatienceRule.MAX:
            changed = score > self.best
        else:
            changed = len(self.top) < self.top_k or score > self.top[-1]
            if changed:
                self.top = sorted([*self.top, score], reverse=True)[: self.top_k]
        self.best = max(self.best, score)
        self.since_change = 0 if changed else self.since_change + 1
        if pass_index >= self.max_passes:
            return True
        return pass_index >= self.min_passes and self.since_change >= self.patience


def _examples(instances, config: GeneratorConfig, da_config):
    lexicalized = config.input_mode is InputMode.LEXICALIZED
    return [(da_to_triples(inst.da, lexicalized=lexicalized, config=da_config), target_tokens(inst, config.mode))
            for inst in instances]


def decode_instances(model: Seq2SeqGenerator, instances, da_config=None, beam_size=1, max_len=None):
    """Best beam candidate output per instance."""
    max_len = max_len or model.config.max_output_len
    return [beam_decode(model, model.encode_da(inst.da, da_config), beam_size, max_len)[0].output
            for inst in instances]


def dev_bleu(model: Seq2SeqGenerator, examples, max_len) -> float:
    pairs = []
    for triples, target in examples:
        hyp = greedy_decode(model, model.encode(triples), max_len).output
        pairs.append(EvalPair(hyp, [target]))
    return bleu(pairs)


def train_generator(config: GeneratorConfig, train: Sequence[Instance], dev: Sequence[Instance], seed: int = 0,
                    da_config: DAConfig | None = None, log: TrainingLog | None = None):
    """Train with Adam on token cross-entropy; keeps the parameters of the best greedy dev BLEU.

    Without a dev set the training set is used for validation. Returns ``(model, log)``.
    """
    config.validate()
    if not train:
        raise EmptyCorpusError("generator training set")
    log = log if log is not None else TrainingLog(stage="generator")
    train_examples = _examples(train, config, da_config)
    dev_examples = _examples(dev, config, da_config) if dev else train_examples

    in_vocab = Vocabulary.build((tok for triple in triples for tok in triple) for triples, _ in train_examples)
    out_vocab = Vocabulary.build((target for _, target in train_examples), config.min_token_freq)
    model = Seq2SeqGenerator.initialize(config, in_vocab, out_vocab, seed)
    logger.info(
        "Training generator on %d instances: input vocabulary %d, output vocabulary %d",
        len(train_examples), len(in_vocab), len(out_vocab),
    )

    rng = np.random.default_rng(seed)
    adam = AdamState.for_params(model.params, config.learning_rate)
    stopper = EarlyStopping(
        config.patience, config.min_passes, config.max_passes, config.top_k, config.patience_rule
    )
    max_len = max(config.max_output_len, max(len(t) for _, t in train_examples) + 1)
    best_score = -np.inf
    best_params = model.params.copy()

    for pass_index in range(1, config.max_passes + 1):
        order = rng.permutation(len(train_examples))
        total_loss = 0.0
        total_tokens = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grads = model.params.zeros_like()
            for i in batch:
                triples, target = train_examples[int(i)]
                loss, n_tokens, g = model.loss_and_grads(triples, target, training=True, rng=rng)
                total_loss += loss
                total_tokens += n_tokens
                accumulate(grads, g)
            for g in grads.values():
                g /= len(batch)
            clip_global_norm(grads, config.clip_norm)
            adam_step(adam, model.params, grads)

        mean_loss = total_loss / total_tokens
        if not np.isfinite(mean_loss):
            raise NonFiniteError(f"generator training loss at pass {pass_index}")
        score = dev_bleu(model, dev_examples, max_len)
        kept = score > best_score
        if kept:
            best_score = score
            best_params = model.params.copy()
        log.append(pass_index, mean_loss, score, kept)
        logger.debug("Pass %d: loss %.4f dev BLEU %.2f%s", pass_index, mean_loss, score, " (kept)" if kept else "")
        if stopper.update(pass_index, score):
            break

    logger.info("Generator training stopped after %d passes, best dev BLEU %.2f", pass_index, best_score)
    model.params = best_params
    return model, log

