"""Interpolated Kneser-Ney n-gram language model over token sequences.

The trained model is held in backoff form (a listing of n-gram log-probabilities and context
backoff weights), which is also its on-disk format. All logarithms are natural.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .exceptions import CorpusFormatError, EmptyCorpusError, NonFiniteError

logger = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
FALLBACK_DISCOUNT = 0.75


@dataclass
class NGramModel:
    order: int
    vocab: frozenset[str]
    logprobs: dict[tuple[str, ...], float]
    backoffs: dict[tuple[str, ...], float]

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"Order must be at least 1, got {self.order}")

    def _map(self, token: str) -> str:
        return token if token in self.vocab or token == BOS else UNK

    def logprob(self, word: str, history: Sequence[str] = ()) -> float:
        """ln p(word | history); ``history`` may start with ``<s>``."""
        word = self._map(word)
        h = tuple(self._map(t) for t in history)
        h = h[len(h) - (self.order - 1) :] if self.order > 1 else ()
        acc = 0.0
        while True:
            lp = self.logprobs.get(h + (word,))
            if lp is not None:
                return acc + lp
            acc += self.backoffs.get(h, 0.0)
            h = h[1:]

    def prob(self, word: str, history: Sequence[str] = ()) -> float:
        return math.exp(self.logprob(word, history))


def _discount(adjusted: dict[tuple[str, ...], int]) -> float:
    n1 = sum(1 for c in adjusted.values() if c == 1)
    n2 = sum(1 for c in adjusted.values() if c == 2)
    if n1 == 0 or n2 == 0:
        return FALLBACK_DISCOUNT
    d = n1 / (n1 + 2 * n2)
    return d if 0.0 < d < 1.0 else FALLBACK_DISCOUNT


def train_lm(corpus: Sequence[Sequence[str]], order: int = 5) -> NGramModel:
    if order < 1:
        raise ValueError(f"Order must be at least 1, got {order}")
    if not corpus:
        raise EmptyCorpusError("LM training corpus")

    raw: list[dict[tuple[str, ...], int]] = [defaultdict(int) for _ in range(order + 1)]
    for sentence in corpus:
        padded = [BOS, *sentence, EOS]
        for end in range(1, len(padded)):
            for n in range(1, order + 1):
                start = end - n + 1
                if start < 0:
                    break
                raw[n][tuple(padded[start : end + 1])] += 1

    # Lower orders use continuation counts, except n-grams anchored at sentence start.
    adjusted: list[dict[tuple[str, ...], int]] = [{} for _ in range(order + 1)]
    adjusted[order] = dict(raw[order])
    for n in range(1, order):
        left_ext: dict[tuple[str, ...], int] = defaultdict(int)
        for g in raw[n + 1]:
            left_ext[g[1:]] += 1
        for g, c in raw[n].items():
            adjusted[n][g] = c if g[0] == BOS else left_ext.get(g, 0)

    discounts = [0.0] + [_discount(adjusted[n]) for n in range(1, order + 1)]
    totals: list[dict[tuple[str, ...], int]] = [defaultdict(int) for _ in range(order + 1)]
    types: list[dict[tuple[str, ...], int]] = [defaultdict(int) for _ in range(order + 1)]
    for n in range(1, order + 1):
        for g, c in adjusted[n].items():
            if c > 0:
                totals[n][g[:-1]] += c
                types[n][g[:-1]] += 1

    vocab = frozenset({g[0] for g in adjusted[1]} | {EOS, UNK})
    uni_total = totals[1][()]
    d1 = discounts[1]
    uniform = 1.0 / len(vocab)
    uni_bo = d1 * types[1][()] / uni_total

    def prob(word, h):
        if not h:
            return max(adjusted[1].get((word,), 0) - d1, 0.0) / uni_total + uni_bo * uniform
        n = len(h) + 1
        total = totals[n].get(h, 0)
        lower = prob(word, h[1:])
        if total == 0:
            return lower
        d = discounts[n]
        return (max(adjusted[n].get(h + (word,), 0) - d, 0.0) + d * types[n][h] * lower) / total

    logprobs: dict[tuple[str, ...], float] = {}
    backoffs: dict[tuple[str, ...], float] = {}
    for w in vocab:
        logprobs[(w,)] = math.log(prob(w, ()))
    for n in range(2, order + 1):
        for g, c in adjusted[n].items():
            if c > 0:
                logprobs[g] = math.log(prob(g[-1], g[:-1]))
    for n in range(2, order + 1):
        d = discounts[n]
        for h, total in totals[n].items():
            backoffs[h] = math.log(d * types[n][h] / total)

    logger.info(
        "Trained %d-gram LM: %d sentences, vocabulary %d, %d n-grams",
        order, len(corpus), len(vocab), len(logprobs),
    )
    return NGramModel(order, vocab, logprobs, backoffs)


def score(model: NGramModel, tokens: Sequence[str], length_normalize: bool = False) -> float:
    """ln p(tokens, </s> | <s>)."""
    history = [BOS]
    total = 0.0
    for token in [*tokens, EOS]:
        total += model.logprob(token, history)
        history.append(token)
    if length_normalize:
        total /= len(tokens) + 1
    return total


def perplexity(model: NGramModel, corpus: Sequence[Sequence[str]]) -> float:
    n_tokens = sum(len(s) + 1 for s in corpus)
    if n_tokens == 0:
        raise EmptyCorpusError("perplexity corpus")
    return math.exp(-sum(score(model, s) for s in corpus) / n_tokens)


def softmax_over_scores(scores: Sequence[float], temperature: float = 1.0) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("softmax over an empty score list")
    if not np.all(np.isfinite(s)):
        raise NonFiniteError("LM scores")
    if temperature <= 0:
        raise ValueError(f"Temperature must be positive, got {temperature}")
    z = s / temperature
    e = np.exp(z - z.max())
    return e / e.sum()


def save_lm(model: NGramModel, path):
    keys = sorted(set(model.logprobs) | set(model.backoffs), key=lambda g: (len(g), g))
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"order\t{model.order}\n")
        for g in keys:
            lp = model.logprobs.get(g, float("-inf"))
            bo = model.backoffs.get(g, 0.0)
            f.write(f"{len(g)}\t{' '.join(g)}\t{lp!r}\t{bo!r}\n")


def load_lm(path) -> NGramModel:
    logprobs: dict[tuple[str, ...], float] = {}
    backoffs: dict[tuple[str, ...], float] = {}
    order = None
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            cols = line.rstrip("\n").split("\t")
            if line_number == 1:
                if len(cols) != 2 or cols[0] != "order":
                    raise CorpusFormatError(path, line_number, "expected 'order' header")
                order = int(cols[1])
                continue
            if len(cols) != 4:
                raise CorpusFormatError(path, line_number, f"expected 4 columns, got {len(cols)}")
            g = tuple(cols[1].split(" "))
            if len(g) != int(cols[0]):
                raise CorpusFormatError(path, line_number, "n-gram length does not match its level")
            lp, bo = float(cols[2]), float(cols[3])
            if lp != float("-inf"):
                logprobs[g] = lp
            if bo != 0.0:
                backoffs[g] = bo
    if order is None:
        raise CorpusFormatError(path, 1, "empty model file")
    vocab = frozenset(g[0] for g in logprobs if len(g) == 1)
    return NGramModel(order, vocab, logprobs, backoffs)
