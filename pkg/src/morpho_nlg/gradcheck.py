"""Central finite-difference checks of the hand-written backward passes."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .neural import (
    ModelParams,
    Vocabulary,
    attend,
    attend_backward,
    init_attention,
    lstm_step,
    lstm_step_backward,
    softmax_xent,
)

logger = logging.getLogger(__name__)

EPS = 1e-5
TOLERANCE = 1e-4
DENOMINATOR_FLOOR = 1e-6


def numerical_grad(f, array: np.ndarray, eps: float = EPS, indices=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``array`` (perturbed in place and restored).

    Only ``indices`` (flat positions) are evaluated when given; the rest stay zero.
    """
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        orig = flat[i]
        flat[i] = orig + eps
        y_plus = f()
        flat[i] = orig - eps
        y_minus = f()
        flat[i] = orig
        gflat[i] = (y_plus - y_minus) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, indices=None) -> float:
    a = analytic.reshape(-1)
    n = numeric.reshape(-1)
    if indices is not None:
        a, n = a[indices], n[indices]
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), DENOMINATOR_FLOOR)))


@dataclass
class CheckResult:
    op: str
    instance: int
    max_relative_error: float
    passed: bool


def _sample(rng, array, limit):
    if limit is None or array.size <= limit:
        return None
    return rng.choice(array.size, size=limit, replace=False)


def _compare(rng, f, named, analytic, limit=None):
    worst = 0.0
    for name, array in named.items():
        indices = _sample(rng, array, limit)
        numeric = numerical_grad(f, array, indices=indices)
        worst = max(worst, relative_error(analytic[name], numeric, indices))
    return worst


def check_lstm_step(rng) -> float:
    n_in, hidden = 3, 4
    W = rng.normal(0, 0.5, (4 * hidden, n_in + hidden))
    b = rng.normal(0, 0.5, 4 * hidden)
    x, h, c = rng.normal(size=n_in), rng.normal(size=hidden), rng.normal(size=hidden)
    rh, rc = rng.normal(size=hidden), rng.normal(size=hidden)

    def loss():
        h2, c2, _ = lstm_step(W, b, x, h, c)
        return float(rh @ h2 + rc @ c2)

    _, _, cache = lstm_step(W, b, x, h, c)
    dx, dh, dc, dW, db = lstm_step_backward(rh, rc, W, cache)
    named = {"W": W, "b": b, "x": x, "h": h, "c": c}
    return _compare(rng, loss, named, {"W": dW, "b": db, "x": dx, "h": dh, "c": dc})


def check_attention(rng) -> float:
    params = ModelParams()
    init_attention(params, rng, "att", 3, 5, 4, scale=0.5)
    state = rng.normal(size=3)
    memory = rng.normal(size=(4, 5))
    r = rng.normal(size=5)

    def loss():
        context, _, _ = attend(params, "att", state, memory)
        return float(r @ context)

    _, _, cache = attend(params, "att", state, memory)
    grads, dstate, dmemory = attend_backward(r, params, "att", cache)
    named = {**params.arrays, "state": state, "memory": memory}
    return _compare(rng, loss, named, {**grads, "state": dstate, "memory": dmemory})


def check_softmax_xent(rng) -> float:
    logits = rng.normal(size=6)
    target = int(rng.integers(6))
    _, dlogits = softmax_xent(logits, target)
    return _compare(rng, lambda: softmax_xent(logits, target)[0], {"logits": logits}, {"logits": dlogits})


def check_generator(rng) -> float:
    from .generator import GeneratorConfig, Seq2SeqGenerator

    config = GeneratorConfig(embedding_size=3, cell_size=4, attention_size=3, dropout=0.0, init_scale=0.5)
    in_vocab = Vocabulary(["inform", "name", "X-name", "food", "X-food", "<none>"])
    out_vocab = Vocabulary(["a", "b", "X-name", "X-food"])
    model = Seq2SeqGenerator.initialize(config, in_vocab, out_vocab, int(rng.integers(2**31)))
    triples = [("inform", "name", "X-name"), ("inform", "food", "X-food")]
    target = [out_vocab.itos[int(i)] for i in rng.integers(3, len(out_vocab), size=3)]

    _, _, grads = model.loss_and_grads(triples, target, training=False)
    return _compare(rng, lambda: model.loss_and_grads(triples, target, training=False)[0],
                    model.params.arrays, grads, limit=20)


def check_reranker(rng) -> float:
    from .reranker import Reranker, RerankerConfig

    config = RerankerConfig(embedding_size=3, cell_size=4, init_scale=0.5)
    vocab = Vocabulary(["a", "b", "X-name"])
    reranker = Reranker.initialize(config, vocab, ["inform", "inform|name|X-name"], int(rng.integers(2**31)))
    tokens = ["a", "X-name", "b"]
    targets = np.array([1.0, 0.0])

    _, grads = reranker.loss_and_grads(tokens, targets)
    return _compare(rng, lambda: reranker.loss_and_grads(tokens, targets)[0], reranker.params.arrays, grads,
                    limit=20)


def check_bi_lm(rng) -> float:
    from .lexicalization import BiRnnLm, LmConfig

    config = LmConfig(embedding_size=3, cell_size=4, init_scale=0.5)
    lm = BiRnnLm.initialize(config, Vocabulary(["a", "b", "c"]), int(rng.integers(2**31)))
    tokens = ["a", "c", "b"]

    _, _, grads = lm.loss_and_grads("fwd", tokens)
    named = {k: v for k, v in lm.params.items() if k.startswith("fwd.")}
    return _compare(rng, lambda: lm.loss_and_grads("fwd", tokens)[0], named, grads, limit=20)


CHECKS = {
    "lstm_step": check_lstm_step,
    "attention": check_attention,
    "softmax_xent": check_softmax_xent,
    "generator": check_generator,
    "reranker": check_reranker,
    "bi_lm": check_bi_lm,
}


def run_gradcheck(n_instances: int = 5, seed: int = 0, tolerance: float = TOLERANCE, ops=None):
    rng = np.random.default_rng(seed)
    results = []
    for op in ops or CHECKS:
        for instance in range(n_instances):
            error = CHECKS[op](rng)
            results.append(CheckResult(op, instance, error, error < tolerance))
            if error >= tolerance:
                logger.warning("Gradient check failed for %s (instance %d): %.3g", op, instance, error)
    return results


def results_frame(results) -> pd.DataFrame:
    return pd.DataFrame([vars(r) for r in results])
