"""Dense float64 layers with hand-written backward passes, the Adam optimizer and checkpoints.

Only the pieces the generator, reranker and lexicalizer LM need: embeddings, an LSTM cell,
single-layer feed-forward attention, softmax cross-entropy, sigmoid cross-entropy and dropout.
Gate order inside an LSTM weight matrix is input, forget, output, candidate.
"""

from __future__ import annotations

import json
import logging
import struct
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    CheckpointFormatError,
    NonFiniteError,
    RateOutOfRangeError,
    ShapeMismatchError,
    TargetOutOfRangeError,
)

logger = logging.getLogger(__name__)

INIT_SCALE = 0.1
FORGET_BIAS = 1.0
CHECKPOINT_MAGIC = b"MNLG"
CHECKPOINT_VERSION = 1


class ModelParams:
    """Named parameter arrays plus the seed they were initialized from."""

    def __init__(
        self, arrays: Mapping[str, np.ndarray] | None = None, seed: int = 0, metadata: dict | None = None
    ):
        self.arrays: dict[str, np.ndarray] = {}
        self.seed = seed
        self.version = CHECKPOINT_VERSION
        self.metadata = dict(metadata or {})
        for name, value in (arrays or {}).items():
            self.add(name, value)

    def add(self, name: str, value: np.ndarray):
        if name in self.arrays:
            raise ValueError(f"Duplicate parameter name {name!r}")
        self.arrays[name] = np.asarray(value, dtype=np.float64)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __contains__(self, name):
        return name in self.arrays

    def __iter__(self):
        return iter(self.arrays)

    def items(self):
        return self.arrays.items()

    def copy(self) -> ModelParams:
        return ModelParams({k: v.copy() for k, v in self.arrays.items()}, self.seed, self.metadata)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def check_finite(self):
        for name, value in self.arrays.items():
            if not np.all(np.isfinite(value)):
                raise NonFiniteError(f"parameter {name}")

    def equal(self, other: ModelParams) -> bool:
        return self.arrays.keys() == other.arrays.keys() and all(
            np.array_equal(v, other.arrays[k]) for k, v in self.arrays.items()
        )


def _check_shape(what, array, expected):
    if tuple(array.shape) != tuple(expected):
        raise ShapeMismatchError(what, tuple(expected), tuple(array.shape))


def uniform_init(rng: np.random.Generator, shape, scale: float = INIT_SCALE) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


def init_embedding(params: ModelParams, rng, name: str, vocab_size: int, dim: int, scale: float = INIT_SCALE):
    params.add(name, uniform_init(rng, (vocab_size, dim), scale))


def init_lstm(params: ModelParams, rng, prefix: str, input_size: int, hidden_size: int, scale: float = INIT_SCALE):
    params.add(f"{prefix}.W", uniform_init(rng, (4 * hidden_size, input_size + hidden_size), scale))
    b = np.zeros(4 * hidden_size)
    b[hidden_size : 2 * hidden_size] = FORGET_BIAS
    params.add(f"{prefix}.b", b)


def init_linear(
    params: ModelParams, rng, prefix: str, input_size: int, output_size: int, scale: float = INIT_SCALE
):
    params.add(f"{prefix}.W", uniform_init(rng, (output_size, input_size), scale))
    params.add(f"{prefix}.b", np.zeros(output_size))


def init_attention(params: ModelParams, rng, prefix: str, state_size: int, memory_size: int, attn_size: int,
                   scale: float = INIT_SCALE):
    params.add(f"{prefix}.Wd", uniform_init(rng, (attn_size, state_size), scale))
    params.add(f"{prefix}.We", uniform_init(rng, (attn_size, memory_size), scale))
    params.add(f"{prefix}.b", np.zeros(attn_size))
    params.add(f"{prefix}.v", uniform_init(rng, (attn_size,), scale))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - np.max(logits, axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def embedding_lookup(E: np.ndarray, ids) -> np.ndarray:
    return E[np.asarray(ids, dtype=np.int64)]


def embedding_backward(dout: np.ndarray, ids, shape) -> np.ndarray:
    dE = np.zeros(shape)
    np.add.at(dE, np.asarray(ids, dtype=np.int64), dout)
    return dE


@dataclass
class LstmCache:
    z: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tanh_c: np.ndarray


def lstm_step(W: np.ndarray, b: np.ndarray, x: np.ndarray, h: np.ndarray, c: np.ndarray):
    """One LSTM step; returns ``(h', c', cache)``."""
    hidden = h.shape[0]
    _check_shape("LSTM state c", c, (hidden,))
    _check_shape("LSTM weights", W, (4 * hidden, x.shape[0] + hidden))
    _check_shape("LSTM bias", b, (4 * hidden,))
    z = np.concatenate([x, h])
    a = W @ z + b
    i = sigmoid(a[:hidden])
    f = sigmoid(a[hidden : 2 * hidden])
    o = sigmoid(a[2 * hidden : 3 * hidden])
    g = np.tanh(a[3 * hidden :])
    c_new = f * c + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    return h_new, c_new, LstmCache(z, c, i, f, o, g, tanh_c)


def lstm_step_backward(dh: np.ndarray, dc: np.ndarray, W: np.ndarray, cache: LstmCache):
    """Gradients of one LSTM step: ``(dx, dh_prev, dc_prev, dW, db)``."""
    hidden = dh.shape[0]
    dc_total = dc + dh * cache.o * (1.0 - cache.tanh_c**2)
    do = dh * cache.tanh_c
    di = dc_total * cache.g
    df = dc_total * cache.c_prev
    dg = dc_total * cache.i
    da = np.concatenate(
        [
            di * cache.i * (1.0 - cache.i),
            df * cache.f * (1.0 - cache.f),
            do * cache.o * (1.0 - cache.o),
            dg * (1.0 - cache.g**2),
        ]
    )
    dW = np.outer(da, cache.z)
    dz = W.T @ da
    n_in = dz.shape[0] - hidden
    return dz[:n_in], dz[n_in:], dc_total * cache.f, dW, da


@dataclass
class AttentionCache:
    state: np.ndarray
    memory: np.ndarray
    hidden: np.ndarray
    weights: np.ndarray


def attention_weights(params: ModelParams, prefix: str, state: np.ndarray, memory: np.ndarray):
    """Softmax over ``v . tanh(Wd s + We m_j + b)`` for each memory row ``m_j``."""
    if memory.ndim != 2 or memory.shape[0] == 0:
        raise ShapeMismatchError("attention memory", ("n>=1", params[f"{prefix}.We"].shape[1]), memory.shape)
    Wd, We, b, v = (params[f"{prefix}.{k}"] for k in ("Wd", "We", "b", "v"))
    _check_shape("attention state", state, (Wd.shape[1],))
    _check_shape("attention memory", memory, (memory.shape[0], We.shape[1]))
    hidden = np.tanh(Wd @ state + memory @ We.T + b)
    weights = softmax(hidden @ v)
    return weights, AttentionCache(state, memory, hidden, weights)


def attention_backward(dweights: np.ndarray, params: ModelParams, prefix: str, cache: AttentionCache):
    """Returns ``(grads by parameter name, dstate, dmemory)``."""
    Wd, We, v = (params[f"{prefix}.{k}"] for k in ("Wd", "We", "v"))
    w = cache.weights
    dscores = w * (dweights - np.dot(dweights, w))
    dv = cache.hidden.T @ dscores
    dpre = np.outer(dscores, v) * (1.0 - cache.hidden**2)
    grads = {
        f"{prefix}.Wd": np.outer(dpre.sum(axis=0), cache.state),
        f"{prefix}.We": dpre.T @ cache.memory,
        f"{prefix}.b": dpre.sum(axis=0),
        f"{prefix}.v": dv,
    }
    return grads, Wd.T @ dpre.sum(axis=0), dpre @ We


def attend(params: ModelParams, prefix: str, state: np.ndarray, memory: np.ndarray):
    """Attention context vector; returns ``(context, weights, cache)``."""
    weights, cache = attention_weights(params, prefix, state, memory)
    return weights @ memory, weights, cache


def attend_backward(dcontext: np.ndarray, params: ModelParams, prefix: str, cache: AttentionCache):
    dweights = cache.memory @ dcontext
    grads, dstate, dmemory = attention_backward(dweights, params, prefix, cache)
    return grads, dstate, dmemory + np.outer(cache.weights, dcontext)


def softmax_xent(logits: np.ndarray, target: int):
    """``(loss, dlogits)`` of ``-log softmax(logits)[target]``."""
    if not 0 <= target < logits.shape[0]:
        raise TargetOutOfRangeError(target, logits.shape[0])
    if not np.all(np.isfinite(logits)):
        raise NonFiniteError("logits")
    logp = log_softmax(logits)
    grad = np.exp(logp)
    grad[target] -= 1.0
    return float(-logp[target]), grad


def sigmoid_bce(logits: np.ndarray, targets: np.ndarray):
    """Summed binary cross-entropy of independent sigmoid outputs; returns ``(loss, dlogits)``."""
    _check_shape("BCE targets", targets, logits.shape)
    # log(1 + exp(-|x|)) form stays finite for large logits
    loss = np.maximum(logits, 0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    return float(loss.sum()), sigmoid(logits) - targets


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= rate < 1.0:
        raise RateOutOfRangeError(rate)
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def dropout(x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | None = None) -> np.ndarray:
    if not 0.0 <= rate < 1.0:
        raise RateOutOfRangeError(rate)
    if not training or rate == 0.0:
        return x
    return x * dropout_mask(x.shape, rate, rng if rng is not None else np.random.default_rng())


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``; returns the norm before."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def accumulate(total: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]):
    for name, g in grads.items():
        total[name] += g


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams, lr: float, **kwargs) -> AdamState:
        return cls(lr=lr, m=params.zeros_like(), v=params.zeros_like(), **kwargs)


def adam_step(state: AdamState, params: ModelParams, grads: Mapping[str, np.ndarray]) -> ModelParams:
    """Bias-corrected Adam update, in place."""
    for name, g in grads.items():
        _check_shape(f"gradient of {name}", g, params[name].shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"gradient of {name}")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params.arrays[name] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def save_checkpoint(params: ModelParams, path, metadata: dict | None = None):
    """Write ``params`` in the versioned container described in the file format docs."""
    meta = json.dumps({**params.metadata, **(metadata or {})}, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<IQI", params.version, params.seed, len(meta)))
        f.write(meta)
        f.write(struct.pack("<I", len(params.arrays)))
        for name in sorted(params.arrays):
            array = params.arrays[name]
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", array.ndim))
            f.write(struct.pack(f"<{array.ndim}I", *array.shape))
            f.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def _read_exact(f, n, path):
    data = f.read(n)
    if len(data) != n:
        raise CheckpointFormatError(path, "truncated file")
    return data


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as f:
        if _read_exact(f, 4, path) != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(path, "bad magic bytes")
        version, seed, meta_len = struct.unpack("<IQI", _read_exact(f, 16, path))
        if version != CHECKPOINT_VERSION:
            raise CheckpointFormatError(path, f"unsupported version {version}")
        metadata = json.loads(_read_exact(f, meta_len, path).decode("utf-8"))
        (n_arrays,) = struct.unpack("<I", _read_exact(f, 4, path))
        params = ModelParams(seed=seed, metadata=metadata)
        for _ in range(n_arrays):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, path))
            name = _read_exact(f, name_len, path).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(f, 1, path))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, path))
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(_read_exact(f, 8 * size, path), dtype="<f8").reshape(shape)
            params.add(name, data.astype(np.float64))
        if f.read(1):
            raise CheckpointFormatError(path, "trailing bytes")
    logger.debug("Loaded %d arrays from %s", n_arrays, path)
    return params


def parameter_count(params: ModelParams, names: Iterable[str] | None = None) -> int:
    return sum(params[n].size for n in (names if names is not None else params))


UNK = "<unk>"
GO = "<go>"
EOS = "<eos>"


class Vocabulary:
    """Token <-> index map; specials come first, then tokens in order of first occurrence."""

    def __init__(self, tokens: Iterable[str] = (), specials: Iterable[str] = (UNK, GO, EOS)):
        self.itos: list[str] = []
        self.stoi: dict[str, int] = {}
        for token in [*specials, *tokens]:
            if token not in self.stoi:
                self.stoi[token] = len(self.itos)
                self.itos.append(token)

    @classmethod
    def build(cls, sequences: Iterable[Iterable[str]], min_freq: int = 1, specials=(UNK, GO, EOS)) -> Vocabulary:
        counts: dict[str, int] = {}
        for seq in sequences:
            for token in seq:
                counts[token] = counts.get(token, 0) + 1
        return cls((t for t, c in counts.items() if c >= min_freq), specials)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, self.stoi[UNK])

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]
