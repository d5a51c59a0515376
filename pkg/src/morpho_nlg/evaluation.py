"""Word-overlap metrics, slot error rate and paired bootstrap significance.

Metrics take pre-tokenized token lists; BLEU, ROUGE-L, METEOR and SER are percentages.
METEOR runs exact matching only; its fragmentation penalty is 0.5 (chunks / matches)^3, so an identical
sentence of n tokens scores 100 (1 - 0.5 / n^3) rather than exactly 100.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .context import DAConfig, placeholder_slot
from .dialogue_acts import DialogueAct
from .exceptions import EmptyCorpusError, LengthMismatchError

logger = logging.getLogger(__name__)

NIST_MAX_N = 5
NIST_BETA = math.log(0.5) / math.log(1.5) ** 2
ROUGE_BETA = 1.2
METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5
CIDER_SIGMA = 6.0


@dataclass
class EvalPair:
    hypothesis: list[str]
    references: list[list[str]]
    da: DialogueAct | None = None
    delex_hypothesis: list[str] | None = None

    def __post_init__(self):
        if not self.references:
            raise ValueError("An evaluation pair needs at least one reference")


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _require(pairs):
    if not pairs:
        raise EmptyCorpusError("evaluation corpus")


def _closest_ref_length(hyp_len, refs):
    return min((abs(len(r) - hyp_len), len(r)) for r in refs)[1]


def bleu(pairs: Sequence[EvalPair], max_n: int = 4) -> float:
    """Corpus BLEU with brevity penalty, unsmoothed."""
    _require(pairs)
    matches = np.zeros(max_n)
    totals = np.zeros(max_n)
    hyp_len = ref_len = 0
    for pair in pairs:
        hyp_len += len(pair.hypothesis)
        ref_len += _closest_ref_length(len(pair.hypothesis), pair.references)
        for n in range(1, max_n + 1):
            hyp = ngrams(pair.hypothesis, n)
            max_ref: Counter = Counter()
            for ref in pair.references:
                max_ref |= ngrams(ref, n)
            matches[n - 1] += sum((hyp & max_ref).values())
            totals[n - 1] += sum(hyp.values())
    if hyp_len == 0 or np.any(matches == 0):
        return 0.0
    log_precision = np.mean(np.log(matches / totals))
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_precision)


def sentence_bleu(hypothesis: Sequence[str], references: Sequence[Sequence[str]], max_n: int = 4) -> float:
    """Add-one smoothed sentence BLEU (higher orders only), for per-instance dumps."""
    if not hypothesis:
        return 0.0
    log_p = 0.0
    for n in range(1, max_n + 1):
        hyp = ngrams(hypothesis, n)
        max_ref: Counter = Counter()
        for ref in references:
            max_ref |= ngrams(ref, n)
        match, total = sum((hyp & max_ref).values()), sum(hyp.values())
        if n > 1:
            match, total = match + 1, total + 1
        if match == 0:
            return 0.0
        log_p += math.log(match / total) / max_n
    ref_len = _closest_ref_length(len(hypothesis), references)
    bp = 1.0 if len(hypothesis) > ref_len else math.exp(1.0 - ref_len / len(hypothesis))
    return 100.0 * bp * math.exp(log_p)


def nist(pairs: Sequence[EvalPair], max_n: int = NIST_MAX_N) -> float:
    """Information-weighted n-gram precision with the NIST brevity penalty.

    Information weights come from n-gram counts over all references.
    """
    _require(pairs)
    ref_counts: list[Counter] = [Counter() for _ in range(max_n + 1)]
    total_ref_words = 0
    for pair in pairs:
        for ref in pair.references:
            total_ref_words += len(ref)
            for n in range(1, max_n + 1):
                ref_counts[n].update(ngrams(ref, n))

    def info(gram):
        context = ref_counts[len(gram) - 1][gram[:-1]] if len(gram) > 1 else total_ref_words
        return math.log2(context / ref_counts[len(gram)][gram])

    weighted = np.zeros(max_n)
    hyp_ngrams = np.zeros(max_n)
    hyp_len = 0
    ref_len = 0.0
    for pair in pairs:
        hyp_len += len(pair.hypothesis)
        ref_len += np.mean([len(r) for r in pair.references])
        for n in range(1, max_n + 1):
            hyp = ngrams(pair.hypothesis, n)
            max_ref: Counter = Counter()
            for ref in pair.references:
                max_ref |= ngrams(ref, n)
            weighted[n - 1] += sum(info(g) * c for g, c in (hyp & max_ref).items())
            hyp_ngrams[n - 1] += sum(hyp.values())
    if hyp_len == 0:
        return 0.0
    score = float(sum(w / t for w, t in zip(weighted, hyp_ngrams) if t > 0))
    ratio = min(1.0, hyp_len / ref_len) if ref_len > 0 else 1.0
    return score * math.exp(NIST_BETA * math.log(ratio) ** 2)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def sentence_rouge_l(hypothesis: Sequence[str], references: Sequence[Sequence[str]], beta: float = ROUGE_BETA):
    best = 0.0
    for ref in references:
        lcs = lcs_length(hypothesis, ref)
        if lcs == 0:
            continue
        p, r = lcs / len(hypothesis), lcs / len(ref)
        best = max(best, (1 + beta**2) * p * r / (r + beta**2 * p))
    return 100.0 * best


def rouge_l(pairs: Sequence[EvalPair]) -> float:
    _require(pairs)
    return float(np.mean([sentence_rouge_l(p.hypothesis, p.references) for p in pairs]))


def _align(hypothesis, reference):
    """Exact-match alignment keeping monotone runs together; returns ``(matches, chunks)``."""
    used = [False] * len(reference)
    pairs = []
    last = -2
    for i, token in enumerate(hypothesis):
        positions = [j for j, r in enumerate(reference) if r == token and not used[j]]
        if not positions:
            continue
        j = last + 1 if last + 1 in positions else positions[0]
        used[j] = True
        pairs.append((i, j))
        last = j
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return len(pairs), chunks


def sentence_meteor(hypothesis: Sequence[str], references: Sequence[Sequence[str]]) -> float:
    best = 0.0
    for ref in references:
        m, chunks = _align(hypothesis, ref)
        if m == 0:
            continue
        p, r = m / len(hypothesis), m / len(ref)
        fmean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
        frag = chunks / m
        best = max(best, fmean * (1.0 - METEOR_GAMMA * frag**METEOR_BETA))
    return 100.0 * best


def meteor_exact(pairs: Sequence[EvalPair]) -> float:
    _require(pairs)
    return float(np.mean([sentence_meteor(p.hypothesis, p.references) for p in pairs]))


def _cider_vectors(tokens, doc_freq, log_n_docs, max_n):
    vec = []
    norms = []
    for n in range(1, max_n + 1):
        v = {g: c * (log_n_docs - math.log(max(1.0, doc_freq[g]))) for g, c in ngrams(tokens, n).items()}
        vec.append(v)
        norms.append(math.sqrt(sum(x * x for x in v.values())))
    return vec, norms


def cider(pairs: Sequence[EvalPair], max_n: int = 4, sigma: float = CIDER_SIGMA) -> float:
    """CIDEr-D: clipped tf-idf cosine per order with a length penalty, scaled by 10.

    Document frequencies are counted over reference sets; a single-pair corpus scores 0.
    """
    _require(pairs)
    doc_freq: Counter = Counter()
    for pair in pairs:
        seen = set()
        for ref in pair.references:
            for n in range(1, max_n + 1):
                seen.update(ngrams(ref, n))
        doc_freq.update(seen)
    log_n_docs = math.log(len(pairs))

    scores = []
    for pair in pairs:
        hyp_vec, hyp_norm = _cider_vectors(pair.hypothesis, doc_freq, log_n_docs, max_n)
        per_order = np.zeros(max_n)
        for ref in pair.references:
            ref_vec, ref_norm = _cider_vectors(ref, doc_freq, log_n_docs, max_n)
            delta = len(pair.hypothesis) - len(ref)
            for n in range(max_n):
                dot = sum(min(v, ref_vec[n].get(g, 0.0)) * ref_vec[n].get(g, 0.0) for g, v in hyp_vec[n].items())
                if hyp_norm[n] > 0 and ref_norm[n] > 0:
                    per_order[n] += dot / (hyp_norm[n] * ref_norm[n]) * math.exp(-(delta**2) / (2 * sigma**2))
        scores.append(10.0 * per_order.mean() / len(pair.references))
    return float(np.mean(scores))


@dataclass(frozen=True)
class SlotErrors:
    missing: int
    superfluous: int
    expected: int

    @property
    def rate(self) -> float:
        return 100.0 * (self.missing + self.superfluous) / self.expected if self.expected else 0.0


def slot_errors(tokens: Sequence[str], da: DialogueAct, config: DAConfig | None = None) -> SlotErrors:
    """Compare placeholders in a pre-lexicalization output to the DA's delexicalizable slots."""
    config = config or DAConfig.default()
    expected = Counter(item.slot for item in da.items if config.is_abstracted(item.slot, item.value))
    n_expected = sum(expected.values())
    if n_expected == 0:
        return SlotErrors(0, 0, 0)
    found = Counter(s for s in (placeholder_slot(t) for t in tokens) if s is not None)
    missing = sum((expected - found).values())
    superfluous = sum((found - expected).values())
    return SlotErrors(missing, superfluous, n_expected)


def ser(tokens: Sequence[str], da: DialogueAct, config: DAConfig | None = None) -> float:
    return slot_errors(tokens, da, config).rate


def corpus_ser(errors: Sequence[SlotErrors]) -> tuple[float, float]:
    """``(totals ratio, per-instance average)``; instances without expected slots are left out."""
    counted = [e for e in errors if e.expected]
    if not counted:
        return 0.0, 0.0
    total = 100.0 * sum(e.missing + e.superfluous for e in counted) / sum(e.expected for e in counted)
    return total, float(np.mean([e.rate for e in counted]))


def bootstrap_test(scores_a, scores_b, resamples: int = 1000, seed: int = 0) -> float:
    """Share of paired resamples in which B's mean is at least A's; ties count one half."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatchError("bootstrap score lists", len(a), len(b))
    if a.size == 0:
        raise EmptyCorpusError("bootstrap score lists")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, a.size, size=(resamples, a.size))
    mean_a = a[idx].mean(axis=1)
    mean_b = b[idx].mean(axis=1)
    wins = np.count_nonzero(mean_b > mean_a) + 0.5 * np.count_nonzero(mean_b == mean_a)
    return float(wins / resamples)


@dataclass
class MetricReport:
    bleu: float
    nist: float
    rouge_l: float
    meteor: float
    cider: float
    ser: float | None = None
    ser_average: float | None = None
    n_instances: int = 0
    per_instance: pd.DataFrame = field(default_factory=pd.DataFrame)

    def to_frame(self) -> pd.DataFrame:
        row = {
            "BLEU": self.bleu,
            "NIST": self.nist,
            "ROUGE-L": self.rouge_l,
            "METEOR": self.meteor,
            "CIDEr": self.cider,
            "SER": self.ser,
            "SER (avg)": self.ser_average,
            "instances": self.n_instances,
        }
        return pd.DataFrame([row])

    def to_string(self) -> str:
        return self.to_frame().to_string(index=False, float_format=lambda x: f"{x:.4f}")

    def save(self, report_path, per_instance_path=None):
        self.to_frame().to_csv(report_path, index=False, float_format="%.6f")
        if per_instance_path is not None:
            self.per_instance.to_csv(per_instance_path, index=False, float_format="%.6f")


def evaluate(pairs: Sequence[EvalPair], config: DAConfig | None = None) -> MetricReport:
    _require(pairs)
    rows = []
    errors = []
    for index, pair in enumerate(pairs):
        row = {
            "index": index,
            "bleu": sentence_bleu(pair.hypothesis, pair.references),
            "rouge_l": sentence_rouge_l(pair.hypothesis, pair.references),
            "meteor": sentence_meteor(pair.hypothesis, pair.references),
        }
        if pair.da is not None and pair.delex_hypothesis is not None:
            e = slot_errors(pair.delex_hypothesis, pair.da, config)
            errors.append(e)
            row["ser"] = e.rate
        rows.append(row)
    ser_total, ser_average = corpus_ser(errors) if errors else (None, None)
    report = MetricReport(
        bleu=bleu(pairs),
        nist=nist(pairs),
        rouge_l=rouge_l(pairs),
        meteor=meteor_exact(pairs),
        cider=cider(pairs),
        ser=ser_total,
        ser_average=ser_average,
        n_instances=len(pairs),
        per_instance=pd.DataFrame(rows),
    )
    logger.info("Evaluated %d instances: BLEU %.2f NIST %.4f", len(pairs), report.bleu, report.nist)
    return report


def read_per_instance(path, metric: str) -> np.ndarray:
    df = pd.read_csv(path)
    if metric not in df.columns:
        raise ValueError(f"Column {metric!r} not in {path}; available: {', '.join(df.columns)}")
    return df.sort_values("index")[metric].to_numpy(dtype=np.float64)
