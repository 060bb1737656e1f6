"""Machine-translation metrics: corpus BLEU-1..4, smoothed sentence BLEU,
ROUGE-L, and exact-match METEOR.

All scores are percentages in [0, 100].  BLEU aggregates clipped n-gram
counts over the corpus; the sentence-level metrics are averaged.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from comgen import kernels
from comgen.corpus import tokenize


@dataclass
class EvalPair:
    reference: list[str]
    hypothesis: list[str]

    def __post_init__(self):
        if not self.reference:
            raise ValueError("empty reference")


@dataclass
class MetricReport:
    bleu: list[float]  # BLEU-1..4
    smoothed_bleu: float
    meteor: float
    rouge_l: float
    n_pairs: int

    def to_dict(self):
        d = {f"bleu-{i + 1}": round(v, 4) for i, v in enumerate(self.bleu)}
        d["smoothed_bleu"] = round(self.smoothed_bleu, 4)
        d["meteor"] = round(self.meteor, 4)
        d["rouge_l"] = round(self.rouge_l, 4)
        d["n_pairs"] = self.n_pairs
        return d


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_corpus(pairs, max_n: int = 4) -> list[float]:
    """Corpus-level BLEU-1..max_n with brevity penalty over summed lengths."""
    if not pairs:
        raise ValueError("bleu_corpus needs at least one pair")
    matches = [0] * max_n
    totals = [0] * max_n
    ref_len = hyp_len = 0
    for pair in pairs:
        ref, hyp = pair.reference, pair.hypothesis
        ref_len += len(ref)
        hyp_len += len(hyp)
        for n in range(1, max_n + 1):
            hyp_ng = _ngrams(hyp, n)
            ref_ng = _ngrams(ref, n)
            matches[n - 1] += sum(min(c, ref_ng[g]) for g, c in hyp_ng.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    if hyp_len == 0:
        return [0.0] * max_n
    bp = min(1.0, math.exp(1.0 - ref_len / hyp_len))
    precisions = [(m / t if t > 0 else 0.0) for m, t in zip(matches, totals)]
    scores = []
    for n in range(1, max_n + 1):
        if any(p == 0.0 for p in precisions[:n]):
            scores.append(0.0)
            continue
        log_mean = sum(math.log(p) for p in precisions[:n]) / n
        scores.append(100.0 * bp * math.exp(log_mean))
    return scores


def smoothed_bleu(pair, max_n: int = 4) -> float:
    """Sentence BLEU-4 with add-one smoothing on the n>1 precisions."""
    ref, hyp = pair.reference, pair.hypothesis
    if len(hyp) == 0:
        return 0.0
    precisions = []
    for n in range(1, max_n + 1):
        hyp_ng = _ngrams(hyp, n)
        ref_ng = _ngrams(ref, n)
        m = sum(min(c, ref_ng[g]) for g, c in hyp_ng.items())
        t = max(len(hyp) - n + 1, 0)
        if n == 1:
            precisions.append(m / t if t > 0 else 0.0)
        else:
            precisions.append((m + 1.0) / (t + 1.0))
    if precisions[0] == 0.0:
        return 0.0
    bp = min(1.0, math.exp(1.0 - len(ref) / len(hyp)))
    log_mean = sum(math.log(p) for p in precisions) / max_n
    return 100.0 * bp * math.exp(log_mean)


def _lcs(ref, hyp):
    alphabet = {}
    a = np.array([alphabet.setdefault(t, len(alphabet)) for t in ref],
                 dtype=np.int64)
    b = np.array([alphabet.setdefault(t, len(alphabet)) for t in hyp],
                 dtype=np.int64)
    return kernels.lcs_length(a, b)


def rouge_l(pair, beta: float = 1.0) -> float:
    """F-score of LCS-based recall and precision."""
    ref, hyp = pair.reference, pair.hypothesis
    if len(hyp) == 0:
        return 0.0
    lcs = _lcs(ref, hyp)
    if lcs == 0:
        return 0.0
    r = lcs / len(ref)
    p = lcs / len(hyp)
    b2 = beta * beta
    return 100.0 * (1.0 + b2) * r * p / (r + b2 * p)


# search cap for the exact METEOR aligner; beyond it the greedy extension
# order has already produced a valid (near-optimal) chunking
_METEOR_NODE_CAP = 500_000


def meteor_alignment(reference, hypothesis):
    """Exact-match unigram alignment maximizing matches, then minimizing
    chunks. Returns (matches, chunks)."""
    ref_count = Counter(reference)
    hyp_count = Counter(hypothesis)
    need = {w: min(c, ref_count[w]) for w, c in hyp_count.items()
            if ref_count[w] > 0}
    m = sum(need.values())
    if m == 0:
        return 0, 0
    ref_pos = {}
    for i, w in enumerate(reference):
        if w in need:
            ref_pos.setdefault(w, []).append(i)
    # remaining hyp occurrences of each needed word at or after position i
    n_hyp = len(hypothesis)
    remaining = [dict() for _ in range(n_hyp + 1)]
    for i in range(n_hyp - 1, -1, -1):
        remaining[i] = dict(remaining[i + 1])
        w = hypothesis[i]
        if w in need:
            remaining[i][w] = remaining[i].get(w, 0) + 1

    best = [m + 1]
    seen = {}
    nodes = [0]

    def dfs(i, used_mask, needed, ext, chunks):
        if chunks >= best[0]:
            return
        if sum(needed.values()) == 0:
            best[0] = chunks
            return
        if i >= n_hyp:
            return
        nodes[0] += 1
        if nodes[0] > _METEOR_NODE_CAP:
            return
        key = (i, used_mask, ext)
        prev = seen.get(key)
        if prev is not None and prev <= chunks:
            return
        seen[key] = chunks
        w = hypothesis[i]
        todo = needed.get(w, 0)
        if todo > 0:
            cands = [r for r in ref_pos[w] if not (used_mask >> r) & 1]
            # continuing the current chunk first gives tight bounds early
            cands.sort(key=lambda r: (r != ext, r))
            needed[w] = todo - 1
            for r in cands:
                dfs(i + 1, used_mask | (1 << r), needed, r + 1,
                    chunks + (0 if r == ext else 1))
            needed[w] = todo
        # skip position i if enough later occurrences remain
        if todo == 0 or remaining[i + 1].get(w, 0) >= todo:
            dfs(i + 1, used_mask, needed, -1, chunks)

    dfs(0, 0, dict(need), -1, 0)
    return m, best[0]


def meteor(pair, alpha: float = 0.9, gamma: float = 0.5,
           theta: float = 3.0) -> float:
    """Exact-match METEOR: harmonic-mean F weighted toward recall, discounted
    by a fragmentation penalty over chunks."""
    ref, hyp = pair.reference, pair.hypothesis
    if len(hyp) == 0:
        return 0.0
    m, chunks = meteor_alignment(ref, hyp)
    if m == 0:
        return 0.0
    p = m / len(hyp)
    r = m / len(ref)
    f = p * r / (alpha * p + (1.0 - alpha) * r)
    penalty = gamma * (chunks / m) ** theta
    return 100.0 * f * (1.0 - penalty)


def evaluate_pairs(pairs, beta: float = 1.0) -> MetricReport:
    if not pairs:
        raise ValueError("no pairs to evaluate")
    return MetricReport(
        bleu=bleu_corpus(pairs),
        smoothed_bleu=sum(smoothed_bleu(p) for p in pairs) / len(pairs),
        meteor=sum(meteor(p) for p in pairs) / len(pairs),
        rouge_l=sum(rouge_l(p, beta) for p in pairs) / len(pairs),
        n_pairs=len(pairs),
    )


def evaluate(refs_path, hyps_path, beta: float = 1.0) -> MetricReport:
    """Score aligned reference/hypothesis text files (one sentence per line)."""
    with open(refs_path, encoding="utf-8") as fh:
        refs = fh.read().splitlines()
    with open(hyps_path, encoding="utf-8") as fh:
        hyps = fh.read().splitlines()
    if len(refs) != len(hyps):
        raise ValueError(f"line count mismatch: {len(refs)} references "
                         f"vs {len(hyps)} hypotheses")
    pairs = [EvalPair(tokenize(r, "comment"), tokenize(h, "comment"))
             for r, h in zip(refs, hyps)]
    return evaluate_pairs(pairs, beta)
