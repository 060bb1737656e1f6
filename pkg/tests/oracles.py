"""Independent brute-force oracles used by the metric tests and the
acceptance gate.

These deliberately avoid the library's code paths: n-grams are enumerated
with slicing and .count(), LCS builds the full quadratic table, and the
METEOR chunk count exhausts every occurrence assignment with itertools.
"""

import itertools
import math
from collections import Counter


def oracle_ngram_stats(ref, hyp, n):
    hyp_ngrams = [tuple(hyp[i:i + n]) for i in range(len(hyp) - n + 1)]
    ref_ngrams = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
    matches = sum(min(hyp_ngrams.count(g), ref_ngrams.count(g))
                  for g in set(hyp_ngrams))
    return matches, len(hyp_ngrams)


def oracle_bleu_corpus(pairs, max_n=4):
    scores = []
    for n in range(1, max_n + 1):
        num = den = 0
        for p in pairs:
            m, t = oracle_ngram_stats(p.reference, p.hypothesis, n)
            num += m
            den += t
        scores.append(num / den if den else 0.0)
    hyp_len = sum(len(p.hypothesis) for p in pairs)
    ref_len = sum(len(p.reference) for p in pairs)
    if hyp_len == 0:
        return [0.0] * max_n
    bp = min(1.0, math.exp(1 - ref_len / hyp_len))
    out = []
    for n in range(1, max_n + 1):
        ps = scores[:n]
        if min(ps) == 0.0:
            out.append(0.0)
        else:
            out.append(100.0 * bp * math.exp(sum(map(math.log, ps)) / n))
    return out


def oracle_smoothed(ref, hyp):
    if not hyp:
        return 0.0
    ps = []
    for n in range(1, 5):
        m, t = oracle_ngram_stats(ref, hyp, n)
        ps.append(m / t if (n == 1 and t) else (0.0 if n == 1 else (m + 1) / (t + 1)))
    if ps[0] == 0:
        return 0.0
    bp = min(1.0, math.exp(1 - len(ref) / len(hyp)))
    return 100.0 * bp * math.exp(sum(map(math.log, ps)) / 4)


def oracle_lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def oracle_rouge(ref, hyp, beta=1.0):
    if not hyp:
        return 0.0
    lcs = oracle_lcs(ref, hyp)
    if lcs == 0:
        return 0.0
    r, p = lcs / len(ref), lcs / len(hyp)
    return 100.0 * (1 + beta ** 2) * r * p / (r + beta ** 2 * p)


def oracle_meteor_chunks(ref, hyp):
    """Exhaustive minimum-chunk alignment (exponential; short inputs only)."""
    ref_count = Counter(ref)
    hyp_count = Counter(hyp)
    need = {w: min(c, ref_count[w]) for w, c in hyp_count.items()
            if ref_count[w] > 0}
    m = sum(need.values())
    if m == 0:
        return 0, 0
    hyp_pos = {w: [i for i, t in enumerate(hyp) if t == w] for w in need}
    ref_pos = {w: [i for i, t in enumerate(ref) if t == w] for w in need}
    words = sorted(need)
    best = [m + 1]

    def chunk_count(pairs):
        pairs = sorted(pairs)
        chunks = 0
        prev = None
        for h, r in pairs:
            if prev is None or h != prev[0] + 1 or r != prev[1] + 1:
                chunks += 1
            prev = (h, r)
        return chunks

    def expand(widx, pairs):
        if widx == len(words):
            best[0] = min(best[0], chunk_count(pairs))
            return
        w = words[widx]
        k = need[w]
        for hsel in itertools.combinations(hyp_pos[w], k):
            for rsel in itertools.permutations(ref_pos[w], k):
                expand(widx + 1, pairs + list(zip(hsel, rsel)))

    expand(0, [])
    return m, best[0]


def oracle_meteor(ref, hyp, alpha=0.9, gamma=0.5, theta=3.0):
    if not hyp:
        return 0.0
    m, chunks = oracle_meteor_chunks(ref, hyp)
    if m == 0:
        return 0.0
    p, r = m / len(hyp), m / len(ref)
    f = p * r / (alpha * p + (1 - alpha) * r)
    return 100.0 * f * (1 - gamma * (chunks / m) ** theta)


def random_pairs(n, rng, max_len=20, vocab=10, pair_cls=None):
    pairs = []
    for _ in range(n):
        ref = [f"w{rng.integers(0, vocab)}"
               for _ in range(rng.integers(1, max_len + 1))]
        hyp = [f"w{rng.integers(0, vocab)}"
               for _ in range(rng.integers(0, max_len + 1))]
        pairs.append(pair_cls(ref, hyp))
    return pairs
