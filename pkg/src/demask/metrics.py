"""BLEU-4 scoring and paired bootstrap significance testing.

sentence_bleu with add-1 smoothing (orders 2..4 only) is the reward signal;
corpus_bleu is the unsmoothed evaluation metric, reported x100 by the CLI.
Scores here live in [0, 1].
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .rng import named_rng

MAX_ORDER = 4


@dataclass(frozen=True)
class BleuReport:
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    score: float
    candidate_len: int
    reference_len: int


def _ngram_counts(seq, n):
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def sentence_stats(candidate, reference) -> np.ndarray:
    """Clipped matches and totals for orders 1..4 plus lengths.

    Layout: [m1..m4, t1..t4, cand_len, ref_len]; the additive building block
    for corpus scores and bootstrap resampling.
    """
    stats = np.zeros(2 * MAX_ORDER + 2)
    for n in range(1, MAX_ORDER + 1):
        cand = _ngram_counts(candidate, n)
        ref = _ngram_counts(reference, n)
        stats[n - 1] = sum(min(c, ref[g]) for g, c in cand.items())
        stats[MAX_ORDER + n - 1] = max(0, len(candidate) - n + 1)
    stats[-2] = len(candidate)
    stats[-1] = len(reference)
    return stats


def _combine(stats, smoothed=False):
    cand_len, ref_len = stats[-2], stats[-1]
    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, MAX_ORDER + 1):
        match = stats[n - 1]
        total = stats[MAX_ORDER + n - 1]
        if smoothed and n >= 2:
            match += 1.0
            total += 1.0
        if match <= 0 or total <= 0:
            return 0.0
        log_sum += math.log(match / total)
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_sum / MAX_ORDER)


def sentence_bleu(candidate, reference, smoothed=False) -> float:
    """BLEU-4 of one sentence; 0.0 whenever any usable precision is zero."""
    if len(reference) == 0:
        raise ValueError("reference must be nonempty")
    return _combine(sentence_stats(candidate, reference), smoothed=smoothed)


def corpus_bleu(candidates, references) -> BleuReport:
    """Unsmoothed corpus BLEU-4 with n-gram counts pooled before combining."""
    if len(candidates) != len(references):
        raise ValueError("candidate/reference count mismatch")
    if len(candidates) == 0:
        raise ValueError("empty corpus")
    for ref in references:
        if len(ref) == 0:
            raise ValueError("reference must be nonempty")
    totals = np.zeros(2 * MAX_ORDER + 2)
    for cand, ref in zip(candidates, references):
        totals += sentence_stats(cand, ref)
    precisions = tuple(
        float(totals[n] / totals[MAX_ORDER + n]) if totals[MAX_ORDER + n] > 0 else 0.0
        for n in range(MAX_ORDER)
    )
    cand_len, ref_len = totals[-2], totals[-1]
    if cand_len >= ref_len:
        bp = 1.0
    elif cand_len == 0:
        bp = 0.0
    else:
        bp = math.exp(1.0 - ref_len / cand_len)
    return BleuReport(
        precisions=precisions,
        brevity_penalty=bp,
        score=float(_combine(totals)),
        candidate_len=int(cand_len),
        reference_len=int(ref_len),
    )


def paired_bootstrap(pairs_a, pairs_b, resamples=1000, seed=0) -> float:
    """One-sided paired bootstrap p-value for "system A beats system B".

    Each input is a list of (candidate, reference) with identical references
    in identical order. The p-value is the add-one-corrected fraction of
    resamples in which A's corpus BLEU does not exceed B's.
    """
    if len(pairs_a) != len(pairs_b) or len(pairs_a) == 0:
        raise ValueError("paired corpora must be nonempty and equal-length")
    if resamples < 100:
        raise ValueError("need at least 100 resamples")
    for (_, ref_a), (_, ref_b) in zip(pairs_a, pairs_b):
        if tuple(ref_a) != tuple(ref_b):
            raise ValueError("references of the two systems do not match")
    stats_a = np.stack([sentence_stats(c, r) for c, r in pairs_a])
    stats_b = np.stack([sentence_stats(c, r) for c, r in pairs_b])
    rng = named_rng(seed, "bootstrap")
    count = len(pairs_a)
    not_better = 0
    for _ in range(resamples):
        idx = rng.integers(0, count, size=count)
        score_a = _combine(stats_a[idx].sum(axis=0))
        score_b = _combine(stats_b[idx].sum(axis=0))
        if score_a <= score_b:
            not_better += 1
    return (not_better + 1) / (resamples + 1)
