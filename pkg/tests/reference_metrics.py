"""Brute-force interquartile mean and optimality gap, written independently
of the library: rank every score, keep ranks in the middle half."""
from fractions import Fraction


def iqm_reference(scores):
    n = len(scores)
    ranked = sorted(range(n), key=lambda i: (scores[i], i))
    cut = n // 4
    keep = [scores[i] for r, i in enumerate(ranked) if cut <= r < n - cut]
    total = sum(Fraction(x) for x in keep)
    return float(total / len(keep))


def optimality_gap_reference(normalized):
    total = sum(Fraction(1) - Fraction(x) if x < 1 else Fraction(0) for x in normalized)
    return float(total / len(normalized))
