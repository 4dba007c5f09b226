"""Independent high-precision reimplementations used as test oracles."""

from decimal import Decimal, getcontext
from fractions import Fraction

getcontext().prec = 60


def D(x) -> Decimal:
    return Decimal(repr(float(x))) if not isinstance(x, (int, Decimal)) else Decimal(x)


def beta(good, bad) -> Decimal:
    return (D(good) + 1) / (D(good) + D(bad) + 2)


def discount(q: int, k: int, lam) -> Decimal:
    return (-D(lam) * (q - k)).exp()


def self_trust(outcomes, lam_g, lam_b) -> Decimal:
    q = len(outcomes)
    good = sum((discount(q, k, lam_g) for k, a in enumerate(outcomes, 1) if a), Decimal(0))
    bad = sum((discount(q, k, lam_b) for k, a in enumerate(outcomes, 1) if not a), Decimal(0))
    return (good + 1) / (bad + good + 2)


def descendant(children) -> Decimal | None:
    total = sum((D(w) for _, _, w in children), Decimal(0))
    if total == 0:
        return None
    return sum((D(w) * D(t) for _, t, w in children), Decimal(0)) / total


def aggregate(s, d, w_s, w_d) -> Decimal:
    if d is None:
        return D(s)
    return D(w_s) * D(s) + D(w_d) * D(d)


def mann_whitney(scores: dict, malicious: set) -> Fraction | None:
    bad = [s for n, s in scores.items() if n in malicious]
    good = [s for n, s in scores.items() if n not in malicious]
    if not bad or not good:
        return None
    wins = Fraction(0)
    for b in bad:
        for g in good:
            wins += 1 if b < g else Fraction(1, 2) if b == g else 0
    return wins / (len(bad) * len(good))


def rel_err(value: float, exact: Decimal) -> float:
    if exact == 0:
        return abs(value)
    return float(abs(D(value) - exact) / abs(exact))
