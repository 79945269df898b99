"""Closed-form transformations of GHZ-diagonal ensembles.

Ensembles are probability vectors over the plus-sector GHZ labels in
:func:`mepp.ghz_core.ensemble_order`; for three parties that is
``(F0, F1, F2, F3)`` = (no error, flip on A, flip on B, flip on C).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ContractError,
    DegenerateInputError,
    NoThresholdError,
    NotLinkableError,
    UndefinedConditionError,
)
from .ghz_core import (
    PAIR_PARTIES,
    ErrorPattern,
    ensemble_index,
    ensemble_labels,
    label_from_error,
)

NORM_TOL = 1e-12


def _check_probability(name: str, x: float):
    if not 0.0 <= x <= 1.0:
        raise ContractError(f"{name}={x} is not a probability")


@dataclass(frozen=True)
class GhzEnsemble:
    n_parties: int
    probs: tuple[float, ...]

    def __init__(self, n_parties: int, probs):
        probs = tuple(float(p) for p in probs)
        if len(probs) != 1 << (n_parties - 1):
            raise ContractError(f"N={n_parties} needs {1 << (n_parties - 1)} weights, got {len(probs)}")
        if any(p < 0 for p in probs):
            raise ContractError("ensemble weights must be non-negative")
        if abs(sum(probs) - 1) > NORM_TOL * len(probs) * 10:
            raise ContractError(f"ensemble weights sum to {sum(probs)}, not 1")
        object.__setattr__(self, "n_parties", n_parties)
        object.__setattr__(self, "probs", probs)

    @property
    def fidelity(self) -> float:
        return self.probs[0]

    def as_dict(self):
        return dict(zip(ensemble_labels(self.n_parties), self.probs))


@dataclass(frozen=True)
class PairEnsemble:
    """Two-party mixture of ``phi+`` (weight f0) and ``psi+`` (weight f1)."""

    pair: str
    f0: float
    f1: float

    def __post_init__(self):
        if self.pair not in PAIR_PARTIES:
            raise ContractError(f"unknown pair {self.pair!r}")
        if self.f0 < 0 or self.f1 < 0:
            raise ContractError("pair weights must be non-negative")
        if abs(self.f0 + self.f1 - 1) > NORM_TOL:
            raise ContractError(f"pair weights sum to {self.f0 + self.f1}, not 1")

    @property
    def fidelity(self) -> float:
        return self.f0


def symmetric_ensemble(F0: float, n: int = 3) -> GhzEnsemble:
    """``F0`` on the no-error label, the rest spread evenly over the other labels."""
    _check_probability("F0", F0)
    k = (1 << (n - 1)) - 1
    return GhzEnsemble(n, (F0,) + ((1 - F0) / k,) * k)


@dataclass(frozen=True)
class RoundOutcome:
    kept_prob: float
    out: GhzEnsemble


def normal_round(e: GhzEnsemble) -> RoundOutcome:
    """Keep identical-label pairs: weights square and renormalize."""
    sq = np.square(e.probs)
    kept = float(sq.sum())
    if kept == 0:
        raise DegenerateInputError("all-zero ensemble")
    return RoundOutcome(kept, GhzEnsemble(e.n_parties, sq / kept))


def gain_threshold(F1: float, F2: float) -> float:
    """Smallest no-error weight for which one round improves it, given F1 and F2."""
    if F1 < 0 or F2 < 0 or F1 + F2 > 1:
        raise ContractError(f"invalid error weights F1={F1}, F2={F2}")
    disc = 1 + 4 * (F1 + F2) - 12 * (F1**2 + F2**2) - 8 * F1 * F2
    if disc < 0:
        raise NoThresholdError(f"no improvement region for F1={F1}, F2={F2}")
    return 0.25 * (3 - 2 * F1 - 2 * F2 - math.sqrt(disc))


@dataclass(frozen=True)
class HarvestEntry:
    weight: float
    ensemble: PairEnsemble | None  # None when nothing is harvested for this pair


# For the pair left entangled, which single-flip labels meet to give phi+ and
# which give psi+.  The odd party out carries the error in both cases.
_HARVEST_SOURCES = {
    "AB": ((0, 3), (1, 2)),
    "AC": ((0, 2), (1, 3)),
    "BC": ((0, 1), (2, 3)),
}


def cross_distill(e: GhzEnsemble) -> dict[str, HarvestEntry]:
    """Pairs harvested from the cross-combination items of ``e (x) e``.

    Weights are absolute per pair of three-party systems and sum to
    ``1 - sum F_i**2``.
    """
    if e.n_parties != 3:
        raise ContractError("cross-item distillation is defined for three parties only")
    F = e.probs
    out = {}
    for pair, ((a, b), (c, d)) in _HARVEST_SOURCES.items():
        good, bad = 2 * F[a] * F[b], 2 * F[c] * F[d]
        w = good + bad
        out[pair] = HarvestEntry(w, PairEnsemble(pair, good / w, bad / w) if w > 0 else None)
    return out


def subsystem_gain_ok(F0: float, Fi: float, Fj: float, Fk: float) -> bool:
    """Whether a pair distilled from error label ``i`` beats ``F0``."""
    if Fi == 0:
        raise UndefinedConditionError("condition undefined for Fi = 0")
    return F0 < 1 - Fj * Fk / Fi


@dataclass(frozen=True)
class PairRoundOutcome:
    success_prob: float
    out: PairEnsemble


def pair_round(pe: PairEnsemble) -> PairRoundOutcome:
    s = pe.f0**2 + pe.f1**2
    if s == 0:
        raise DegenerateInputError("all-zero pair ensemble")
    return PairRoundOutcome(s, PairEnsemble(pe.pair, pe.f0**2 / s, pe.f1**2 / s))


def _power_ratio(ratio: float, n: int) -> float:
    # ratio ** (2 ** n) without overflowing the exponent for large n
    ratio = float(ratio)
    if ratio == 1:
        return 1.0
    try:
        return ratio ** float(2**n)
    except OverflowError:
        return math.inf if ratio > 1 else 0.0


def pair_round_n(pe: PairEnsemble, n: int) -> PairEnsemble:
    """``n`` recurrence rounds in closed form: ``f0**(2**n) / (f0**(2**n) + f1**(2**n))``."""
    if n < 0:
        raise ContractError("round count must be non-negative")
    if n == 0:
        return pe
    if pe.f0 >= pe.f1:
        r = _power_ratio(pe.f1 / pe.f0, n)
        f0 = 1 / (1 + r)
    else:
        r = _power_ratio(pe.f0 / pe.f1, n)
        f0 = r / (1 + r)
    return PairEnsemble(pe.pair, f0, 1 - f0)


def link(first: PairEnsemble, second: PairEnsemble) -> GhzEnsemble:
    """Three-party ensemble made by fusing two pairs at their shared party."""
    if first.pair == second.pair:
        raise NotLinkableError(f"cannot link two {first.pair} pairs")
    a, b = set(PAIR_PARTIES[first.pair]), set(PAIR_PARTIES[second.pair])
    shared = a & b
    if len(shared) != 1:
        raise NotLinkableError(f"{first.pair} and {second.pair} do not share exactly one party")
    (o1,) = a - shared
    (o2,) = b - shared
    probs = [0.0] * 4
    for flips, w in (
        ((), first.f0 * second.f0),
        ((o1,), first.f1 * second.f0),
        ((o2,), first.f0 * second.f1),
        ((o1, o2), first.f1 * second.f1),
    ):
        probs[ensemble_index(label_from_error(ErrorPattern(3, flips)))] += w
    return GhzEnsemble(3, probs)


def link_fidelity_closed(F0: float, n: int) -> float:
    """No-error weight after harvest, ``n`` pair rounds and a link, symmetric noise."""
    _check_probability("F0", F0)
    if F0 == 0:
        return 0.0
    F1 = (1 - F0) / 3
    r = _power_ratio(F1 / F0, n)
    return 1 / ((1 + r) * (1 + r))


@dataclass(frozen=True)
class SymmetricCurves:
    F0: float
    E_n: float
    P_3to2: float
    E_2to3: float
    E_o: float
    F_n: float
    F_2: float
    F_2to3: float


def symmetric_curves(F0: float) -> SymmetricCurves:
    """One-round efficiencies and fidelities under symmetric noise."""
    _check_probability("F0", F0)
    q = 1 - 2 * F0 + 4 * F0**2
    return SymmetricCurves(
        F0=F0,
        E_n=q / 3,
        P_3to2=(2 + 2 * F0 - 4 * F0**2) / 3,
        E_2to3=(1 + F0 - 2 * F0**2) / 3,
        E_o=(2 - F0 + 2 * F0**2) / 3,
        F_n=3 * F0**2 / q,
        F_2=3 * F0 / (1 + 2 * F0),
        F_2to3=9 * F0**2 / (1 + 4 * F0 + 4 * F0**2),
    )
