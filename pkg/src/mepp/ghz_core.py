"""Canonical labels for N-party GHZ basis states and bit-flip error patterns.

A GHZ basis state is ``(|x> + s|~x>)/sqrt(2)`` where ``x`` is an N-bit spin
pattern, ``~x`` its complement and ``s = +/-1``.  Bit ``p`` of a pattern is the
spin of party ``p`` (0 = up, 1 = down) and party 0 is the most significant
bit, so a mask doubles as the computational-basis index of ``|x>`` in a
party-major register.  Since ``x`` and ``~x`` name the same state, labels are
stored canonically with party 0's bit equal to zero.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

from .errors import InvalidPatternError

PLUS = "+"
MINUS = "-"
_SIGNS = (PLUS, MINUS)

PARTY_NAMES = string.ascii_uppercase

# Party index pairs of the three two-party subsystems of a three-party system.
PAIR_PARTIES: dict[str, tuple[int, int]] = {"AB": (0, 1), "AC": (0, 2), "BC": (1, 2)}


def _full(n: int) -> int:
    return (1 << n) - 1


def party_bit(n: int, party: int) -> int:
    """Mask with only ``party``'s bit set."""
    if not 0 <= party < n:
        raise InvalidPatternError(f"party index {party} out of range for N={n}")
    return 1 << (n - 1 - party)


def mask_to_string(n: int, mask: int) -> str:
    return format(mask, f"0{n}b")


@dataclass(frozen=True, order=True)
class GhzLabel:
    """One of the ``2**N`` GHZ basis states, in canonical form."""

    n_parties: int
    mask: int
    sign: str = PLUS

    def __post_init__(self):
        if self.n_parties < 2:
            raise InvalidPatternError("a GHZ label needs at least two parties")
        if not 0 <= self.mask < 1 << (self.n_parties - 1):
            raise InvalidPatternError(
                f"mask {self.mask} is not canonical for N={self.n_parties}"
            )
        if self.sign not in _SIGNS:
            raise InvalidPatternError(f"sign must be '+' or '-', got {self.sign!r}")

    @property
    def pattern(self) -> str:
        return mask_to_string(self.n_parties, self.mask)

    @property
    def flipped(self) -> frozenset[int]:
        """Minimal set of parties whose flip maps the no-error state onto this label."""
        return minimal_flips(self.n_parties, self.mask)

    def __str__(self) -> str:
        return f"GHZ[{self.n_parties};{self.pattern};{self.sign}]"


def canonicalize(n: int, mask: int, sign: str = PLUS) -> tuple[GhzLabel, int]:
    """Bring a raw ``(pattern, sign)`` pair into canonical form.

    Returns the label together with the overall phase picked up on the way:
    complementing the pattern of ``|x> - |~x>`` gives ``-(|~x> - |x>)``, so a
    complemented minus-sector state carries phase -1.  Everything else is +1.
    """
    if not 0 <= mask <= _full(n):
        raise InvalidPatternError(f"mask {mask} out of range for N={n}")
    if mask & party_bit(n, 0):
        return GhzLabel(n, mask ^ _full(n), sign), (-1 if sign == MINUS else 1)
    return GhzLabel(n, mask, sign), 1


@dataclass(frozen=True)
class ErrorPattern:
    """A set of parties whose spins were bit-flipped."""

    n_parties: int
    flipped: frozenset[int]

    def __init__(self, n_parties: int, flipped: Iterable[int] = ()):
        object.__setattr__(self, "n_parties", n_parties)
        object.__setattr__(self, "flipped", frozenset(flipped))
        bad = [p for p in self.flipped if not 0 <= p < n_parties]
        if bad:
            raise InvalidPatternError(f"party indices {sorted(bad)} invalid for N={n_parties}")

    @property
    def mask(self) -> int:
        m = 0
        for p in self.flipped:
            m |= party_bit(self.n_parties, p)
        return m

    @classmethod
    def from_label(cls, label: GhzLabel) -> "ErrorPattern":
        return cls(label.n_parties, label.flipped)


def label_from_error(pattern: ErrorPattern, sign: str = PLUS) -> GhzLabel:
    """Label reached by applying ``pattern`` to the no-error state of that sign."""
    return canonicalize(pattern.n_parties, pattern.mask, sign)[0]


def apply_flip(label: GhzLabel, party: int) -> GhzLabel:
    """Bit-flip one party's spin. Involutive; the global phase is dropped."""
    raw = label.mask ^ party_bit(label.n_parties, party)
    return canonicalize(label.n_parties, raw, label.sign)[0]


def minimal_flips(n: int, mask: int) -> frozenset[int]:
    """Smallest flip set (ties: lexicographically first) producing ``mask``."""
    ones = tuple(p for p in range(n) if mask & party_bit(n, p))
    zeros = tuple(p for p in range(n) if not mask & party_bit(n, p))
    return frozenset(min(ones, zeros, key=lambda t: (len(t), t)))


@lru_cache(maxsize=None)
def ensemble_order(n: int) -> tuple[int, ...]:
    """Canonical masks in ensemble order.

    Labels are ordered by error weight and then by the flipped parties, which
    for three parties gives no error, flip on A, flip on B, flip on C.
    """
    if n < 2:
        raise InvalidPatternError("need at least two parties")

    def key(m):
        f = tuple(sorted(minimal_flips(n, m)))
        return len(f), f

    return tuple(sorted(range(1 << (n - 1)), key=key))


def ensemble_labels(n: int, sign: str = PLUS) -> list[GhzLabel]:
    return [GhzLabel(n, m, sign) for m in ensemble_order(n)]


def ensemble_index(label: GhzLabel) -> int:
    """Position of ``label`` (either sign) in :func:`ensemble_order`."""
    return _order_index(label.n_parties)[label.mask]


@lru_cache(maxsize=None)
def _order_index(n: int) -> dict[int, int]:
    return {m: i for i, m in enumerate(ensemble_order(n))}


def all_labels(n: int) -> list[GhzLabel]:
    """All ``2**N`` labels: plus sector first, both in ensemble order."""
    return ensemble_labels(n, PLUS) + ensemble_labels(n, MINUS)


_LABEL_RE = re.compile(r"^GHZ\[(\d+);([01]+);([+-])\]$")


def parse_label(text: str) -> GhzLabel:
    """Inverse of ``str(label)``; non-canonical patterns are canonicalized."""
    m = _LABEL_RE.match(text.strip())
    if not m:
        raise InvalidPatternError(f"cannot parse GHZ label {text!r}")
    n = int(m.group(1))
    if len(m.group(2)) != n:
        raise InvalidPatternError(f"pattern length does not match N in {text!r}")
    return canonicalize(n, int(m.group(2), 2), m.group(3))[0]


def pair_name(parties: Iterable[int]) -> str:
    return "".join(PARTY_NAMES[p] for p in sorted(parties))
