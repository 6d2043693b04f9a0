"""Sparse multi-indices and the combinatorics behind chaos expansions.

A multi-index is a finitely supported sequence of non-negative integers
``alpha = (alpha_1, alpha_2, ...)``.  Positions are 1-based.  Instances are
immutable, hashable and stored sparsely (only nonzero multiplicities), which
keeps hashing and arithmetic cheap even when the ambient mode count is large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Factorials are computed in double precision; 170! overflows a double and
# everything used in practice lives far below this.
FACTORIAL_ORDER_CAP = 150


class MultiIndex:
    """Finitely supported multi-index, stored as sorted (position, count) pairs."""

    __slots__ = ("_entries", "_order", "_hash")

    def __init__(self, entries=()):
        if isinstance(entries, dict):
            items = entries.items()
        else:
            items = entries
        acc: dict[int, int] = {}
        for k, a in items:
            k = int(k)
            a = int(a)
            if k < 1:
                raise ValueError(f"positions are 1-based, got {k}")
            if a < 0:
                raise ValueError(f"multiplicities must be >= 0, got {a}")
            if a:
                acc[k] = acc.get(k, 0) + a
        self._entries = tuple(sorted(acc.items()))
        self._order = sum(a for _, a in self._entries)
        self._hash = hash(self._entries)

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls) -> "MultiIndex":
        return cls()

    @classmethod
    def unit(cls, k: int, count: int = 1) -> "MultiIndex":
        """count * eps_k."""
        return cls([(k, count)])

    @classmethod
    def from_dense(cls, values) -> "MultiIndex":
        """Build from a dense prefix (value at position k is values[k-1])."""
        return cls((k + 1, int(v)) for k, v in enumerate(values) if v)

    @classmethod
    def from_characteristic_set(cls, positions) -> "MultiIndex":
        """Inverse of characteristic_set: count repeated positions."""
        return cls((k, 1) for k in positions)

    @classmethod
    def from_string(cls, text: str) -> "MultiIndex":
        """Parse the textual encoding: "0" or comma-joined characteristic set."""
        text = text.strip()
        if text == "0":
            return cls()
        return cls.from_characteristic_set(int(p) for p in text.split(","))

    # -- basic queries ------------------------------------------------------

    @property
    def order(self) -> int:
        """|alpha| = sum of multiplicities."""
        return self._order

    @property
    def entries(self):
        """Sorted tuple of (position, multiplicity) pairs, multiplicities >= 1."""
        return self._entries

    def multiplicity(self, k: int) -> int:
        for pos, a in self._entries:
            if pos == k:
                return a
        return 0

    def max_position(self) -> int:
        """Largest position in the support; 0 for the zero index."""
        return self._entries[-1][0] if self._entries else 0

    def dense(self, length: int):
        out = [0] * length
        for k, a in self._entries:
            if k > length:
                raise ValueError(f"support position {k} exceeds length {length}")
            out[k - 1] = a
        return tuple(out)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        acc = dict(self._entries)
        for k, a in other._entries:
            acc[k] = acc.get(k, 0) + a
        return MultiIndex(acc)

    def add(self, other: "MultiIndex") -> "MultiIndex":
        return self + other

    def sub_one(self, k: int):
        """alpha - eps_k, or None when alpha_k = 0.

        Absence is a value, not an error: callers multiply the accompanying
        term by sqrt(alpha_k) = 0.
        """
        a = self.multiplicity(k)
        if a == 0:
            return None
        acc = dict(self._entries)
        acc[k] = a - 1
        return MultiIndex(acc)

    def factorial(self) -> float:
        """alpha! = prod_k alpha_k!  (double precision, order-capped)."""
        if self._order > FACTORIAL_ORDER_CAP:
            raise OverflowError(
                f"|alpha| = {self._order} exceeds factorial guard {FACTORIAL_ORDER_CAP}"
            )
        out = 1.0
        for _, a in self._entries:
            out *= math.factorial(a)
        return out

    def characteristic_set(self):
        """Non-decreasing tuple listing each position k exactly alpha_k times."""
        if self._order == 0:
            raise ValueError("the zero multi-index has no characteristic set")
        out = []
        for k, a in self._entries:
            out.extend([k] * a)
        return tuple(out)

    def power(self, base) -> float:
        """prod_k base[k-1] ** alpha_k over the support (empty product = 1)."""
        out = 1.0
        for k, a in self._entries:
            if k > len(base):
                raise ValueError(f"base sequence does not cover position {k}")
            b = float(base[k - 1])
            if b <= 0.0:
                raise ValueError(f"non-positive base {b} at position {k}")
            out *= b**a
        return out

    def two_n_factor(self, r: float) -> float:
        """(2N)^{r alpha} = prod_k (2k)^{r alpha_k}."""
        out = 1.0
        for k, a in self._entries:
            out *= (2.0 * k) ** (r * a)
        return out

    # -- ordering and encoding ----------------------------------------------

    def sort_key(self):
        """Canonical graded key: (order, characteristic set)."""
        cs = self.characteristic_set() if self._order else ()
        return (self._order, cs)

    def to_string(self) -> str:
        """Textual encoding: "0" or the characteristic set joined by commas."""
        if self._order == 0:
            return "0"
        return ",".join(str(k) for k in self.characteristic_set())

    def __eq__(self, other):
        return isinstance(other, MultiIndex) and self._entries == other._entries

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def __repr__(self):
        return f"MultiIndex({self.to_string()!r})"


@dataclass(frozen=True)
class TruncationBox:
    """Finite slice of the multi-index set: |alpha| <= order, support in 1..modes."""

    order: int
    modes: int

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if self.modes < 1:
            raise ValueError("modes must be >= 1")

    def size(self) -> int:
        return math.comb(self.order + self.modes, self.modes)

    def contains(self, alpha: MultiIndex) -> bool:
        return alpha.order <= self.order and alpha.max_position() <= self.modes


def enumerate_indices(box: TruncationBox):
    """All indices of the box in canonical graded order.

    Graded by |alpha|; within a grade the characteristic sets ascend
    lexicographically (equivalently the dense prefixes descend), so the list
    starts (0), eps_1, eps_2, ...  This order is the serialization order used
    by every CSV output.
    """
    out = []
    K = box.modes

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for first in range(total, -1, -1):
            for rest in compositions(total - first, parts - 1):
                yield (first,) + rest

    for n in range(box.order + 1):
        for dense in compositions(n, K):
            out.append(MultiIndex.from_dense(dense))
    return out
