"""Finitely generated group models with canonical enumerations.

Four concrete models are provided: the integers, the square lattice with
its L1 word metric, the lamplighter group Z/2 wr Z, and the free group on
two letters.  Every model exposes word-metric spheres and balls, a total
canonical order (word length first, then lexicographic normal form), a
prefix-stable enumeration, and stable 64-bit coordinate codes feeding the
configuration sampler.

Element payloads are plain immutable Python values:

====================  =========================================
model                 payload
====================  =========================================
Z                     int
Z2                    (int, int)
lamplighter           (frozenset of lit positions, int cursor)
F2                    reduced word over 'a', 'A', 'b', 'B'
====================  =========================================

Normal-form strings (used for ordering and serialization) are the decimal
integer for Z, "(a,b)" for Z2, "pos|l1,l2,..." with lamps sorted for the
lamplighter, and the reduced word itself (empty word "e") for F2.  The
within-sphere order is plain ASCII comparison of these strings; note that
"-" sorts before every digit, which is why Z enumerates as 0, -1, 1, ...
"""

from __future__ import annotations

from bisect import bisect_left
from collections import deque

import numpy as np

from .errors import BallCapError, ModelMismatchError
from .rng import MASK64, mix64, mix64_array, string_code

DEFAULT_BALL_CAP = 10**7


class GroupModel:
    """Shared machinery: sphere caching, enumeration, canonical index."""

    kind: str = "?"

    def __init__(self, ball_cap: int = DEFAULT_BALL_CAP):
        self.ball_cap = int(ball_cap)
        self._spheres: list[list] = []  # radius -> sorted payload list
        self._cum_sizes: list[int] = []  # radius -> |ball(radius)|
        self._sphere_keys: dict[int, list] = {}  # radius -> normal forms

    # -- per-model primitives -------------------------------------------------

    def identity(self):
        raise NotImplementedError

    def mul(self, a, b):
        raise NotImplementedError

    def inv(self, a):
        raise NotImplementedError

    def word_length(self, a) -> int:
        raise NotImplementedError

    def normal_form(self, a) -> str:
        raise NotImplementedError

    def parse(self, text: str):
        raise NotImplementedError

    def generators(self) -> list:
        raise NotImplementedError

    def coordinate_code(self, a) -> int:
        """Stable uint64 code for the PRF; defaults to hashing the normal form."""
        return string_code(self.kind + ":" + self.normal_form(a))

    def coordinate_codes(self, elements) -> np.ndarray:
        return np.array([self.coordinate_code(a) for a in elements], dtype=np.uint64)

    def _sphere_raw(self, radius: int) -> list:
        """Unsorted list of payloads at exactly `radius` (model-specific)."""
        raise NotImplementedError

    def check(self, a):
        """Validate that `a` is a payload of this model; raise otherwise."""
        raise NotImplementedError

    # -- generic derived operations -------------------------------------------

    def sphere(self, radius: int) -> list:
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        while len(self._spheres) <= radius:
            r = len(self._spheres)
            raw = self._sphere_raw(r)
            raw.sort(key=self.normal_form)
            prev = self._cum_sizes[-1] if self._cum_sizes else 0
            if prev + len(raw) > self.ball_cap:
                raise BallCapError(
                    f"{self.kind}: ball({r}) needs {prev + len(raw)} elements, "
                    f"cap is {self.ball_cap}"
                )
            self._spheres.append(raw)
            self._cum_sizes.append(prev + len(raw))
        return self._spheres[radius]

    def ball(self, radius: int) -> list:
        """All elements of word length <= radius in canonical order."""
        self.sphere(radius)
        out = []
        for r in range(radius + 1):
            out.extend(self._spheres[r])
        return out

    def ball_size(self, radius: int) -> int:
        if radius < 0:
            return 0
        self.sphere(radius)
        return self._cum_sizes[radius]

    def enumerate_elements(self, n: int) -> list:
        """First n elements in canonical order (prefix-stable)."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if n > self.ball_cap:
            raise BallCapError(f"{self.kind}: enumeration of {n} exceeds cap")
        out: list = []
        r = 0
        while len(out) < n:
            out.extend(self.sphere(r))
            r += 1
        return out[:n]

    def index_of(self, a) -> int:
        """Position of `a` in the canonical enumeration."""
        self.check(a)
        w = self.word_length(a)
        base = self.ball_size(w - 1) if w > 0 else 0
        keys = self._sphere_keys.get(w)
        if keys is None:
            keys = [self.normal_form(x) for x in self.sphere(w)]
            self._sphere_keys[w] = keys
        i = bisect_left(keys, self.normal_form(a))
        return base + i


class ZGroup(GroupModel):
    """The integers with generators {+1, -1}."""

    kind = "Z"

    def identity(self):
        return 0

    def check(self, a):
        if not isinstance(a, (int, np.integer)) or isinstance(a, bool):
            raise ModelMismatchError(f"Z expects int payloads, got {a!r}")

    def mul(self, a, b):
        self.check(a)
        self.check(b)
        return a + b

    def inv(self, a):
        self.check(a)
        return -a

    def word_length(self, a):
        self.check(a)
        return abs(a)

    def normal_form(self, a):
        return str(a)

    def parse(self, text):
        return int(text)

    def generators(self):
        return [1, -1]

    def coordinate_code(self, a):
        self.check(a)
        return mix64(a & MASK64)

    def coordinate_codes(self, elements) -> np.ndarray:
        arr = np.ascontiguousarray(elements, dtype=np.int64)
        return mix64_array(arr.view(np.uint64))

    def range_codes(self, lo: int, hi: int) -> np.ndarray:
        """Codes for the inclusive integer range [lo, hi] (fast path)."""
        arr = np.arange(lo, hi + 1, dtype=np.int64)
        return mix64_array(arr.view(np.uint64))

    def _sphere_raw(self, radius):
        if radius == 0:
            return [0]
        return [-radius, radius]

    def ball_size(self, radius):
        return 0 if radius < 0 else 2 * radius + 1

    def index_of(self, a):
        self.check(a)
        if a == 0:
            return 0
        return 2 * a if a > 0 else -2 * a - 1


class Z2Group(GroupModel):
    """The square lattice Z^2 with the L1 word metric."""

    kind = "Z2"

    def identity(self):
        return (0, 0)

    def check(self, a):
        if (
            not isinstance(a, tuple)
            or len(a) != 2
            or not all(isinstance(c, (int, np.integer)) and not isinstance(c, bool) for c in a)
        ):
            raise ModelMismatchError(f"Z2 expects (int, int) payloads, got {a!r}")

    def mul(self, a, b):
        self.check(a)
        self.check(b)
        return (a[0] + b[0], a[1] + b[1])

    def inv(self, a):
        self.check(a)
        return (-a[0], -a[1])

    def word_length(self, a):
        self.check(a)
        return abs(a[0]) + abs(a[1])

    def normal_form(self, a):
        return f"({a[0]},{a[1]})"

    def parse(self, text):
        inner = text.strip()
        if inner.startswith("(") and inner.endswith(")"):
            inner = inner[1:-1]
        x, y = inner.split(",")
        return (int(x), int(y))

    def generators(self):
        return [(1, 0), (-1, 0), (0, 1), (0, -1)]

    def coordinate_code(self, a):
        self.check(a)
        packed = ((a[0] & 0xFFFFFFFF) << 32) | (a[1] & 0xFFFFFFFF)
        return mix64(packed & MASK64)

    def coordinate_codes(self, elements) -> np.ndarray:
        arr = np.asarray(elements, dtype=np.int64)
        lo32 = np.uint64(0xFFFFFFFF)
        a0 = arr[:, 0].astype(np.uint64) & lo32
        a1 = arr[:, 1].astype(np.uint64) & lo32
        return mix64_array((a0 << np.uint64(32)) | a1)

    def _sphere_raw(self, radius):
        if radius == 0:
            return [(0, 0)]
        out = []
        for x in range(-radius, radius + 1):
            rest = radius - abs(x)
            if rest == 0:
                out.append((x, 0))
            else:
                out.append((x, rest))
                out.append((x, -rest))
        return out

    def ball_size(self, radius):
        return 0 if radius < 0 else 2 * radius * radius + 2 * radius + 1


class LamplighterGroup(GroupModel):
    """Z/2 wr Z with generators {toggle, step right, step left}.

    Payload (lamps, pos): the set of lit lamp positions and the cursor.
    Multiplication is (A, p)(B, q) = (A xor (p + B), p + q).  The word
    length is |lamps| plus the shortest walk from 0 through every lit
    lamp ending at the cursor; the closed form is cross-checked against
    breadth-first search in the tests.
    """

    kind = "lamplighter"

    def identity(self):
        return (frozenset(), 0)

    def check(self, a):
        if (
            not isinstance(a, tuple)
            or len(a) != 2
            or not isinstance(a[0], frozenset)
            or not isinstance(a[1], int)
        ):
            raise ModelMismatchError(
                f"lamplighter expects (frozenset, int) payloads, got {a!r}"
            )

    def mul(self, a, b):
        self.check(a)
        self.check(b)
        lamps_a, p = a
        lamps_b, q = b
        shifted = frozenset(p + x for x in lamps_b)
        return (lamps_a ^ shifted, p + q)

    def inv(self, a):
        self.check(a)
        lamps, p = a
        return (frozenset(x - p for x in lamps), -p)

    def word_length(self, a):
        self.check(a)
        lamps, p = a
        pts = set(lamps) | {0, p}
        lo, hi = min(pts), max(pts)
        left_first = (0 - lo) + (hi - lo) + (hi - p)
        right_first = (hi - 0) + (hi - lo) + (p - lo)
        return len(lamps) + min(left_first, right_first)

    def normal_form(self, a):
        lamps, p = a
        body = ",".join(str(x) for x in sorted(lamps))
        return f"{p}|{body}"

    def parse(self, text):
        pos_part, _, lamp_part = text.partition("|")
        lamps = frozenset(int(x) for x in lamp_part.split(",") if x != "")
        return (lamps, int(pos_part))

    def generators(self):
        return [(frozenset([0]), 0), (frozenset(), 1), (frozenset(), -1)]

    def _sphere_raw(self, radius):
        # BFS layers are cached across calls; each new radius extends the
        # frontier by one generator step.
        if not hasattr(self, "_bfs_dist"):
            self._bfs_dist = {self.identity(): 0}
            self._bfs_frontier = [self.identity()]
            self._bfs_radius = 0
        while self._bfs_radius < radius:
            nxt = []
            for el in self._bfs_frontier:
                for g in self.generators():
                    cand = self.mul(el, g)
                    if cand not in self._bfs_dist:
                        self._bfs_dist[cand] = self._bfs_radius + 1
                        nxt.append(cand)
            self._bfs_frontier = nxt
            self._bfs_radius += 1
            if len(self._bfs_dist) > self.ball_cap:
                raise BallCapError(
                    f"lamplighter: BFS to radius {self._bfs_radius} exceeds cap"
                )
        if radius == 0:
            return [self.identity()]
        if radius == self._bfs_radius:
            return list(self._bfs_frontier)
        return [e for e, d in self._bfs_dist.items() if d == radius]


class FreeGroupF2(GroupModel):
    """The free group on two letters; inverses are the upper-case letters."""

    kind = "F2"

    _INV = {"a": "A", "A": "a", "b": "B", "B": "b"}

    def identity(self):
        return ""

    def check(self, a):
        if not isinstance(a, str) or any(c not in "aAbB" for c in a):
            raise ModelMismatchError(f"F2 expects reduced words over aAbB, got {a!r}")
        for x, y in zip(a, a[1:]):
            if self._INV[x] == y:
                raise ModelMismatchError(f"F2 payload {a!r} is not reduced")

    def mul(self, a, b):
        self.check(a)
        self.check(b)
        out = list(a)
        for c in b:
            if out and self._INV[out[-1]] == c:
                out.pop()
            else:
                out.append(c)
        return "".join(out)

    def inv(self, a):
        self.check(a)
        return "".join(self._INV[c] for c in reversed(a))

    def word_length(self, a):
        self.check(a)
        return len(a)

    def normal_form(self, a):
        return a if a else "e"

    def parse(self, text):
        return "" if text == "e" else text

    def generators(self):
        return ["a", "A", "b", "B"]

    def _sphere_raw(self, radius):
        if radius == 0:
            return [""]
        prev = self.sphere(radius - 1)
        out = []
        for w in prev:
            last_inv = self._INV[w[-1]] if w else None
            for c in "ABab":
                if c != last_inv:
                    out.append(w + c)
        return out

    def ball_size(self, radius):
        if radius < 0:
            return 0
        return 2 * 3**radius - 1


_KINDS = {
    "Z": ZGroup,
    "Z2": Z2Group,
    "lamplighter": LamplighterGroup,
    "F2": FreeGroupF2,
}


def make_group(kind: str, ball_cap: int = DEFAULT_BALL_CAP) -> GroupModel:
    """Construct a group model by config name."""
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown group kind {kind!r}; choose from {sorted(_KINDS)}")
    return cls(ball_cap=ball_cap)
