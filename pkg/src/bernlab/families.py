"""Marginal families: site-indexed Bernoulli marginals and their diagnostics.

A family assigns to every group element g a marginal mu_g on {0, 1},
uniformly bounded away from 0 and 1, together with a limit marginal
lambda and an infinite *pinned* set of sites where mu_g equals lambda
exactly.  The pinned sites are what make measure-neutral coordinate
swaps possible; the unpinned deviations drive the divergence that the
stopping-time construction consumes.

Shipped family kinds
--------------------
``constant``            mu_g = lambda everywhere (every site pinned).
``z_demo``              the workhorse over Z; see :class:`ZDemoFamily`.
``z2_demo``             L1-radial analogue over Z^2.
``lamplighter_folner``  experimental radial profile over Z/2 wr Z,
                        flagged: radial profiles carry no guarantee on
                        exponential-growth groups, diagnostics only.
``finitely_perturbed``  equals lambda outside a declared finite support;
                        the exactness oracle used throughout the tests.
``f2_radial``           geometrically decaying radial profile on F2 for
                        the summability contrast diagnostic.

All diagnostic operations are partial sums over word-metric balls and
always report the truncation radius; nothing here claims convergence or
divergence beyond monotone trends.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.signal import fftconvolve

from .errors import BallCapError
from .groups import GroupModel, ZGroup, make_group


class Side(Enum):
    PLUS = "Plus"
    MINUS = "Minus"
    NEUTRAL = "Neutral"


@dataclass(frozen=True)
class EtaWeights:
    """Log-ratio weights of a marginal against the limit marginal."""

    eta0: float
    eta1: float

    @property
    def gap(self) -> float:
        """eta0 - eta1, the increment magnitude of a swap at this site."""
        return self.eta0 - self.eta1

    @property
    def sup(self) -> float:
        return max(abs(self.eta0), abs(self.eta1))


def _check_probability(p: float, what: str) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"{what} must lie strictly inside (0, 1), got {p}")
    return p


class MarginalFamily:
    """Base class; subclasses fix the profile and the pinned set."""

    kind = "?"
    experimental = False

    def __init__(self, model: GroupModel, lambda0: float, delta: float):
        self.model = model
        self.lambda0 = _check_probability(lambda0, "lambda(0)")
        self.delta = float(delta)
        if not 0.0 < self.delta <= 0.5:
            raise ValueError(f"delta must be in (0, 1/2], got {delta}")
        if not self.delta <= self.lambda0 <= 1.0 - self.delta:
            raise ValueError("lambda(0) must respect the delta bounds")

    # -- profile ---------------------------------------------------------------

    def mu0(self, g) -> float:
        """P(x_g = 0); equals lambda(0) exactly on pinned sites."""
        raise NotImplementedError

    def is_pinned(self, g) -> bool:
        raise NotImplementedError

    def base_deviation(self, g) -> float:
        """Profile deviation before pinning (diagnostic for the pinned-site
        square-summability budget); equals mu0(g) - lambda0 off the pinned set."""
        raise NotImplementedError

    pinned_base_bound: float = math.inf

    def mu1(self, g) -> float:
        return 1.0 - self.mu0(g)

    def eta(self, g) -> EtaWeights:
        """Log weights (log mu_g(0)/lambda(0), log mu_g(1)/lambda(1))."""
        p = self.mu0(g)
        return EtaWeights(
            math.log(p / self.lambda0),
            math.log((1.0 - p) / (1.0 - self.lambda0)),
        )

    def classify(self, g) -> Side:
        p = self.mu0(g)
        if p > self.lambda0:
            return Side.PLUS
        if p < self.lambda0:
            return Side.MINUS
        return Side.NEUTRAL

    # -- vector paths ----------------------------------------------------------

    def mu0_range(self, lo: int, hi: int) -> np.ndarray:
        """Z models only: mu0 over the inclusive site range [lo, hi]."""
        raise NotImplementedError(f"{self.kind} has no integer-range fast path")

    def mu0_many(self, sites: np.ndarray) -> np.ndarray:
        """Z models only: mu0 at an arbitrary int64 site array."""
        raise NotImplementedError(f"{self.kind} has no integer-array fast path")

    def ball_profile(self, R: int):
        """(elements, mu0 array) over ball(R) in canonical order."""
        elements = self.model.ball(R)
        vals = np.array([self.mu0(g) for g in elements], dtype=np.float64)
        return elements, vals

    # -- partial-sum diagnostics -------------------------------------------------

    def kakutani_partial(self, g, R: int) -> float:
        """Sum over h in ball(R) of (mu0(gh) - mu0(h))^2."""
        if isinstance(self.model, ZGroup):
            p = self.mu0_range(-R, R)
            q = self.mu0_range(-R + g, R + g)
            return float(np.sum((q - p) ** 2))
        total = 0.0
        for h in self.model.ball(R):
            total += (self.mu0(self.model.mul(g, h)) - self.mu0(h)) ** 2
        return total

    def divergence_partial(self, R: int, side: Side | str = Side.PLUS) -> float:
        """Sum over ball(R) (one orientation, or all with side="All") of
        (mu0(g) - lambda0)^2."""
        if isinstance(self.model, ZGroup):
            dev = self.mu0_range(-R, R) - self.lambda0
        else:
            _, vals = self.ball_profile(R)
            dev = vals - self.lambda0
        return float(np.sum(_side_filter(dev, side) ** 2))

    def l2_tail_profile(self, R: int) -> float:
        """Square deviation mass inside ball(R); same sum as
        ``divergence_partial(R, "Neutral"->all)`` but reported in the
        equivalence-diagnostic context."""
        return self.divergence_partial(R, side=_ALL)

    def conservativity_partial(self, c: float, R: int, R_inner: int) -> float:
        """Sum over g in ball(R) of exp(-c * kakutani_partial(g, R_inner))."""
        if c <= 0:
            raise ValueError("c must be positive")
        if isinstance(self.model, ZGroup):
            kvec = self._kakutani_vector(R, R_inner)
            center = len(kvec) // 2
            window = kvec[center - R : center + R + 1]
            return float(np.sum(np.exp(-c * window)))
        total = 0.0
        for g in self.model.ball(R):
            total += math.exp(-c * self.kakutani_partial(g, R_inner))
        return total

    def _kakutani_vector(self, R: int, R_inner: int) -> np.ndarray:
        """kakutani_partial(g, R_inner) for all |g| <= R, via one FFT
        cross-correlation of the deviation profile with itself."""
        key = (R, R_inner)
        cache = getattr(self, "_kv_cache", None)
        if cache is None:
            cache = self._kv_cache = {}
        if key not in cache:
            q_wide = self.mu0_range(-R - R_inner, R + R_inner) - self.lambda0
            q_win = self.mu0_range(-R_inner, R_inner) - self.lambda0
            s_win = float(np.sum(q_win**2))
            sq = q_wide**2
            cums = np.concatenate([[0.0], np.cumsum(sq)])
            # windowed sum of q^2 over [g - R_inner, g + R_inner]
            width = 2 * R_inner + 1
            w1 = cums[width:] - cums[:-width]  # index g + R
            corr = fftconvolve(q_wide, q_win[::-1], mode="valid")
            cache[key] = w1 + s_win - 2.0 * corr
        return cache[key]

    def pinned_base_partial_sum(self, R: int) -> float:
        """Sum over pinned sites in ball(R) of base_deviation^2 (the
        square-summability budget that licenses pinning)."""
        total = 0.0
        for g in self.model.ball(R):
            if self.is_pinned(g):
                total += self.base_deviation(g) ** 2
        return total

    # -- truncation-tail certificates ---------------------------------------------

    def l2_tail_bound(self, g, R: int) -> float:
        """Certified upper bound on sum over h outside ball(R) of
        (mu0(gh) - mu0(h))^2, or +inf when no certificate is available."""
        return math.inf

    # -- construction hints ----------------------------------------------------

    def schedule_sites(self):
        """(pinned, unpinned) iterators of candidate swap sites, in the
        order build_schedule should consume them."""
        pinned = (g for g in _enumerate_forever(self.model) if self.is_pinned(g))
        unpinned = (g for g in _enumerate_forever(self.model) if not self.is_pinned(g))
        return pinned, unpinned

    def relabeled(self) -> "RelabeledFamily":
        """The 0 <-> 1 symbol relabel of this family."""
        return RelabeledFamily(self)


_ALL = "All"


def _side_filter(dev: np.ndarray, side) -> np.ndarray:
    if side in (_ALL, "all", None):
        return dev
    side = Side(side) if not isinstance(side, Side) else side
    if side is Side.PLUS:
        return np.where(dev > 0, dev, 0.0)
    if side is Side.MINUS:
        return np.where(dev < 0, dev, 0.0)
    return np.where(dev == 0, dev, 0.0)


def _enumerate_forever(model: GroupModel):
    r = 0
    while True:
        yield from model.sphere(r)
        r += 1


class ConstantFamily(MarginalFamily):
    """mu_g = lambda at every site; every site counts as pinned."""

    kind = "constant"
    pinned_base_bound = 0.0

    def __init__(self, model=None, lambda0=0.5):
        model = model if model is not None else make_group("Z")
        _check_probability(lambda0, "lambda(0)")
        super().__init__(model, lambda0, min(lambda0, 1.0 - lambda0))

    def mu0(self, g) -> float:
        self.model.check(g)
        return self.lambda0

    def is_pinned(self, g) -> bool:
        return True

    def base_deviation(self, g) -> float:
        return 0.0

    def mu0_range(self, lo, hi):
        if not isinstance(self.model, ZGroup):
            raise NotImplementedError
        return np.full(hi - lo + 1, self.lambda0)

    def mu0_many(self, sites):
        if not isinstance(self.model, ZGroup):
            raise NotImplementedError
        return np.full(len(sites), self.lambda0)

    def l2_tail_bound(self, g, R):
        return 0.0

    def schedule_sites(self):
        # every site is pinned, so the unpinned reservoir is empty
        pinned = iter(_enumerate_forever(self.model))
        return pinned, iter(())


class ZDemoFamily(MarginalFamily):
    """The workhorse family over Z.

    The base profile is lambda0 + min(delta, f(|n|)) with
    f(n) = (n log(n+2))^(-1/2), whose squared deviations decay like
    1/(n log n): slowly enough that their sum over any infinite-density
    site set diverges, fast enough that one-step differences are
    square-summable.

    The pinned set is dense by design, so swap schedules never starve:

    * sites 0 and 1 stay unpinned (deviation delta, giving mu(0) = 0.6
      at the origin with the defaults);
    * in the *swap zone* ``zone_lo < |n| <= zone_hi`` (default 10^3 to
      10^5), odd negative sites stay unpinned and everything else is
      pinned, so unpinned and pinned sites interleave, and the even positive
      sites form the pinned swap reservoir;
    * beyond ``zone_hi`` every site is unpinned except |n| = 2^m
      (m >= far_exponent_min), keeping an infinite pinned sequence.

    Swap schedules draw unpinned sites from the odd negatives and pinned
    partners from the even positives, both above ``schedule_floor``.
    With that pairing, translating the swap support by any odd g with
    |g| <= zone_lo lands every coordinate on a pinned site, which is what
    makes the comparison defect vanish identically for those g.
    """

    kind = "z_demo"

    def __init__(
        self,
        model=None,
        lambda0=0.5,
        delta=0.1,
        zone_lo=1000,
        zone_hi=100_000,
        far_exponent_min=17,
        schedule_floor=1100,
    ):
        model = model if model is not None else make_group("Z")
        if not isinstance(model, ZGroup):
            raise ValueError("z_demo is defined over the Z model")
        super().__init__(model, lambda0, delta)
        self.zone_lo = int(zone_lo)
        self.zone_hi = int(zone_hi)
        self.far_exponent_min = int(far_exponent_min)
        self.schedule_floor = int(schedule_floor)
        if 2**self.far_exponent_min <= self.zone_hi:
            raise ValueError("far pinned powers must lie beyond the swap zone")
        # Budget for sum over pinned sites of base_deviation^2 (see
        # pinned_base_partial_sum); the true value is ~2.76 for the
        # defaults, computed by direct summation and padded.
        self.pinned_base_bound = 4.0

    # profile ------------------------------------------------------------

    def _base_dev_array(self, n: np.ndarray) -> np.ndarray:
        a = np.abs(n).astype(np.float64)
        with np.errstate(divide="ignore"):
            f = 1.0 / np.sqrt(a * np.log(a + 2.0))
        f[~np.isfinite(f)] = np.inf
        return np.minimum(self.delta, f)

    def _unpinned_mask(self, n: np.ndarray) -> np.ndarray:
        a = np.abs(n)
        small = (n == 0) | (n == 1)
        zone = (n < 0) & (a > self.zone_lo) & (a <= self.zone_hi) & (n % 2 != 0)
        is_pow2 = (a > 0) & ((a & (a - 1)) == 0)
        far = (a > self.zone_hi) & ~is_pow2
        return small | zone | far

    def mu0_range(self, lo: int, hi: int) -> np.ndarray:
        n = np.arange(lo, hi + 1, dtype=np.int64)
        return self._mu0_of_array(n)

    def mu0_many(self, sites: np.ndarray) -> np.ndarray:
        return self._mu0_of_array(np.asarray(sites, dtype=np.int64))

    def _mu0_of_array(self, n: np.ndarray) -> np.ndarray:
        dev = self._base_dev_array(n)
        return np.where(self._unpinned_mask(n), self.lambda0 + dev, self.lambda0)

    def mu0(self, g) -> float:
        self.model.check(g)
        return float(self._mu0_of_array(np.array([g], dtype=np.int64))[0])

    def is_pinned(self, g) -> bool:
        self.model.check(g)
        return not bool(self._unpinned_mask(np.array([g], dtype=np.int64))[0])

    def base_deviation(self, g) -> float:
        self.model.check(g)
        return float(self._base_dev_array(np.array([g], dtype=np.int64))[0])

    def pinned_base_partial_sum(self, R: int) -> float:
        n = np.arange(-R, R + 1, dtype=np.int64)
        dev = self._base_dev_array(n)
        pinned = ~self._unpinned_mask(n)
        return float(np.sum(np.where(pinned, dev, 0.0) ** 2))

    # tail certificate -----------------------------------------------------

    def l2_tail_bound(self, g, R: int) -> float:
        """Certified bound on the Kakutani tail beyond radius R.

        Three parts (derivation in docs/tail_bounds.md): an exact
        vectorized sum over the gap up to R_z = zone_hi + |g| + 1, a
        smooth-perturbation integral bound with the live logarithmic
        constant, and the pinned power-of-two needle sum evaluated
        termwise.  Nonincreasing in R by construction.
        """
        self.model.check(g)
        a = abs(g)
        if a == 0:
            return 0.0
        rz = self.zone_hi + a + 1
        total = 0.0
        if R < rz:
            # exact gap sum over R < |h| <= rz
            for lo, hi in ((-rz, -R - 1), (R + 1, rz)):
                p = self.mu0_range(lo, hi)
                q = self.mu0_range(lo + g, hi + g)
                total += float(np.sum((q - p) ** 2))
        s = max(R, rz) - a - 1
        # smooth part: 2 a^2 * integral of f'(u)^2 beyond s, with
        # f'(u)^2 <= (1 + 1/log(u+2))^2 / (4 u^3 log(u+2))
        ls = math.log(s + 2.0)
        total += 2.0 * a * a * (1.0 + 1.0 / ls) ** 2 / (8.0 * ls * s * s)
        m = self.far_exponent_min
        while m < 63:
            site = 2**m
            if site > s:
                base = site - a
                total += 4.0 / (base * math.log(base + 2.0))
            m += 1
        return total

    # schedule hints -------------------------------------------------------

    def schedule_sites(self):
        floor = self.schedule_floor

        def pinned_iter():
            n = floor + (floor % 2)  # first even >= floor
            while n <= self.zone_hi:
                yield n
                n += 2

        def unpinned_iter():
            n = floor + 1 if floor % 2 == 0 else floor + 2  # first odd > floor
            while n <= self.zone_hi - 1:
                yield -n
                n += 2

        return pinned_iter(), unpinned_iter()


class Z2DemoFamily(MarginalFamily):
    """L1-radial analogue of the Z demo family over the square lattice;
    pinned sites are the canonical-enumeration indices 2^j, j >= 3."""

    kind = "z2_demo"

    def __init__(self, model=None, lambda0=0.5, delta=0.1, pin_exponent_min=3):
        model = model if model is not None else make_group("Z2")
        super().__init__(model, lambda0, delta)
        self.pin_exponent_min = int(pin_exponent_min)
        self.pinned_base_bound = self._pinned_budget()

    def _radial_dev(self, r: int) -> float:
        if r == 0:
            return self.delta
        return min(self.delta, 1.0 / math.sqrt(r * math.log(r + 2.0)))

    def _is_pinned_index(self, idx: int) -> bool:
        return idx >= 2**self.pin_exponent_min and (idx & (idx - 1)) == 0

    def is_pinned(self, g) -> bool:
        return self._is_pinned_index(self.model.index_of(g))

    def base_deviation(self, g) -> float:
        return self._radial_dev(self.model.word_length(g))

    def mu0(self, g) -> float:
        if self.is_pinned(g):
            return self.lambda0
        return self.lambda0 + self.base_deviation(g)

    def ball_profile(self, R: int):
        elements = self.model.ball(R)
        idx = np.arange(len(elements))
        pinned = (idx >= 2**self.pin_exponent_min) & ((idx & (idx - 1)) == 0)
        radii = np.array([self.model.word_length(g) for g in elements])
        with np.errstate(divide="ignore"):
            f = 1.0 / np.sqrt(radii * np.log(radii + 2.0))
        f[~np.isfinite(f)] = np.inf
        dev = np.minimum(self.delta, f)
        vals = np.where(pinned, self.lambda0, self.lambda0 + dev)
        return elements, vals

    def _pinned_budget(self) -> float:
        # Deviations at canonical indices 2^j: radius r(m) grows like
        # sqrt(m/2), so the squared deviations decay geometrically in j.
        total = 0.0
        for j in range(self.pin_exponent_min, 64):
            idx = 2**j
            r = int(math.sqrt(idx / 2.0))  # lower bound on the radius
            total += self._radial_dev(r) ** 2
        return 2.0 * total + 1.0  # padded

    def pinned_base_partial_sum(self, R: int) -> float:
        total = 0.0
        for i, g in enumerate(self.model.ball(R)):
            if self._is_pinned_index(i):
                total += self.base_deviation(g) ** 2
        return total


class LamplighterFolnerFamily(MarginalFamily):
    """Word-radial profile on the lamplighter group.

    Experimental: radial profiles provably cannot satisfy the summable-
    increments requirement on exponential-growth groups, so Kakutani and
    conservativity outputs are numerical diagnostics with no guarantee.
    """

    kind = "lamplighter_folner"
    experimental = True

    def __init__(self, model=None, lambda0=0.5, delta=0.1, pin_exponent_min=3):
        model = model if model is not None else make_group("lamplighter")
        super().__init__(model, lambda0, delta)
        self.pin_exponent_min = int(pin_exponent_min)
        self.pinned_base_bound = 2.0
        warnings.warn(
            "lamplighter_folner is an experimental diagnostic profile with "
            "no analytic guarantee",
            stacklevel=2,
        )

    def _is_pinned_index(self, idx: int) -> bool:
        return idx >= 2**self.pin_exponent_min and (idx & (idx - 1)) == 0

    def is_pinned(self, g) -> bool:
        return self._is_pinned_index(self.model.index_of(g))

    def base_deviation(self, g) -> float:
        r = self.model.word_length(g)
        if r == 0:
            return self.delta
        return min(self.delta, 1.0 / math.sqrt(r * math.log(r + 2.0)))

    def mu0(self, g) -> float:
        if self.is_pinned(g):
            return self.lambda0
        return self.lambda0 + self.base_deviation(g)


class FinitelyPerturbedFamily(MarginalFamily):
    """Equals lambda outside a declared finite support; the exactness
    oracle: every cocycle attached to it is a finite sum."""

    kind = "finitely_perturbed"
    pinned_base_bound = 0.0

    def __init__(self, model=None, lambda0=0.5, support=None):
        model = model if model is not None else make_group("Z")
        support = dict(support or {})
        probs = [lambda0] + list(support.values())
        for p in probs:
            _check_probability(p, "marginal value")
        delta = min(min(p, 1.0 - p) for p in probs)
        super().__init__(model, lambda0, delta)
        for g in support:
            model.check(g)
        self.support = support

    def mu0(self, g) -> float:
        self.model.check(g)
        return float(self.support.get(g, self.lambda0))

    def is_pinned(self, g) -> bool:
        self.model.check(g)
        return g not in self.support

    def base_deviation(self, g) -> float:
        return self.mu0(g) - self.lambda0

    def support_radius(self) -> int:
        return max((self.model.word_length(g) for g in self.support), default=0)

    def schedule_sites(self):
        # the unpinned reservoir IS the support; report exhaustion
        # immediately instead of scanning the whole enumeration for more
        pinned = (g for g in _enumerate_forever(self.model) if g not in self.support)
        unpinned = iter(sorted(self.support, key=self.model.index_of))
        return pinned, unpinned

    def mu0_range(self, lo: int, hi: int) -> np.ndarray:
        if not isinstance(self.model, ZGroup):
            raise NotImplementedError
        out = np.full(hi - lo + 1, self.lambda0)
        for g, p in self.support.items():
            if lo <= g <= hi:
                out[g - lo] = p
        return out

    def mu0_many(self, sites: np.ndarray) -> np.ndarray:
        if not isinstance(self.model, ZGroup):
            raise NotImplementedError
        sites = np.asarray(sites, dtype=np.int64)
        out = np.full(len(sites), self.lambda0)
        for g, p in self.support.items():
            out[sites == g] = p
        return out

    def l2_tail_bound(self, g, R: int) -> float:
        # Exact: only sites in supp union g^{-1} supp contribute at all.
        total = 0.0
        inv_g = self.model.inv(g)
        sites = set(self.support) | {self.model.mul(inv_g, h) for h in self.support}
        for h in sites:
            if self.model.word_length(h) > R:
                gh = self.model.mul(g, h)
                total += (self.mu0(gh) - self.mu0(h)) ** 2
        return total


class F2RadialFamily(MarginalFamily):
    """Geometrically decaying radial profile on the free group.

    The deviation at word length r is min(delta, decay_base^(-r)).  With
    the default base 4 the squared deviations times the 4*3^(r-1) sphere
    growth form a geometric series with ratio 3/16, so the square-deviation
    profile converges, giving the amenable/non-amenable contrast diagnostic.
    Radial sums are evaluated analytically, so radii far beyond the
    element-materialization cap are fine.
    """

    kind = "f2_radial"

    def __init__(self, model=None, lambda0=0.5, delta=0.1, decay_base=4.0, pin_exponent_min=3):
        model = model if model is not None else make_group("F2")
        super().__init__(model, lambda0, delta)
        self.decay_base = float(decay_base)
        if self.decay_base <= math.sqrt(3.0):
            raise ValueError("decay_base must exceed sqrt(3) for a summable profile")
        self.pin_exponent_min = int(pin_exponent_min)
        self.pinned_base_bound = float(
            sum(self._radial_dev(r) ** 2 for r in range(64)) + 1.0
        )

    def _radial_dev(self, r: int) -> float:
        return min(self.delta, self.decay_base ** (-r))

    def _is_pinned_index(self, idx: int) -> bool:
        return idx >= 2**self.pin_exponent_min and (idx & (idx - 1)) == 0

    def is_pinned(self, g) -> bool:
        return self._is_pinned_index(self.model.index_of(g))

    def base_deviation(self, g) -> float:
        return self._radial_dev(self.model.word_length(g))

    def mu0(self, g) -> float:
        if self.is_pinned(g):
            return self.lambda0
        return self.lambda0 + self.base_deviation(g)

    @staticmethod
    def _sphere_size(r: int) -> int:
        return 1 if r == 0 else 4 * 3 ** (r - 1)

    def _pinned_count_in_sphere(self, r: int) -> int:
        lo = 2 * 3 ** (r - 1) - 1 if r > 0 else 0  # ball_size(r-1)
        hi = 2 * 3**r - 1  # ball_size(r)
        count = 0
        j = self.pin_exponent_min
        while 2**j < hi:
            if 2**j >= lo:
                count += 1
            j += 1
        return count

    def divergence_partial(self, R: int, side: Side | str = Side.PLUS) -> float:
        # All deviations are nonnegative, so Plus and All coincide.
        if side in (Side.MINUS, "Minus"):
            return 0.0
        total = 0.0
        for r in range(R + 1):
            count = self._sphere_size(r) - self._pinned_count_in_sphere(r)
            total += count * self._radial_dev(r) ** 2
        return total

    def l2_tail_profile(self, R: int) -> float:
        return self.divergence_partial(R, side=_ALL)

    def _full_square_mass_beyond(self, S: int) -> float:
        """Sum over all |h| > S of base deviation squared (pinning ignored,
        which only enlarges the bound)."""
        total = 0.0
        r = max(S + 1, 0)
        while True:
            term = self._sphere_size(r) * self._radial_dev(r) ** 2
            total += term
            if term < 1e-300 or r > 2000:
                break
            r += 1
        return total

    def l2_tail_bound(self, g, R: int) -> float:
        a = self.model.word_length(g)
        if a == 0:
            return 0.0
        # (mu0(gh) - mu0(h))^2 <= 2 dev(gh)^2 + 2 dev(h)^2 and |gh| >= |h| - |g|.
        return 2.0 * self._full_square_mass_beyond(R - a) + 2.0 * self._full_square_mass_beyond(R)


class RelabeledFamily(MarginalFamily):
    """The 0 <-> 1 symbol swap of a base family (covers lambda(0) < 1/2)."""

    def __init__(self, base: MarginalFamily):
        self.base = base
        super().__init__(base.model, 1.0 - base.lambda0, base.delta)
        self.kind = base.kind + "_relabeled"
        self.pinned_base_bound = base.pinned_base_bound
        self.experimental = base.experimental

    def mu0(self, g) -> float:
        return 1.0 - self.base.mu0(g)

    def is_pinned(self, g) -> bool:
        return self.base.is_pinned(g)

    def base_deviation(self, g) -> float:
        return -self.base.base_deviation(g)

    def mu0_range(self, lo: int, hi: int) -> np.ndarray:
        return 1.0 - self.base.mu0_range(lo, hi)

    def mu0_many(self, sites: np.ndarray) -> np.ndarray:
        return 1.0 - self.base.mu0_many(sites)

    def l2_tail_bound(self, g, R: int) -> float:
        return self.base.l2_tail_bound(g, R)

    def schedule_sites(self):
        return self.base.schedule_sites()

    def pinned_base_partial_sum(self, R: int) -> float:
        return self.base.pinned_base_partial_sum(R)


_FAMILY_KINDS = {
    "constant": ConstantFamily,
    "z_demo": ZDemoFamily,
    "z2_demo": Z2DemoFamily,
    "lamplighter_folner": LamplighterFolnerFamily,
    "finitely_perturbed": FinitelyPerturbedFamily,
    "f2_radial": F2RadialFamily,
}


def make_family(kind: str, **params) -> MarginalFamily:
    """Construct a marginal family by config name."""
    try:
        cls = _FAMILY_KINDS[kind]
    except KeyError:
        raise ValueError(
            f"unknown family kind {kind!r}; choose from {sorted(_FAMILY_KINDS)}"
        )
    return cls(**params)
