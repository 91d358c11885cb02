"""Sampled product configurations and the exact finite-support cocycle.

A configuration is a point of the product space {0,1}^G, sampled
coordinatewise from a marginal family.  Bits are pure functions of
(seed, raw site): nothing is cached, every read recomputes the same
counter-mode draw, so configurations are immutable, thread-safe and
cheap to fork.

The group acts by (g x)(h) = x(g^{-1} h).  Internally a configuration
carries a `shift` element recording the accumulated action, and an
`overrides` table in raw coordinates recording coordinate edits made by
swap maps; `value` resolves the raw site first, then consults the
overrides, then the sampler.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import DomainError
from .families import MarginalFamily
from .groups import ZGroup
from .rng import bernoulli_zero, bernoulli_zero_array, prf_uniform_array


@dataclass(frozen=True)
class Configuration:
    """One lazily sampled point of the product space."""

    family: MarginalFamily
    seed: int
    shift: Any = None
    overrides: Mapping[Any, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.shift is None:
            object.__setattr__(self, "shift", self.family.model.identity())
        self.family.model.check(self.shift)

    def raw_site(self, h) -> Any:
        model = self.family.model
        return model.mul(model.inv(self.shift), h)

    def value(self, h) -> int:
        """The bit at site h (0 or 1)."""
        raw = self.raw_site(h)
        if raw in self.overrides:
            return self.overrides[raw]
        code = self.family.model.coordinate_code(raw)
        return bernoulli_zero(self.seed, code, self.family.mu0(raw))

    def values_at(self, sites: np.ndarray) -> np.ndarray:
        """Vectorized bits at an int64 array of sites (Z models only)."""
        model = self.family.model
        if not isinstance(model, ZGroup):
            raise DomainError("vectorized reads need the Z model")
        sites = np.asarray(sites, dtype=np.int64)
        raw = sites - self.shift
        codes = model.coordinate_codes(raw)
        p0 = self.family.mu0_many(raw)
        bits = bernoulli_zero_array(self.seed, codes, p0)
        for site, bit in self.overrides.items():
            bits[raw == site] = bit
        return bits

    def values_range(self, lo: int, hi: int) -> np.ndarray:
        """Vectorized bits over the inclusive site range [lo, hi] (Z only)."""
        model = self.family.model
        if not isinstance(model, ZGroup):
            raise DomainError("range reads need the Z model")
        rlo, rhi = lo - self.shift, hi - self.shift
        codes = model.range_codes(rlo, rhi)
        p0 = self.family.mu0_range(rlo, rhi)
        u = prf_uniform_array(self.seed, codes)
        bits = np.where(u < p0, 0, 1).astype(np.int8)
        for site, bit in self.overrides.items():
            if rlo <= site <= rhi:
                bits[site - rlo] = bit
        return bits

    def with_overrides(self, edits: Mapping[Any, int]) -> "Configuration":
        """A copy with extra coordinate edits, given in raw coordinates."""
        merged = dict(self.overrides)
        for site, bit in edits.items():
            self.family.model.check(site)
            if bit not in (0, 1):
                raise ValueError(f"bit must be 0 or 1, got {bit!r}")
            merged[site] = int(bit)
        return Configuration(self.family, self.seed, self.shift, merged)


def sample(family: MarginalFamily, seed: int) -> Configuration:
    """Draw a configuration from the product measure of `family`."""
    return Configuration(family, int(seed))


def act(g, x: Configuration) -> Configuration:
    """The shift action: (g x)(h) = x(g^{-1} h)."""
    model = x.family.model
    model.check(g)
    return Configuration(x.family, x.seed, model.mul(g, x.shift), x.overrides)


@dataclass(frozen=True)
class CylinderSet:
    """Finitely many coordinate constraints {x : x(h) = b for (h, b)}."""

    constraints: tuple

    @classmethod
    def of(cls, constraints: Mapping[Any, int]) -> "CylinderSet":
        return cls(tuple(constraints.items()))

    def as_dict(self) -> dict:
        return dict(self.constraints)

    def contains(self, x: Configuration) -> bool:
        return all(x.value(h) == b for h, b in self.constraints)

    def translate(self, g, model) -> "CylinderSet":
        """The set g . C = {x : g^{-1} x in C}, constraining sites g h."""
        return CylinderSet(tuple((model.mul(g, h), b) for h, b in self.constraints))


def cylinder_measure(family: MarginalFamily, cylinder) -> float:
    """Product measure of a cylinder set (dict or CylinderSet)."""
    items = cylinder.constraints if isinstance(cylinder, CylinderSet) else cylinder.items()
    seen = {}
    out = 1.0
    for h, b in items:
        if b not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {b!r}")
        if h in seen:
            if seen[h] != b:
                return 0.0  # contradictory constraints
            continue
        seen[h] = b
        p = family.mu0(h)
        out *= p if b == 0 else 1.0 - p
    return out


def exact_rn(g, x: Configuration) -> float:
    """log of the Radon-Nikodym derivative d(mu circ g^{-1})/d mu at x,
    for families equal to the limit marginal off a finite support.

    Only the finitely many sites where mu_h or mu_{gh} deviates
    contribute, so the sum is exact; this is the oracle the truncated
    estimators are audited against.
    """
    family = x.family
    model = family.model
    support = getattr(family, "support", None)
    if support is None:
        if getattr(family, "kind", "") == "constant":
            return 0.0
        raise DomainError(
            "exact_rn needs a finite-support family (finitely_perturbed or constant)"
        )
    inv_g = model.inv(g)
    sites = set(support) | {model.mul(inv_g, h) for h in support}
    total = 0.0
    for h in sites:
        bit = x.value(h)
        mu_h = family.mu0(h) if bit == 0 else family.mu1(h)
        gh = model.mul(g, h)
        mu_gh = family.mu0(gh) if bit == 0 else family.mu1(gh)
        total += np.log(mu_h) - np.log(mu_gh)
    return float(total)
