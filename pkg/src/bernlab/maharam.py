"""Height-extended skew products, orbit-return scans, and ratio-set probes.

A nonsingular shift lifts to the skew product (x, s) -> (g x, s + r(g, x))
on configurations times a height line carrying e^s ds; the lift preserves
that measure, which is what maharam_preservation_check certifies pattern
by pattern on exact families.  Orbit returns to a cylinder feed two
diagnostics: conservativity (almost every point of A comes back with a
small cocycle value) and essential-value witnesses (returns whose cocycle
value sits near a prescribed target t).

Witnesses are hunted through a stopped swap map phi with log-density
in (t, t + eps/3): for a group element g,

    r(g, x) = r(g, phi x) + c(x, phi x) + defect(g; x, phi x),

so it suffices to find g with a small cocycle at the image point and a
small translation defect.  Each accepted witness records the three
margins separately.  Truncated cocycle values are only trusted up to
their certified tail budget, and every acceptance rule leaves at least
that much slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cocycles import (
    CocycleEstimate,
    compare_defect,
    rn_cocycle,
    rn_scan,
    tail_bounds_from_mass,
)
from .configurations import Configuration, CylinderSet, act, sample
from .construction import PhiMap, build_phi, phi_rn
from .errors import BallCapError, DomainError, ModelMismatchError
from .families import MarginalFamily
from .groups import ZGroup
from .rng import derive_seed

_Z99 = 2.3263478740408408
_PATTERN_CAP = 1 << 25
_CHUNK = 1 << 16


@dataclass(frozen=True)
class MaharamPoint:
    """A configuration with its height, plus the optional pmp companion."""

    x: Configuration
    height: float
    y: Optional[Configuration] = None


@dataclass(frozen=True)
class ProductSystem:
    """A marginal family, optionally crossed with a pmp Bernoulli factor.

    The height cocycle of the product is the cocycle of the first factor
    alone: the companion is measure preserving, so it contributes nothing
    to the density and ``rn`` never reads it.
    """

    family: MarginalFamily
    y_family: Optional[MarginalFamily] = None

    def __post_init__(self):
        if self.y_family is None:
            return
        if self.y_family.model.kind != self.family.model.kind:
            raise ModelMismatchError("both factors must share one group model")
        if getattr(self.y_family, "kind", "") != "constant":
            raise ValueError("the companion factor must be a constant family")

    def sample_point(self, seed: int, height: float = 0.0) -> MaharamPoint:
        x = sample(self.family, derive_seed(seed, "x-factor"))
        y = None
        if self.y_family is not None:
            y = sample(self.y_family, derive_seed(seed, "y-factor"))
        return MaharamPoint(x, height, y)

    def rn(self, g, x: Configuration, R: int) -> CocycleEstimate:
        return rn_cocycle(self.family, g, x, R)


def maharam_step(system: ProductSystem, g, point: MaharamPoint,
                 R: int) -> tuple[MaharamPoint, CocycleEstimate]:
    """One skew-product step: act by g and add the truncated cocycle value
    to the height.  The estimate rides along so tail budgets accumulate."""
    est = system.rn(g, point.x, R)
    y = act(g, point.y) if point.y is not None else None
    return MaharamPoint(act(g, point.x), point.height + est.value, y), est


def _pattern_bits(offset: int, count: int, width: int) -> np.ndarray:
    idx = np.arange(offset, offset + count, dtype=np.uint64)
    shifts = np.arange(width, dtype=np.uint64)
    return ((idx[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.float64)


def maharam_preservation_check(family: MarginalFamily, g, cylinder,
                               interval: tuple) -> float:
    """Worst pattern-level defect of skew-product invariance on A x I.

    The image of A x I under the lift splits over bit patterns p on the
    window W = sites(A) u supp u g^{-1} supp, where the cocycle is
    constant; invariance reduces to mu(g . cyl_p) e^{r_p} = mu(cyl_p) per
    pattern, and the returned figure is the largest absolute discrepancy
    (scaled by the interval's e^hi - e^lo factor).  Needs an exact family:
    one whose marginals equal the limit off a finite declared support.
    """
    support = getattr(family, "support", None)
    if support is None and getattr(family, "kind", "") != "constant":
        raise DomainError("preservation check needs a finite-support family")
    model = family.model
    model.check(g)
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ValueError("interval must have positive length")
    constraints = (cylinder.as_dict() if isinstance(cylinder, CylinderSet)
                   else dict(cylinder))
    inv_g = model.inv(g)
    window = set(constraints)
    for h in support or ():
        window.add(h)
        window.add(model.mul(inv_g, h))
    window = sorted(window, key=model.index_of)
    free = [h for h in window if h not in constraints]
    width = len(free)
    if 2 ** width > _PATTERN_CAP:
        raise BallCapError(
            f"window has 2^{width} patterns, cap is 2^25; shrink the cylinder"
        )
    p_here = np.array([family.mu0(h) for h in window])
    p_there = np.array([family.mu0(model.mul(g, h)) for h in window])
    fixed_bits = np.array([float(constraints.get(h, 0)) for h in window])
    free_cols = np.array([i for i, h in enumerate(window) if h not in constraints],
                         dtype=np.int64)
    scale = math.exp(hi) - math.exp(lo)
    worst = 0.0
    total = 2 ** width
    offset = 0
    while offset < total:
        count = min(_CHUNK, total - offset)
        bits = np.tile(fixed_bits, (count, 1))
        if width:
            bits[:, free_cols] = _pattern_bits(offset, count, width)
        mu_here = np.where(bits == 0, p_here, 1.0 - p_here)
        mu_there = np.where(bits == 0, p_there, 1.0 - p_there)
        # The cocycle value on the pattern cylinder is a sum of log
        # ratios; the measures are plain probability products.  The two
        # sides of mu(g cyl) e^r = mu(cyl) thus go through different
        # arithmetic, so the comparison is a real numerical audit of the
        # density identity, not an algebraic tautology.
        r_p = np.sum(np.log(mu_here) - np.log(mu_there), axis=1)
        measure_here = np.prod(mu_here, axis=1)
        measure_there = np.prod(mu_there, axis=1)
        defect = np.max(np.abs(measure_there * np.exp(r_p) - measure_here))
        worst = max(worst, float(defect) * scale)
        offset += count
    return worst


@dataclass(frozen=True)
class ReturnEvent:
    """One orbit return to the reference cylinder."""

    seed: int
    g: int
    estimate: CocycleEstimate

    @property
    def value(self) -> float:
        return self.estimate.value

    @property
    def tail(self) -> float:
        return self.estimate.combined_tail(1.0)


def _membership_matrix(x: Configuration, cylinder: CylinderSet,
                       g_values: np.ndarray) -> np.ndarray:
    """Boolean vector over g_values: is g . x in the cylinder."""
    model = x.family.model
    sites = np.array([h for h, _ in cylinder.constraints], dtype=np.int64)
    bits = np.array([b for _, b in cylinder.constraints], dtype=np.int64)
    if isinstance(model, ZGroup):
        # g . x lies in the cylinder iff x matches it at the pulled-back
        # sites inv(g) h = h - g
        needed = sites[None, :] - g_values[:, None]
        values = x.values_at(needed.ravel()).reshape(needed.shape)
        return np.all(values == bits[None, :], axis=1)
    out = np.empty(len(g_values), dtype=bool)
    for i, g in enumerate(g_values):
        inv_g = model.inv(g)
        out[i] = all(x.value(model.mul(inv_g, h)) == b
                     for h, b in cylinder.constraints)
    return out


def _tail_table(family: MarginalFamily, g_values: np.ndarray, R: int) -> np.ndarray:
    out = np.empty(len(g_values))
    for i, g in enumerate(g_values):
        tau = family.l2_tail_bound(int(g), R)
        mean_b, std_b = tail_bounds_from_mass(tau, family.delta)
        out[i] = mean_b + std_b
    return out


def scan_returns(system: ProductSystem, cylinder: CylinderSet, R_group: int,
                 R_trunc: int, seeds: int, seed: int = 0) -> list:
    """Orbit returns g . x in A for sampled x in A, with truncated cocycle
    values attached.

    Membership is exact (finitely many bits are read); only the cocycle
    value is truncated, at radius R_trunc with its certified tail budget.
    Events come back sorted by sample index then group element.
    """
    family = system.family
    if not isinstance(family.model, ZGroup):
        raise DomainError("scan_returns is implemented for the Z model")
    g_values = np.concatenate([np.arange(-R_group, 0), np.arange(1, R_group + 1)])
    bounds = [tail_bounds_from_mass(family.l2_tail_bound(int(g), R_trunc),
                                    family.delta) for g in g_values]
    events = []
    for i in range(seeds):
        x = sample(family, derive_seed(seed, i))
        if not cylinder.contains(x):
            continue
        hit = _membership_matrix(x, cylinder, g_values)
        if not np.any(hit):
            continue
        r_all = rn_scan(family, x, R_trunc, R_group)
        for j in np.flatnonzero(hit):
            g = int(g_values[j])
            mean_b, std_b = bounds[j]
            events.append(ReturnEvent(
                i, g, CocycleEstimate(float(r_all[g + R_group]), R_trunc,
                                      mean_b, std_b)
            ))
    return events


@dataclass(frozen=True)
class ConservativityReport:
    """Return statistics for a cylinder under truncated-cocycle scanning."""

    samples: int
    in_set: int
    returned: int
    fraction: float
    eps: float
    r_group: int
    witness_radius: np.ndarray

    def fraction_at(self, radius: int) -> float:
        """Fraction of in-set samples whose first accepted return uses a
        group element of word length <= radius (monotone in radius)."""
        if self.in_set == 0:
            return 0.0
        ok = self.witness_radius[self.witness_radius > 0]
        return float(np.count_nonzero(ok <= radius)) / self.in_set


def conservativity_return_check(system: ProductSystem, cylinder: CylinderSet,
                                eps: float, f_excl, R_group: int, seeds: int,
                                seed: int = 0,
                                R_trunc: Optional[int] = None) -> ConservativityReport:
    """Fraction of sampled points of the cylinder that return to it with a
    certifiably small cocycle value.

    A return g is accepted when g is outside the excluded set, g . x lands
    back in the cylinder, and |r_trunc(g, x)| plus the tail budget stays
    below eps; shrinking eps therefore never gains acceptances.  The
    report keeps each sample's smallest accepting radius, so the fraction
    as a function of the scan radius is nondecreasing by construction.
    """
    family = system.family
    if not isinstance(family.model, ZGroup):
        raise DomainError("conservativity scan is implemented for the Z model")
    if R_trunc is None:
        R_trunc = max(8 * R_group, 100_000)
    excluded = {int(h) for h in f_excl}
    g_values = np.concatenate([np.arange(-R_group, 0), np.arange(1, R_group + 1)])
    allowed = np.array([int(g) not in excluded for g in g_values])
    tails = _tail_table(family, g_values, R_trunc)
    in_set = 0
    radius = []
    for i in range(seeds):
        x = sample(family, derive_seed(seed, i))
        if not cylinder.contains(x):
            continue
        in_set += 1
        hit = _membership_matrix(x, cylinder, g_values) & allowed
        best = -1
        if np.any(hit):
            r_all = rn_scan(family, x, R_trunc, R_group)
            accept = hit & (np.abs(r_all[g_values + R_group]) + tails < eps)
            if np.any(accept):
                best = int(np.min(np.abs(g_values[accept])))
        radius.append(best)
    witness_radius = np.array(radius, dtype=np.int64)
    returned = int(np.count_nonzero(witness_radius > 0))
    fraction = returned / in_set if in_set else 0.0
    return ConservativityReport(seeds, in_set, returned, fraction, eps,
                                R_group, witness_radius)


@dataclass(frozen=True)
class ConjugatedPhi:
    """The stopped swap map transported by a group element: x belongs to
    the domain exactly when inv(g) . x belongs to Dom(base)."""

    base: PhiMap
    g: object

    @property
    def t(self):
        return self.base.t

    @property
    def eps(self):
        return self.base.eps

    @property
    def sign(self):
        return self.base.sign

    @property
    def horizon(self):
        return self.base.horizon

    def _pull(self, x: Configuration) -> Configuration:
        return act(x.family.model.inv(self.g), x)

    def in_domain(self, x: Configuration) -> bool:
        return self.base.in_domain(self._pull(x))

    def stopping_index(self, x: Configuration):
        return self.base.stopping_index(self._pull(x))

    def support_sites(self, t_pairs: int):
        model = self.base.schedule.family.model
        inner = self.base.support_sites(t_pairs)
        if isinstance(model, ZGroup):
            return np.asarray(inner, dtype=np.int64) + int(self.g)
        return [model.mul(self.g, h) for h in inner]

    def apply(self, x: Configuration) -> Configuration:
        return act(self.g, self.base.apply(self._pull(x)))


def phi_conjugate(phi: PhiMap, g) -> ConjugatedPhi:
    phi.schedule.family.model.check(g)
    return ConjugatedPhi(phi, g)


@dataclass(frozen=True)
class WitnessRecord:
    """An accepted essential-value witness with its three chain margins."""

    seed: int
    g: int
    image_rn: CocycleEstimate
    phi_value: float
    defect: float

    @property
    def value(self) -> float:
        """Reconstructed r(g, x): image cocycle plus swap density plus defect."""
        return self.image_rn.value + self.phi_value + self.defect

    @property
    def tail(self) -> float:
        return self.image_rn.combined_tail(1.0)


@dataclass(frozen=True)
class WitnessReport:
    samples: int
    in_set: int
    in_domain: int
    witnesses: tuple
    target: float
    eps: float

    @property
    def fraction(self) -> float:
        return len(self.witnesses) / self.in_set if self.in_set else 0.0

    @property
    def lcb99(self) -> float:
        if self.in_set == 0:
            return 0.0
        p = self.fraction
        return p - _Z99 * math.sqrt(p * (1.0 - p) / self.in_set)


def essential_value_witness(system: ProductSystem, cylinder: CylinderSet,
                            t: float, eps: float, R_group: int, R_trunc: int,
                            seeds: int, *, companion_cylinder=None, seed: int = 0,
                            max_checks: int = 32,
                            phi: Optional[PhiMap] = None) -> WitnessReport:
    """Hunt group elements realizing cocycle values near t over the cylinder.

    For each sampled point of the cylinder that lies in Dom(phi), the
    image point phi x is scanned over the group ball; a candidate g must
    put g . x back in the cylinder and carry a certifiably small cocycle
    at the image, and it is accepted once its exact translation defect is
    also below eps/3.  The swap map is built with tolerance 2 eps / 3, so
    its density already sits within eps/3 of the target, and the three
    margins together pin |r(g, x) - t| < eps.  The fraction is taken over
    the in-cylinder samples.

    Targets are admissible in [0, 1] when the limit marginal favors the
    zero symbol at least evenly, and in [-1, 0] for the mirrored branch.
    A family with no unpinned sites (nothing to swap) surfaces as
    DivergenceTooSlowError from the schedule builder.
    """
    family = system.family
    if not isinstance(family.model, ZGroup):
        raise DomainError("the witness scan is implemented for the Z model")
    sign = 1 if family.lambda0 >= 0.5 else -1
    if sign == 1 and not 0.0 <= t <= 1.0:
        raise ValueError("target must lie in [0, 1] for this family")
    if sign == -1 and not -1.0 <= t <= 0.0:
        raise ValueError("target must lie in [-1, 0] for this family")
    if companion_cylinder is not None and system.y_family is None:
        raise ValueError("companion cylinder given but the system has no companion")
    eps3 = eps / 3.0
    window = tuple(h for h, _ in cylinder.constraints)
    if phi is None:
        phi = build_phi(family, window, t, 2.0 * eps3, sign=sign,
                        seed=derive_seed(seed, "witness-phi"))
    g_values = np.concatenate([np.arange(-R_group, 0), np.arange(1, R_group + 1)])
    tails = _tail_table(family, g_values, R_trunc)
    x_base = derive_seed(seed, "x-factor")
    y_base = derive_seed(seed, "y-factor")
    in_set = in_domain = 0
    witnesses = []
    for i in range(seeds):
        x = sample(family, derive_seed(x_base, i))
        if not cylinder.contains(x):
            continue
        y_cfg = None
        if companion_cylinder is not None:
            y_cfg = sample(system.y_family, derive_seed(y_base, i))
            if not companion_cylinder.contains(y_cfg):
                continue
        in_set += 1
        if not phi.in_domain(x):
            continue
        in_domain += 1
        image = phi.apply(x)
        c_val = phi_rn(phi, x)
        r_all = rn_scan(family, image, R_trunc, R_group)
        r_at = r_all[g_values + R_group]
        ok = (np.abs(r_at) + tails < eps3) & _membership_matrix(x, cylinder, g_values)
        if companion_cylinder is not None:
            ok &= _membership_matrix(y_cfg, companion_cylinder, g_values)
        candidates = np.flatnonzero(ok)
        order = candidates[np.argsort(np.abs(r_at[candidates]), kind="stable")]
        for j in order[:max_checks]:
            g = int(g_values[j])
            defect = compare_defect(family, g, phi, x)
            if abs(defect) < eps3:
                mean_b, std_b = tail_bounds_from_mass(
                    family.l2_tail_bound(g, R_trunc), family.delta
                )
                witnesses.append(WitnessRecord(
                    i, g,
                    CocycleEstimate(float(r_at[j]), R_trunc, mean_b, std_b),
                    c_val, float(defect),
                ))
                break
    return WitnessReport(seeds, in_set, in_domain, tuple(witnesses), t, eps)


@dataclass(frozen=True)
class RatioHistogram:
    """Coverage of a target grid by observed cocycle values."""

    grid: tuple
    eps: float
    counts: tuple
    covered: tuple
    events_total: int

    @property
    def coverage(self) -> float:
        return sum(self.covered) / len(self.grid) if self.grid else 0.0

    @property
    def label(self) -> str:
        if self.coverage >= 0.9:
            return "III1-consistent"
        zero_only = all(
            (abs(t) < 1e-12) == c for t, c in zip(self.grid, self.covered)
        )
        if self.events_total >= 10 and zero_only and any(self.covered):
            return "II-consistent"
        return "insufficient data"


def ratio_hist(events, grid, eps: float) -> RatioHistogram:
    """Count, for each grid target, the events whose value certifiably
    lands within eps of it (value, tail) -> |value - t| + tail <= eps.

    Events may be ReturnEvent, WitnessRecord, bare floats, or anything
    with value/tail attributes.  Coverage is monotone in eps by
    construction.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    values = []
    tails = []
    for e in events:
        if isinstance(e, (int, float)):
            values.append(float(e))
            tails.append(0.0)
        else:
            values.append(float(e.value))
            tails.append(float(getattr(e, "tail", 0.0)))
    values = np.asarray(values)
    tails = np.asarray(tails)
    counts = []
    for t in grid:
        counts.append(int(np.count_nonzero(np.abs(values - t) + tails <= eps)))
    covered = tuple(c > 0 for c in counts)
    return RatioHistogram(tuple(float(t) for t in grid), float(eps),
                          tuple(counts), covered, len(values))
