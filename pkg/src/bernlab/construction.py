"""Coordinate-swap schedules, increment walks, and the stopped swap map.

The machinery here turns a marginal family into a partial measurable map
with a prescribed log-density target.  A schedule pairs pinned sites
(marginal exactly lambda) with unpinned ones; swapping the coordinates of
pair k changes the log-density by an increment F_k taking the three values
{+d_k, 0, -d_k}, where d_k is the weight gap of the unpinned site.  The
increments of distinct pairs depend on disjoint coordinates, hence are
independent, and their partial sums S_n form a random walk whose exact
moments are available in closed form:

    E[F_k]  = (mu_k(0) - lambda(0)) * d_k
    E[F_k^2] = d_k^2 * (mu_k(0) lambda(1) + mu_k(1) lambda(0))

Both factors of the mean carry the sign of mu_k(0) - lambda(0), so the
drift is nonnegative for every admissible pair; upward targets are reached
by drift plus dispersion, downward targets (the mirrored branch below)
only by dispersion.

The stopped map with target t and horizon N has domain {S_N > t} and swaps
the first T(x) pairs, T(x) the first index with S_T > t.  Its log-density
is exactly S_{T(x)}, which lands in (t, t + eps/2) because every active
increment is smaller than eps/2.  The mirrored branch (sign -1) runs the
same schedule against the negated walk: domain {S_N < t}, T the first
dip below t, values in (t - eps/2, t).  Because the drift is nonnegative
either way, the mirrored branch relies on the walk's spread alone and a
horizon search may honestly fail for targets far below zero.

Horizon search certifies P(sign * S_N > sign * t) >= 1/3 + margin either
by an exact grid convolution of the three-point laws with downward
rounding (a rigorous lower bound, bin error reported) or by seeded Monte
Carlo with a 99% lower confidence bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy.special import ndtr

from .cocycles import gibbs_cocycle
from .configurations import Configuration, sample
from .errors import BallCapError, DivergenceTooSlowError, DomainError, InvariantViolation
from .families import MarginalFamily
from .groups import ZGroup
from .rng import MASK64, derive_seed, prf_keys, prf_uniform_keys

N_EXACT_DEFAULT = 24
_BIN_FACTOR = 1.0e-4
_Z99 = 2.3263478740408408  # upper 1% normal quantile


@dataclass(frozen=True)
class SwapSchedule:
    """An ordered list of (pinned, unpinned) coordinate pairs.

    ``pairs`` records every candidate consumed while building; indices in
    ``excluded`` failed the window or increment-size rule and never enter
    the walk.  Active pairs satisfy the construction invariants: pinned
    first coordinate, unpinned second, all coordinates distinct, both
    outside ``window``, and |d_k| < eps/2.
    """

    family: MarginalFamily
    window: frozenset
    eps: float
    pairs: tuple
    excluded: frozenset

    def __post_init__(self):
        active = tuple(k for k in range(len(self.pairs)) if k not in self.excluded)
        object.__setattr__(self, "_active", active)
        seen = set()
        for g, h in self.pairs:
            if g in seen or h in seen or g == h:
                raise InvariantViolation("schedule coordinates must be distinct")
            seen.add(g)
            seen.add(h)
        fam = self.family
        d = np.empty(len(active))
        p_plus = np.empty(len(active))
        p_minus = np.empty(len(active))
        lam0 = fam.lambda0
        for i, k in enumerate(active):
            g, h = self.pairs[k]
            if not fam.is_pinned(g):
                raise InvariantViolation(f"first coordinate of pair {k} is not pinned")
            if fam.is_pinned(h):
                raise InvariantViolation(f"second coordinate of pair {k} is pinned")
            if g in self.window or h in self.window:
                raise InvariantViolation(f"active pair {k} touches the forbidden window")
            mu0 = fam.mu0(h)
            d[i] = fam.eta(h).gap
            if not abs(d[i]) < 0.5 * self.eps:
                raise InvariantViolation(
                    f"active pair {k} has increment {d[i]:.6g}, needs < eps/2"
                )
            p_plus[i] = mu0 * (1.0 - lam0)
            p_minus[i] = (1.0 - mu0) * lam0
        means = d * (p_plus - p_minus)
        variances = d * d * (p_plus + p_minus) - means * means
        object.__setattr__(self, "_d", d)
        object.__setattr__(self, "_p_plus", p_plus)
        object.__setattr__(self, "_p_minus", p_minus)
        object.__setattr__(self, "_means", means)
        object.__setattr__(self, "_variances", variances)
        if isinstance(fam.model, ZGroup):
            g_sites = np.array([self.pairs[k][0] for k in active], dtype=np.int64)
            h_sites = np.array([self.pairs[k][1] for k in active], dtype=np.int64)
        else:
            g_sites = h_sites = None
        object.__setattr__(self, "_g_sites", g_sites)
        object.__setattr__(self, "_h_sites", h_sites)

    @property
    def active_count(self) -> int:
        return len(self._active)

    @property
    def active_indices(self) -> tuple:
        return self._active

    def active_pair(self, n: int) -> tuple:
        """The n-th active pair, 0-based."""
        return self.pairs[self._active[n]]

    def _active_position(self, k: int) -> int:
        if not 0 <= k < len(self.pairs):
            raise DomainError(f"pair index {k} out of range")
        if k in self.excluded:
            raise DomainError(f"pair {k} is excluded from the schedule")
        # active indices are sorted, so position = count of active below k
        return int(np.searchsorted(np.asarray(self._active), k))


def build_schedule(family: MarginalFamily, window, eps: float, budget: int,
                   best_effort: bool = False) -> SwapSchedule:
    """Consume the family's site reservoirs into a schedule with ``budget``
    active pairs.

    Candidates that touch ``window`` or whose increment reaches eps/2 are
    recorded as excluded rather than discarded, so the pair indexing is
    reproducible.  Exhausting either reservoir raises
    DivergenceTooSlowError unless ``best_effort`` is set, in which case
    whatever was assembled (at least one active pair) is returned.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if budget < 1:
        raise ValueError("budget must be a positive integer")
    window = frozenset(window or ())
    for w in window:
        family.model.check(w)
    pinned_it, unpinned_it = family.schedule_sites()
    used: set = set()
    pairs: list = []
    excluded: set = set()
    active = 0
    half = 0.5 * eps
    try:
        while active < budget:
            g = next(pinned_it)
            while g in used:
                g = next(pinned_it)
            h = next(unpinned_it)
            while h in used:
                h = next(unpinned_it)
            used.add(g)
            used.add(h)
            k = len(pairs)
            pairs.append((g, h))
            if g in window or h in window or not abs(family.eta(h).gap) < half:
                excluded.add(k)
            else:
                active += 1
    except (StopIteration, BallCapError) as exc:
        if not (best_effort and active >= 1):
            raise DivergenceTooSlowError(
                f"site reservoirs exhausted at {active} active pairs "
                f"of {budget} requested"
            ) from exc
    return SwapSchedule(family, window, float(eps), tuple(pairs), frozenset(excluded))


@dataclass(frozen=True)
class WalkStats:
    """Exact mean and standard deviation of S_n."""

    n: int
    a_n: float
    b_n: float


def walk_stats(schedule: SwapSchedule, n: int) -> WalkStats:
    if not 0 <= n <= schedule.active_count:
        raise ValueError(f"n must lie in [0, {schedule.active_count}]")
    a = float(np.sum(schedule._means[:n]))
    b = float(math.sqrt(np.sum(schedule._variances[:n])))
    return WalkStats(n, a, b)


def f_increment(schedule: SwapSchedule, k: int, x: Configuration) -> float:
    """The swap increment of pair k at x: d_k * (x_{g_k} - x_{h_k})."""
    i = schedule._active_position(k)
    g, h = schedule.pairs[k]
    return float(schedule._d[i]) * (x.value(g) - x.value(h))


def f_moments(schedule: SwapSchedule, k: int) -> tuple:
    """Exact (mean, variance) of the pair-k increment."""
    i = schedule._active_position(k)
    return float(schedule._means[i]), float(schedule._variances[i])


def swap_pair(schedule: SwapSchedule, k: int, x: Configuration) -> Configuration:
    """x with the coordinates of pair k exchanged."""
    schedule._active_position(k)
    g, h = schedule.pairs[k]
    return x.with_overrides({x.raw_site(g): x.value(h), x.raw_site(h): x.value(g)})


def tau_rn(schedule: SwapSchedule, k: int, x: Configuration) -> float:
    """Log-density of the single swap at pair k, via the Gibbs cocycle.

    Agrees with f_increment exactly: the pinned coordinate has zero
    weights, so only the unpinned site contributes.
    """
    g, h = schedule.pairs[k]
    y = swap_pair(schedule, k, x)
    return gibbs_cocycle(schedule.family, x, y, diff_sites={g, h})


def walk_prefix(schedule: SwapSchedule, x: Configuration, n: int) -> np.ndarray:
    """Partial sums S_1..S_n of the increments at x."""
    if not 0 <= n <= schedule.active_count:
        raise ValueError(f"n must lie in [0, {schedule.active_count}]")
    if n == 0:
        return np.zeros(0)
    if schedule._g_sites is not None:
        bg = x.values_at(schedule._g_sites[:n]).astype(np.float64)
        bh = x.values_at(schedule._h_sites[:n]).astype(np.float64)
        return np.cumsum(schedule._d[:n] * (bg - bh))
    out = np.empty(n)
    total = 0.0
    for i in range(n):
        g, h = schedule.pairs[schedule._active[i]]
        total += float(schedule._d[i]) * (x.value(g) - x.value(h))
        out[i] = total
    return out


def walk(schedule: SwapSchedule, x: Configuration, n: int) -> float:
    """S_n at x (0.0 when n = 0)."""
    if n == 0:
        return 0.0
    return float(walk_prefix(schedule, x, n)[-1])


def _three_point_atoms(schedule: SwapSchedule, n: int):
    """Per-pair (gap, P(+gap), P(-gap)) with gaps normalized positive."""
    d = schedule._d[:n]
    p_plus = schedule._p_plus[:n]
    p_minus = schedule._p_minus[:n]
    neg = d < 0
    dd = np.abs(d)
    pp = np.where(neg, p_minus, p_plus)
    pm = np.where(neg, p_plus, p_minus)
    return dd, pp, pm


def exact_walk_distribution(schedule: SwapSchedule, n: int, bin_width: float,
                            sign: int = 1):
    """Downward-rounded law of sign * S_n on an integer grid.

    Every atom is rounded toward minus infinity, so the returned law is
    stochastically below the true one: tail probabilities computed from
    it are rigorous lower bounds, with total rounding error below
    n * bin_width.  Returns (lo, probs): probs[i] sits at (lo + i) * bin_width.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    dd, pp, pm = _three_point_atoms(schedule, n)
    if sign < 0:
        pp, pm = pm, pp
    qp = np.floor(dd / bin_width).astype(np.int64)
    qm = -np.ceil(dd / bin_width).astype(np.int64)
    probs = np.array([1.0])
    lo = 0
    for k in range(n):
        width = int(qp[k] - qm[k])
        length = probs.shape[0]
        new = np.zeros(length + width)
        p0 = 1.0 - pp[k] - pm[k]
        new[:length] += pm[k] * probs
        off = int(-qm[k])
        new[off:off + length] += p0 * probs
        new[width:width + length] += pp[k] * probs
        probs = new
        lo += int(qm[k])
    return lo, probs


@dataclass(frozen=True)
class HorizonEstimate:
    """One evaluation of P(sign * S_n > sign * t)."""

    n: int
    method: str
    probability: float
    uncertainty: float
    lcb99: float


def horizon_probability(schedule: SwapSchedule, n: int, t: float, *, sign: int = 1,
                        mode: str = "exact", mc_samples: int = 40_000,
                        seed: int = 0, bin_factor: float = _BIN_FACTOR) -> HorizonEstimate:
    """Estimate the domain mass P(sign * S_n > sign * t) at horizon n.

    ``exact`` convolves the three-point laws on a grid of width
    bin_factor * eps with downward rounding (probability is then a
    rigorous lower bound and uncertainty the accumulated bin error);
    ``monte_carlo`` draws the increments from their exact law with the
    seeded PRF and reports the usual binomial standard error.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if not 1 <= n <= schedule.active_count:
        raise ValueError(f"n must lie in [1, {schedule.active_count}]")
    if mode == "exact":
        b = bin_factor * schedule.eps
        lo, probs = exact_walk_distribution(schedule, n, b, sign)
        v_min = math.floor(sign * t / b + 1e-9) + 1
        start = max(0, v_min - lo)
        p = float(probs[start:].sum()) if start < probs.shape[0] else 0.0
        return HorizonEstimate(n, "exact", p, n * b, p)
    if mode == "monte_carlo":
        sampler = _WalkSampler(schedule, mc_samples, seed)
        sampler.extend(n)
        return sampler.estimate(t, sign)
    raise ValueError(f"unknown mode {mode!r}")


class _WalkSampler:
    """Incremental Monte Carlo of the increment walk.

    Each (pair, sample) cell consumes one PRF uniform keyed by the pair's
    position, so extending the horizon never redraws earlier pairs and the
    whole sweep is reproducible from the seed.
    """

    def __init__(self, schedule: SwapSchedule, count: int, seed: int):
        self.schedule = schedule
        base = np.uint64(seed & MASK64)
        self.keys = prf_keys(np.arange(count, dtype=np.uint64) + base)
        self.s = np.zeros(count)
        self.n = 0

    def extend(self, to_n: int):
        d = self.schedule._d
        pp = self.schedule._p_plus
        pm = self.schedule._p_minus
        for k in range(self.n, to_n):
            u = prf_uniform_keys(self.keys, k)
            step = np.where(u < pp[k], d[k], 0.0)
            np.subtract(step, np.where(u >= 1.0 - pm[k], d[k], 0.0), out=step)
            self.s += step
        self.n = to_n

    def estimate(self, t: float, sign: int) -> HorizonEstimate:
        hits = sign * self.s > sign * t
        m = self.s.shape[0]
        p = float(np.count_nonzero(hits)) / m
        se = math.sqrt(p * (1.0 - p) / m)
        return HorizonEstimate(self.n, "monte_carlo", p, se, p - _Z99 * se)


def sample_walk(schedule: SwapSchedule, n: int, count: int, seed: int = 0) -> np.ndarray:
    """``count`` seeded draws of S_n, sampled from the exact increment law."""
    if not 0 <= n <= schedule.active_count:
        raise ValueError(f"n must lie in [0, {schedule.active_count}]")
    sampler = _WalkSampler(schedule, count, seed)
    sampler.extend(n)
    return sampler.s


def _horizon_ladder(active: int, growth: float):
    n = 1
    while n <= active:
        yield n
        n = n + 1 if n < 8 else max(n + 1, int(math.ceil(n * growth)))
    if active >= 1:
        yield active


def find_horizon(schedule: SwapSchedule, t: float, mode: str = "auto", *,
                 sign: int = 1, margin: Optional[float] = None,
                 mc_samples: int = 40_000, seed: int = 0,
                 n_exact: int = N_EXACT_DEFAULT, growth: float = 1.25) -> int:
    """Smallest tested horizon N with P(sign * S_N > sign * t) >= 1/3 + margin.

    Horizons climb 1..8 and then geometrically by ``growth``, capped at the
    active pair count.  With ``mode="auto"`` each rung uses the exact grid
    convolution up to ``n_exact`` pairs and Monte Carlo beyond; ``margin``
    defaults to the rung's own uncertainty (bin error, respectively one
    standard error), and Monte Carlo rungs must additionally clear 1/3 with
    their 99% lower confidence bound.  Raises DivergenceTooSlowError when
    the ladder is exhausted.
    """
    if mode not in ("auto", "exact", "monte_carlo"):
        raise ValueError(f"unknown mode {mode!r}")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    sampler = None
    last = None
    seen = set()
    for n in _horizon_ladder(schedule.active_count, growth):
        if n in seen:
            continue
        seen.add(n)
        use_exact = mode == "exact" or (mode == "auto" and n <= n_exact)
        if use_exact:
            est = horizon_probability(schedule, n, t, sign=sign, mode="exact")
        else:
            if sampler is None:
                sampler = _WalkSampler(schedule, mc_samples, seed)
            sampler.extend(n)
            est = sampler.estimate(t, sign)
        last = est
        gate = est.uncertainty if margin is None else margin
        if est.probability >= 1.0 / 3.0 + gate and est.lcb99 > 1.0 / 3.0:
            return n
    detail = (
        f"last rung n={last.n} ({last.method}) reached {last.probability:.4f}"
        if last is not None else "no rung could be tested"
    )
    raise DivergenceTooSlowError(
        f"no horizon with domain mass >= 1/3 within {schedule.active_count} "
        f"active pairs for target {t}; {detail}"
    )


@dataclass(frozen=True)
class PhiMap:
    """The stopped swap map of a schedule.

    Domain is {x : sign * S_horizon(x) > sign * t}; on it the first
    crossing index T(x) <= horizon exists and the map swaps the first T(x)
    active pairs.  The log-density at x is exactly S_{T(x)}.
    """

    schedule: SwapSchedule
    t: float
    eps: float
    horizon: int
    sign: int = 1
    domain_estimate: Optional[float] = None
    domain_lcb99: Optional[float] = None
    estimate_method: str = ""

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if not 1 <= self.horizon <= self.schedule.active_count:
            raise ValueError("horizon must lie within the active pair count")
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    def _crossing(self, x: Configuration):
        s = walk_prefix(self.schedule, x, self.horizon)
        mask = self.sign * s > self.sign * self.t
        if not mask[-1]:
            return None, s
        return int(np.argmax(mask)) + 1, s

    def in_domain(self, x: Configuration) -> bool:
        return self._crossing(x)[0] is not None

    def stopping_index(self, x: Configuration) -> Optional[int]:
        """Number of pairs the map swaps at x, or None outside the domain."""
        return self._crossing(x)[0]

    def support_sites(self, t_pairs: int):
        """Coordinates of the first ``t_pairs`` active pairs, flattened."""
        if self.schedule._g_sites is not None:
            stacked = np.column_stack(
                (self.schedule._g_sites[:t_pairs], self.schedule._h_sites[:t_pairs])
            )
            return stacked.ravel()
        sites = []
        for i in range(t_pairs):
            g, h = self.schedule.pairs[self.schedule._active[i]]
            sites.extend((g, h))
        return sites

    def apply(self, x: Configuration) -> Configuration:
        t_pairs, _ = self._crossing(x)
        if t_pairs is None:
            raise DomainError("configuration is outside Dom(phi)")
        edits = {}
        for i in range(t_pairs):
            g, h = self.schedule.pairs[self.schedule._active[i]]
            edits[x.raw_site(g)] = x.value(h)
            edits[x.raw_site(h)] = x.value(g)
        return x.with_overrides(edits)


def apply_phi(phi: PhiMap, x: Configuration) -> Configuration:
    """phi(x); DomainError outside Dom(phi)."""
    return phi.apply(x)


def phi_rn(phi: PhiMap, x: Configuration) -> float:
    """Exact log-density of phi at x: the stopped partial sum S_{T(x)}.

    Contract: t < value < t + eps for sign +1, mirrored for sign -1.
    """
    t_pairs, s = phi._crossing(x)
    if t_pairs is None:
        raise DomainError("configuration is outside Dom(phi)")
    return float(s[t_pairs - 1])


def build_phi(family: MarginalFamily, window, t: float, eps: float, sign: int = 1, *,
              budget: int = 512, budget_growth: int = 4, max_budget: int = 1 << 22,
              mode: str = "auto", margin: Optional[float] = None,
              mc_samples: int = 40_000, seed: int = 0,
              n_exact: int = N_EXACT_DEFAULT) -> PhiMap:
    """Build the stopped swap map for target t and tolerance eps.

    Preconditions follow the two branches: sign +1 needs t >= 0 and
    lambda(0) >= 1/2, sign -1 needs t <= 0 and lambda(0) < 1/2.  The
    schedule budget starts small and grows by ``budget_growth`` whenever
    the horizon search exhausts its ladder, falling back to the whole
    reservoir before giving up.  The returned map carries the domain-mass
    estimate of the accepted horizon.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if sign == 1 and (t < 0 or family.lambda0 < 0.5):
        raise ValueError("sign +1 requires t >= 0 and lambda(0) >= 1/2")
    if sign == -1 and (t > 0 or family.lambda0 >= 0.5):
        raise ValueError("sign -1 requires t <= 0 and lambda(0) < 1/2")
    horizon_seed = derive_seed(seed, "horizon-search")
    b = budget
    exhausted = False
    last_exc: Optional[DivergenceTooSlowError] = None
    while True:
        try:
            schedule = build_schedule(family, window, eps, b)
        except DivergenceTooSlowError:
            schedule = build_schedule(family, window, eps, b, best_effort=True)
            exhausted = True
        try:
            n = find_horizon(schedule, t, mode, sign=sign, margin=margin,
                             mc_samples=mc_samples, seed=horizon_seed,
                             n_exact=n_exact)
            break
        except DivergenceTooSlowError as exc:
            last_exc = exc
            if exhausted or b >= max_budget:
                raise
            b *= budget_growth
    del last_exc
    use_exact = mode == "exact" or (mode == "auto" and n <= n_exact)
    est = horizon_probability(schedule, n, t, sign=sign,
                              mode="exact" if use_exact else "monte_carlo",
                              mc_samples=mc_samples, seed=horizon_seed)
    return PhiMap(schedule, float(t), float(eps), n, sign,
                  domain_estimate=est.probability, domain_lcb99=est.lcb99,
                  estimate_method=est.method)


@dataclass(frozen=True)
class DomainScan:
    """Monte Carlo sweep of Dom(phi) over fresh configurations."""

    samples: int
    domain_count: int
    fraction: float
    lcb99: float
    violations: int
    t_pairs: np.ndarray = field(repr=False, compare=False)
    values: np.ndarray = field(repr=False, compare=False)
    in_domain: np.ndarray = field(repr=False, compare=False)


def domain_scan(phi: PhiMap, sample_count: int, seed: int = 0) -> DomainScan:
    """Sample configurations with seeds seed, seed+1, ... and record domain
    membership, stopping indices, and stopped values.

    The vector path reproduces Configuration.value bit for bit, so scalar
    spot checks against apply_phi/phi_rn agree exactly.  ``violations``
    counts in-domain samples whose stopped value escapes the open interval
    between t and t + sign * eps.
    """
    schedule = phi.schedule
    sign, t = phi.sign, phi.t
    n = phi.horizon
    if schedule._g_sites is None:
        t_arr = np.zeros(sample_count, dtype=np.int64)
        vals = np.zeros(sample_count)
        dom = np.zeros(sample_count, dtype=bool)
        for i in range(sample_count):
            x = sample(schedule.family, seed + i)
            t_pairs, s = phi._crossing(x)
            if t_pairs is not None:
                dom[i] = True
                t_arr[i] = t_pairs
                vals[i] = s[t_pairs - 1]
    else:
        fam = schedule.family
        model = fam.model
        base = np.uint64(seed & MASK64)
        keys = prf_keys(np.arange(sample_count, dtype=np.uint64) + base)
        s = np.zeros(sample_count)
        t_arr = np.zeros(sample_count, dtype=np.int64)
        vals = np.zeros(sample_count)
        d = schedule._d
        for k in range(n):
            g = int(schedule._g_sites[k])
            h = int(schedule._h_sites[k])
            ug = prf_uniform_keys(keys, model.coordinate_code(g))
            uh = prf_uniform_keys(keys, model.coordinate_code(h))
            bg = (ug >= fam.mu0(g)).astype(np.float64)
            bh = (uh >= fam.mu0(h)).astype(np.float64)
            s += d[k] * (bg - bh)
            fresh = (t_arr == 0) & (sign * s > sign * t)
            t_arr[fresh] = k + 1
            vals[fresh] = s[fresh]
        dom = sign * s > sign * t
        t_arr[~dom] = 0
        vals[~dom] = 0.0
    m = int(np.count_nonzero(dom))
    frac = m / sample_count
    se = math.sqrt(frac * (1.0 - frac) / sample_count)
    inside = (sign * vals[dom] > sign * t) & (sign * vals[dom] < sign * t + phi.eps)
    violations = int(np.count_nonzero(~inside))
    return DomainScan(sample_count, m, frac, frac - _Z99 * se, violations,
                      t_arr, vals, dom)


@dataclass(frozen=True)
class InjectivityReport:
    """Audit of the stopped map's injectivity on sampled domain points."""

    samples: int
    domain_samples: int
    distinct_images: int
    collisions: int
    sign_flip_violations: int


def injectivity_audit(phi: PhiMap, sample_count: int, seed: int = 0) -> InjectivityReport:
    """Check that distinct domain samples have distinct images on supp(phi)
    and that the walk read at the image retraces the input walk negated.

    The negation identity S_n(phi x) = -S_n(x) for n <= T(x) holds exactly
    in floating point (every increment flips sign, and IEEE addition is
    sign-symmetric), so it is asserted with zero tolerance.  A collision is
    two domain samples with different support restrictions and equal image
    restrictions; the exact retracing argument rules them out, and the
    report counts any found.
    """
    support = phi.support_sites(phi.horizon)
    images: dict = {}
    domain_samples = 0
    collisions = 0
    flips = 0
    for i in range(sample_count):
        x = sample(phi.schedule.family, seed + i)
        t_pairs, s = phi._crossing(x)
        if t_pairs is None:
            continue
        domain_samples += 1
        y = phi.apply(x)
        s_y = walk_prefix(phi.schedule, y, t_pairs)
        if not np.array_equal(s_y, -s[:t_pairs]):
            flips += 1
        if phi.schedule._g_sites is not None:
            key_x = x.values_at(support).tobytes()
            key_y = y.values_at(support).tobytes()
        else:
            key_x = tuple(x.value(site) for site in support)
            key_y = tuple(y.value(site) for site in support)
        prior = images.get(key_y)
        if prior is None:
            images[key_y] = key_x
        elif prior != key_x:
            collisions += 1
    return InjectivityReport(sample_count, domain_samples, len(images),
                             collisions, flips)


def clt_check(schedule: SwapSchedule, n: int, sample_count: int, seed: int = 0) -> float:
    """Kolmogorov-Smirnov distance between the standardized S_n law and the
    standard normal, over ``sample_count`` seeded draws."""
    stats = walk_stats(schedule, n)
    if stats.b_n <= 0:
        raise ValueError("variance of S_n is zero; nothing to standardize")
    draws = sample_walk(schedule, n, sample_count, seed)
    z = np.sort((draws - stats.a_n) / stats.b_n)
    cdf = ndtr(z)
    grid = np.arange(1, sample_count + 1) / sample_count
    return float(max(np.max(grid - cdf), np.max(cdf - (grid - 1.0 / sample_count))))
