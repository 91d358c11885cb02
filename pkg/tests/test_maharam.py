"""Skew-product layer: the preservation audit, orbit-return scans, the
conjugated swap map, witness hunts, and ratio-set histograms."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bernlab import errors, rng
from bernlab.cocycles import CocycleEstimate, rn_cocycle
from bernlab.configurations import CylinderSet, act, exact_rn, sample
from bernlab.construction import build_phi
from bernlab.families import make_family
from bernlab.groups import make_group
from bernlab.maharam import (
    ProductSystem,
    ReturnEvent,
    conservativity_return_check,
    essential_value_witness,
    maharam_preservation_check,
    maharam_step,
    phi_conjugate,
    ratio_hist,
    scan_returns,
)

GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def perturbed(support, lam=0.5):
    return make_family("finitely_perturbed", lambda0=lam, support=support)


# ---------------------------------------------------------------- invariance


def test_preservation_defect_below_exact_tolerance():
    family = perturbed({-2: 0.3, 0: 0.62, 3: 0.55}, lam=0.45)
    cyl = CylinderSet.of({0: 0, 1: 1})
    worst = 0.0
    for g in (1, -3, 4):
        for interval in ((0.0, 1.0), (-1.0, 1.0)):
            worst = max(worst, maharam_preservation_check(family, g, cyl, interval))
    assert worst < 1e-12


def test_preservation_constant_family_is_exactly_invariant():
    # no support window, so the only pattern is the pinned cylinder itself
    for lam in (0.5, 0.35):
        family = make_family("constant", lambda0=lam)
        assert maharam_preservation_check(family, 7, {0: 0}, (0.0, 2.0)) == 0.0


def test_preservation_check_validates_inputs():
    family = perturbed({1: 0.7})
    with pytest.raises(ValueError):
        maharam_preservation_check(family, 1, {0: 0}, (1.0, 1.0))
    with pytest.raises(errors.DomainError):
        maharam_preservation_check(make_family("z_demo"), 1, {0: 0}, (0.0, 1.0))
    big = perturbed({i: 0.6 for i in range(13)})
    with pytest.raises(errors.BallCapError):
        # supp and its shift by 20 are disjoint: 26 free coordinates
        maharam_preservation_check(big, 20, CylinderSet.of({}), (0.0, 1.0))


# ----------------------------------------------------------- skew steps


def test_maharam_step_height_matches_exact_density():
    family = perturbed({-1: 0.25, 2: 0.7})
    system = ProductSystem(family)
    point = system.sample_point(seed=5)
    assert point.height == 0.0
    assert point.y is None

    p1, est1 = maharam_step(system, 3, point, R=16)
    p2, est2 = maharam_step(system, -4, p1, R=16)
    # radius 16 covers the support and its shifts, so truncation is exact
    assert est1.combined_tail() == 0.0
    assert est2.combined_tail() == 0.0
    r1 = exact_rn(3, point.x)
    r2 = exact_rn(-4, p1.x)
    assert p1.height == pytest.approx(r1, abs=1e-12)
    assert p2.height == pytest.approx(r1 + r2, abs=1e-12)
    # two steps compose to one: r(g2 g1, x) = r(g2, g1 x) + r(g1, x)
    assert exact_rn(-1, point.x) == pytest.approx(p2.height, abs=1e-12)
    # and the base coordinate was shifted by the product element
    assert p2.x.value(0) == point.x.value(1)


def test_product_system_validates_factors():
    z_fam = make_family("z_demo")
    with pytest.raises(errors.ModelMismatchError):
        ProductSystem(z_fam, make_family("constant", model=make_group("Z2")))
    with pytest.raises(ValueError):
        ProductSystem(z_fam, make_family("z_demo"))


def test_companion_factor_never_touches_the_density():
    family = perturbed({0: 0.8})
    bare = ProductSystem(family)
    paired = ProductSystem(family, make_family("constant", lambda0=0.5))
    a = bare.sample_point(seed=11)
    b = paired.sample_point(seed=11, height=0.25)
    sites = list(range(-5, 6))
    assert [a.x.value(h) for h in sites] == [b.x.value(h) for h in sites]
    assert a.y is None
    assert b.y is not None
    assert b.height == 0.25
    assert bare.rn(2, a.x, 8).value == paired.rn(2, b.x, 8).value

    stepped, est = maharam_step(paired, 5, b, R=8)
    assert stepped.y.value(5) == b.y.value(0)
    assert stepped.height == 0.25 + est.value


# ------------------------------------------------------------- conjugation


def test_phi_conjugate_transports_domain_and_support():
    family = make_family("z_demo")
    phi = build_phi(family, (0,), t=0.0, eps=1.0, seed=3)
    moved = phi_conjugate(phi, 17)
    assert moved.t == phi.t
    assert moved.eps == phi.eps
    assert moved.sign == phi.sign
    assert moved.horizon == phi.horizon

    base_support = np.asarray(phi.support_sites(phi.horizon), dtype=np.int64)
    np.testing.assert_array_equal(
        moved.support_sites(phi.horizon), base_support + 17
    )

    probe = np.concatenate([base_support + 17, [0, 17, 444, -2001]])
    hits = 0
    for i in range(120):
        x = sample(family, 9000 + i)
        gx = act(17, x)
        assert phi.in_domain(x) == moved.in_domain(gx)
        if not phi.in_domain(x):
            continue
        hits += 1
        assert phi.stopping_index(x) == moved.stopping_index(gx)
        left = act(17, phi.apply(x))
        right = moved.apply(gx)
        assert np.array_equal(left.values_at(probe), right.values_at(probe))
    assert hits > 20


def test_phi_conjugate_checks_the_group_element():
    family = make_family("z_demo")
    phi = build_phi(family, (0,), t=0.0, eps=1.0, seed=3)
    with pytest.raises(errors.ModelMismatchError):
        phi_conjugate(phi, (1, 2))


# ------------------------------------------------------------ orbit returns


def test_scan_returns_events_are_deterministic_and_exact():
    family = make_family("z_demo")
    system = ProductSystem(family)
    cyl = CylinderSet.of({0: 0})
    events = scan_returns(system, cyl, R_group=24, R_trunc=4096, seeds=160, seed=77)
    again = scan_returns(system, cyl, R_group=24, R_trunc=4096, seeds=160, seed=77)
    flat = [(e.seed, e.g, e.value) for e in events]
    assert flat == [(e.seed, e.g, e.value) for e in again]
    keys = [(e.seed, e.g) for e in events]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)

    # every event is a genuine return carrying the truncated cocycle value
    x_cache = {}
    for e in events[:40]:
        x = x_cache.setdefault(e.seed, sample(family, rng.derive_seed(77, e.seed)))
        assert cyl.contains(x)
        assert cyl.contains(act(e.g, x))
        direct = rn_cocycle(family, e.g, x, 4096)
        assert e.value == pytest.approx(direct.value, abs=1e-9)
        assert e.estimate.radius == 4096


def test_scan_return_frequencies_match_the_marginals():
    # conditioned on x in {x_0 = 0}, the return g x in the same cylinder
    # happens exactly when the bit at -g is zero, an independent event of
    # probability mu0(-g); check the empirical rate for a few elements
    family = make_family("z_demo")
    system = ProductSystem(family)
    cyl = CylinderSet.of({0: 0})
    seeds = 400
    events = scan_returns(system, cyl, R_group=16, R_trunc=1024, seeds=seeds, seed=5)
    in_set = sum(
        1 for i in range(seeds)
        if cyl.contains(sample(family, rng.derive_seed(5, i)))
    )
    assert in_set > 200
    by_g = {}
    for e in events:
        by_g[e.g] = by_g.get(e.g, 0) + 1
    for g in (3, -5, 12):
        p = family.mu0(-g)
        observed = by_g.get(g, 0) / in_set
        assert abs(observed - p) < 3.0 * np.sqrt(p * (1.0 - p) / in_set)


def test_scan_returns_rejects_other_models():
    flat2d = make_family("constant", model=make_group("Z2"))
    with pytest.raises(errors.DomainError):
        scan_returns(ProductSystem(flat2d), CylinderSet.of({(0, 0): 0}),
                     R_group=2, R_trunc=8, seeds=4)


# ----------------------------------------------------------- conservativity


def test_conservativity_returns_with_certified_margin():
    family = make_family("z_demo")
    system = ProductSystem(family)
    cyl = CylinderSet.of({0: 0})
    report = conservativity_return_check(
        system, cyl, eps=0.2, f_excl=range(-2, 3), R_group=300, seeds=60,
        seed=4, R_trunc=120_000,
    )
    assert report.samples == 60
    assert report.in_set > 20
    assert report.fraction >= 0.9
    fracs = [report.fraction_at(r) for r in (10, 50, 150, 300)]
    assert fracs == sorted(fracs)
    assert fracs[-1] == report.fraction
    # the excluded ball is respected, so no witness sits below radius 3
    assert report.fraction_at(2) == 0.0

    # a tighter tolerance can only lose acceptances, never gain them
    tight = conservativity_return_check(
        system, cyl, eps=0.05, f_excl=range(-2, 3), R_group=300, seeds=60,
        seed=4, R_trunc=120_000,
    )
    assert tight.in_set == report.in_set
    assert tight.fraction <= report.fraction
    grew = (tight.witness_radius >= report.witness_radius)
    assert np.all(grew | (tight.witness_radius == -1))


# ---------------------------------------------------------------- witnesses


def test_witness_scan_certifies_the_whole_chain():
    family = make_family("z_demo")
    system = ProductSystem(family)
    cyl = CylinderSet.of({0: 0})
    t, eps = 0.5, 0.15
    report = essential_value_witness(
        system, cyl, t=t, eps=eps, R_group=1000, R_trunc=140_000,
        seeds=120, seed=20,
    )
    assert report.samples == 120
    assert 50 <= report.in_set <= 95
    assert report.in_domain >= 10
    assert len(report.witnesses) >= 5
    assert report.fraction > 1.0 / 27.0
    assert report.lcb99 > 1.0 / 27.0

    eps3 = eps / 3.0
    for w in report.witnesses:
        assert w.g != 0 and abs(w.g) <= 1000
        assert abs(w.image_rn.value) + w.image_rn.combined_tail(1.0) < eps3
        assert 0.0 < w.phi_value - t < eps3
        assert abs(w.defect) < eps3
        assert abs(w.value - t) + w.tail <= eps

    # the decomposition r(g, x) = r(g, phi x) + c(x) + defect must agree
    # with a direct truncated evaluation at x itself
    x_base = rng.derive_seed(20, "x-factor")
    for w in report.witnesses[:3]:
        x = sample(family, rng.derive_seed(x_base, w.seed))
        assert cyl.contains(act(w.g, x))
        direct = rn_cocycle(family, w.g, x, 140_000)
        assert w.value == pytest.approx(direct.value, abs=1e-9)


def test_witness_scan_validates_inputs():
    family = make_family("z_demo")
    system = ProductSystem(family)
    cyl = CylinderSet.of({0: 0})
    kw = dict(eps=0.15, R_group=8, R_trunc=32, seeds=1)
    with pytest.raises(ValueError):
        essential_value_witness(system, cyl, t=1.5, **kw)
    with pytest.raises(ValueError):
        essential_value_witness(system, cyl, t=-0.25, **kw)
    with pytest.raises(ValueError):
        # companion cylinder without a companion factor
        essential_value_witness(system, cyl, t=0.25, companion_cylinder=cyl, **kw)
    tilted = ProductSystem(perturbed({3: 0.405, 4: 0.401}, lam=0.4))
    with pytest.raises(ValueError):
        # the mirrored branch only reaches targets in [-1, 0]
        essential_value_witness(tilted, cyl, t=0.25, **kw)
    flat = ProductSystem(make_family("constant", lambda0=0.5))
    with pytest.raises(errors.DivergenceTooSlowError):
        # nothing to swap: every site of the constant family is pinned
        essential_value_witness(flat, cyl, t=0.25, **kw)


def test_witness_scan_with_pmp_companion():
    family = make_family("z_demo")
    system = ProductSystem(family, make_family("constant", lambda0=0.5))
    cyl = CylinderSet.of({0: 0})
    side = CylinderSet.of({0: 0})
    t, eps = 0.25, 0.15
    report = essential_value_witness(
        system, cyl, t=t, eps=eps, R_group=1000, R_trunc=140_000,
        seeds=160, seed=6, companion_cylinder=side,
    )
    # the companion constraint halves the eligible sample count
    assert 30 <= report.in_set <= 70
    assert report.fraction > 1.0 / 27.0

    x_base = rng.derive_seed(6, "x-factor")
    y_base = rng.derive_seed(6, "y-factor")
    for w in report.witnesses:
        assert abs(w.value - t) + w.tail <= eps
        x = sample(family, rng.derive_seed(x_base, w.seed))
        y = sample(system.y_family, rng.derive_seed(y_base, w.seed))
        assert cyl.contains(act(w.g, x))
        assert side.contains(act(w.g, y))


# ---------------------------------------------------------------- histogram


def test_ratio_hist_labels():
    full = ratio_hist([0.01, 0.26, 0.49, 0.74, 0.99], GRID, eps=0.1)
    assert full.counts == (1, 1, 1, 1, 1)
    assert full.coverage == 1.0
    assert full.label == "III1-consistent"

    zeros = ratio_hist([0.0] * 12, GRID, eps=0.1)
    assert zeros.label == "II-consistent"

    assert ratio_hist([0.0] * 3, GRID, eps=0.1).label == "insufficient data"
    assert ratio_hist([0.5] * 40, GRID, eps=0.1).label == "insufficient data"
    empty = ratio_hist([], GRID, eps=0.1)
    assert empty.coverage == 0.0
    assert empty.label == "insufficient data"

    with pytest.raises(ValueError):
        ratio_hist([0.1], GRID, eps=0.0)


def test_ratio_hist_respects_certified_tails():
    ev = ReturnEvent(0, 3, CocycleEstimate(0.45, 100, 0.04, 0.03))
    assert ev.tail == pytest.approx(0.07)
    tight = ratio_hist([ev], (0.0, 0.5), eps=0.1)
    assert tight.covered == (False, False)
    loose = ratio_hist([ev], (0.0, 0.5), eps=0.15)
    assert loose.covered == (False, True)


def test_constant_family_returns_sit_at_zero():
    system = ProductSystem(make_family("constant", lambda0=0.5))
    cyl = CylinderSet.of({0: 0})
    events = scan_returns(system, cyl, R_group=6, R_trunc=64, seeds=40, seed=1)
    assert len(events) >= 10
    assert all(e.value == 0.0 and e.tail == 0.0 for e in events)
    hist = ratio_hist(events, GRID, eps=0.1)
    assert hist.label == "II-consistent"


@given(
    st.lists(st.floats(min_value=-0.2, max_value=1.2), min_size=1, max_size=12),
    st.floats(min_value=0.01, max_value=0.08),
    st.floats(min_value=0.0, max_value=0.3),
)
def test_ratio_hist_coverage_monotone_in_eps(values, eps, bump):
    small = ratio_hist(values, GRID, eps)
    large = ratio_hist(values, GRID, eps + bump)
    assert all(a <= b for a, b in zip(small.counts, large.counts))
    assert small.coverage <= large.coverage
