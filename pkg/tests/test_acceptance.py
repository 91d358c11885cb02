"""Acceptance suite: one test per shipped claim, at its stated tolerance.

Run ``pytest -v tests/test_acceptance.py`` for a pass/fail line per
criterion; add ``-s`` to see the measured figures inline.  The whole
module is sequential and deterministic, budget roughly twenty minutes on
one core.  Criteria 2 and 3 share the four swap maps built by the
``phi_bundle`` fixture.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from bernlab.cli import main as cli_main
from bernlab.cocycles import compare_defect, gibbs_cocycle
from bernlab.configurations import CylinderSet, act, exact_rn, sample
from bernlab.construction import (
    build_phi,
    build_schedule,
    clt_check,
    domain_scan,
    phi_rn,
    sample_walk,
    walk_stats,
)
from bernlab.families import make_family, make_group
from bernlab.maharam import (
    ProductSystem,
    conservativity_return_check,
    essential_value_witness,
    maharam_preservation_check,
    ratio_hist,
    scan_returns,
)
from bernlab.rng import derive_seed

EXACT_TOL = 1e-12
CYL0 = CylinderSet.of({0: 0})


def _pass(num, detail):
    print(f"criterion {num:02d} PASS: {detail}")


@pytest.fixture(scope="module")
def zfam():
    return make_family("z_demo")


@pytest.fixture(scope="module")
def zsystem(zfam):
    return ProductSystem(zfam)


@pytest.fixture(scope="module")
def phi_bundle(zfam):
    """The four swap maps at eps 0.2 with their fresh-seed domain scans.

    margin=0.01 makes the accepted horizon clear 1/3 by a real gap, so
    the 1e5-seed rescan's lower confidence bound is not sitting on the
    fence.  Scan seed i maps to configuration sample(zfam, seed + i),
    which is how criterion 3 recovers in-domain points.
    """
    start = time.perf_counter()
    bundle = {}
    for i, t in enumerate((0.0, 0.3, 0.7, 1.0)):
        build_seed = derive_seed(2026, f"phi-{i}")
        scan_seed = derive_seed(2026, f"scan-{i}")
        phi = build_phi(zfam, (), t, 0.2, margin=0.01, seed=build_seed)
        scan = domain_scan(phi, 100_000, seed=scan_seed)
        bundle[t] = (phi, scan, scan_seed)
    elapsed = time.perf_counter() - start
    return bundle, elapsed


def test_criterion_01_exact_oracle_suite():
    start = time.perf_counter()
    fam = make_family("finitely_perturbed", lambda0=0.5,
                      support={-4: 0.62, -1: 0.7, 2: 0.55, 4: 0.45})

    worst_chain = 0.0
    xs = [sample(fam, derive_seed(101, i)) for i in range(8)]
    for g, h in itertools.product(range(-6, 7), repeat=2):
        for x in xs:
            lhs = exact_rn(g + h, x)
            rhs = exact_rn(h, x) + exact_rn(g, act(h, x))
            worst_chain = max(worst_chain, abs(lhs - rhs))

    worst_gibbs = 0.0
    flips = ((-4,), (-1,), (2,), (4,), (-4, 2), (-1, 4), (-4, -1, 2, 4))
    for x in xs[:5]:
        for sites in flips:
            y = x.with_overrides({s: 1 - x.value(s) for s in sites})
            c_here = gibbs_cocycle(fam, x, y)
            for g in range(-5, 6):
                dr = exact_rn(g, x) - exact_rn(g, y)
                ct = gibbs_cocycle(fam, act(g, x), act(g, y))
                worst_gibbs = max(worst_gibbs, abs(dr - (c_here - ct)))

    # every gap is log(.55/.45) = 0.2007, under eps/2; horizon lands at 2
    fam2 = make_family("finitely_perturbed", lambda0=0.5,
                       support={-4: 0.55, -2: 0.55, 1: 0.45, 3: 0.55})
    phi = build_phi(fam2, (), 0.05, 0.5, mode="exact", budget=4)
    probe = np.arange(-6, 7, dtype=np.int64)
    worst_phi = 0.0
    hits = 0
    for i in range(600):
        x = sample(fam2, derive_seed(202, i))
        if not phi.in_domain(x):
            continue
        hits += 1
        y = phi.apply(x)
        bx = x.values_at(probe)
        by = y.values_at(probe)
        log_ratio = 0.0
        for s, vx, vy in zip(probe, bx, by):
            if vx == vy:
                continue
            p = fam2.mu0(int(s))
            log_ratio += math.log(p if vx == 0 else 1 - p)
            log_ratio -= math.log(p if vy == 0 else 1 - p)
        worst_phi = max(worst_phi, abs(phi_rn(phi, x) - log_ratio))
    assert hits >= 150

    worst_skew = 0.0
    for cyl in (CylinderSet.of({0: 0, 1: 1}), CylinderSet.of({-3: 1})):
        for g in (1, -2, 5):
            for interval in ((0.0, 2.0), (-1.0, 1.0)):
                d = maharam_preservation_check(fam, g, cyl, interval)
                worst_skew = max(worst_skew, d)

    elapsed = time.perf_counter() - start
    worst = max(worst_chain, worst_gibbs, worst_phi, worst_skew)
    assert worst_chain < EXACT_TOL
    assert worst_gibbs < EXACT_TOL
    assert worst_phi < EXACT_TOL
    assert worst_skew < EXACT_TOL
    assert elapsed < 60.0
    _pass(1, f"worst defect {worst:.2e} across chain/gibbs/phi/skew "
             f"oracles in {elapsed:.1f}s")


def test_criterion_02_domain_mass_and_window(phi_bundle):
    bundle, elapsed = phi_bundle
    lines = []
    for t, (phi, scan, _) in sorted(bundle.items()):
        assert scan.samples == 100_000
        assert scan.lcb99 >= 1.0 / 3.0, (
            f"t={t}: domain lcb99 {scan.lcb99:.4f} under 1/3"
        )
        assert scan.violations == 0, (
            f"t={t}: {scan.violations} stopped values escaped (t, t+eps)"
        )
        lines.append(f"t={t}: N={phi.horizon} mass {scan.fraction:.4f} "
                     f"lcb {scan.lcb99:.4f}")
    assert elapsed < 300.0
    _pass(2, "; ".join(lines) + f"; built+scanned in {elapsed:.1f}s")


def test_criterion_03_translation_defect_bound(zfam, phi_bundle):
    bundle, _ = phi_bundle
    start = time.perf_counter()
    lam = zfam.lambda0
    g_per_phi = 250
    worst = 0.0
    total = 0
    for idx, (t, (phi, scan, scan_seed)) in enumerate(sorted(bundle.items())):
        supp = np.asarray(phi.support_sites(phi.horizon), dtype=np.int64)
        threshold = phi.eps / (2.0 * len(supp))

        # Translates must dodge every site whose weight sup-norm reaches
        # the threshold.  The unpinned background deviation decays like
        # 1/(2 sqrt(n log n)), which stays above 1e-5 into the 1e8 range
        # for the largest support here, so the certified-safe window
        # starts at 2e9; each draw is still checked site by site below.
        g_lo, g_span = 2_000_000_000, 1_000_000_000
        in_dom = np.flatnonzero(scan.in_domain)[:4]
        assert len(in_dom) == 4
        xs = [sample(zfam, scan_seed + int(i)) for i in in_dom]
        for x in xs:
            assert phi.in_domain(x)
        for j in range(g_per_phi):
            raw = derive_seed(derive_seed(3003, idx), j)
            g = g_lo + (raw % g_span)
            if (raw >> 61) & 1:
                g = -g
            p = zfam.mu0_many(supp + g)
            sup = np.maximum(np.abs(np.log(p / lam)),
                             np.abs(np.log((1.0 - p) / (1.0 - lam))))
            assert float(np.max(sup)) < threshold, (
                f"t={t}: translate {g} meets the comparison set"
            )
            defect = compare_defect(zfam, g, phi, xs[j % len(xs)])
            worst = max(worst, abs(defect))
            total += 1
            assert abs(defect) < phi.eps
    elapsed = time.perf_counter() - start
    assert total == 1000
    _pass(3, f"{total} translates, worst |defect| {worst:.2e} < 0.2, "
             f"zero violations in {elapsed:.1f}s")


def test_criterion_04_walk_normal_approximation(zfam):
    start = time.perf_counter()
    n, m = 10_000, 100_000
    schedule = build_schedule(zfam, (), 1.0, n)
    ks = clt_check(schedule, n, m, seed=derive_seed(404, "ks"))
    assert ks <= 0.02

    stats = walk_stats(schedule, n)
    draws = sample_walk(schedule, n, m, seed=derive_seed(404, "moments"))
    mean_gap = abs(float(np.mean(draws)) - stats.a_n)
    std_gap = abs(float(np.std(draws)) - stats.b_n)
    mean_bar = 3.0 * stats.b_n / math.sqrt(m)
    std_bar = 3.0 * stats.b_n / math.sqrt(2.0 * m)
    assert mean_gap <= mean_bar
    assert std_gap <= std_bar
    elapsed = time.perf_counter() - start
    _pass(4, f"ks {ks:.5f} <= 0.02 at n={n}, m={m}; mean gap "
             f"{mean_gap:.5f}/{mean_bar:.5f}, std gap {std_gap:.5f}/{std_bar:.5f} "
             f"(a_n {stats.a_n:.4f}, b_n {stats.b_n:.4f}) in {elapsed:.1f}s")


def test_criterion_05_witness_fraction_floor(zsystem):
    start = time.perf_counter()
    floor = 1.0 / 27.0
    lines = []
    for i, t in enumerate((0.25, 0.5, 0.75)):
        rep = essential_value_witness(zsystem, CYL0, t, 0.15, 1000, 140_000,
                                      1000, seed=derive_seed(505, i))
        assert rep.in_set >= 400
        assert rep.lcb99 > floor, (
            f"t={t}: witness lcb99 {rep.lcb99:.4f} under 1/27"
        )
        lines.append(f"t={t}: {len(rep.witnesses)}/{rep.in_set} "
                     f"lcb {rep.lcb99:.4f}")
    elapsed = time.perf_counter() - start
    assert elapsed < 900.0
    _pass(5, "; ".join(lines) + f" (floor {floor:.4f}) in {elapsed:.0f}s")


def test_criterion_06_return_fraction_growth(zsystem):
    start = time.perf_counter()
    fracs = []
    for rg in (100, 300, 1000):
        rep = conservativity_return_check(zsystem, CYL0, 0.2, range(-2, 3),
                                          rg, 200, seed=606, R_trunc=120_000)
        assert rep.in_set >= 80
        fracs.append(rep.fraction)
    assert all(a <= b for a, b in zip(fracs, fracs[1:]))
    assert fracs[-1] >= 0.95
    elapsed = time.perf_counter() - start
    _pass(6, "fractions " + ", ".join(f"{f:.3f}" for f in fracs)
             + f" over radii 100/300/1000 in {elapsed:.0f}s")


def test_criterion_07_divergence_diagnostics(zfam):
    start = time.perf_counter()
    radii = (100_000, 200_000, 500_000, 1_000_000)
    kak = [zfam.kakutani_partial(1, r) for r in radii]
    increments = [abs(b - a) for a, b in zip(kak, kak[1:])]
    assert max(increments) < 1e-4

    gap = zfam.divergence_partial(1_000_000) - zfam.divergence_partial(1000)
    assert gap >= 0.5

    dens_lines = []
    for c in (0.5, 1.0, 2.0):
        v = [zfam.conservativity_partial(c, r, 10_000)
             for r in (10_000, 30_000, 100_000)]
        assert v[0] < v[1] < v[2]
        d1 = (v[1] - v[0]) / 20_000.0
        d2 = (v[2] - v[1]) / 70_000.0
        # saturation would drive the incremental mass per site toward
        # zero; here it keeps growing
        assert d2 >= 0.5 * d1
        dens_lines.append(f"c={c}: density ratio {d2 / d1:.3f}")
    elapsed = time.perf_counter() - start
    _pass(7, f"kakutani increment max {max(increments):.2e} < 1e-4, "
             f"divergence gap {gap:.3f} >= 0.5; " + "; ".join(dens_lines)
             + f" in {elapsed:.0f}s")


def test_criterion_08_square_profile_contrast(zfam):
    start = time.perf_counter()
    f2 = make_family("f2_radial", model=make_group("F2"))
    prof = [f2.l2_tail_profile(r) for r in (25, 30, 40, 60)]
    f2_wobble = max(abs(b - a) for a, b in zip(prof, prof[1:]))
    assert f2_wobble < 1e-6

    growth = zfam.l2_tail_profile(1_000_000) - zfam.l2_tail_profile(100_000)
    assert growth >= 0.1
    elapsed = time.perf_counter() - start
    _pass(8, f"radial tree profile wobble {f2_wobble:.2e} < 1e-6 beyond 25; "
             f"integer-line profile still gains {growth:.3f} from 1e5 to 1e6 "
             f"in {elapsed:.1f}s")


def test_criterion_09_ratio_coverage_labels(zsystem):
    start = time.perf_counter()
    grid = (0.0, 0.25, 0.5, 0.75, 1.0)
    events = []
    counts = []
    for i, t in enumerate(grid):
        rep = essential_value_witness(zsystem, CYL0, t, 0.1, 1000, 140_000,
                                      300, seed=derive_seed(909, i))
        events.extend(rep.witnesses)
        counts.append(len(rep.witnesses))
    hist = ratio_hist(events, grid, 0.1)
    assert hist.coverage >= 0.9
    assert hist.label == "III1-consistent"

    flat = ProductSystem(make_family("constant"))
    flat_events = scan_returns(flat, CYL0, 32, 1000, 300, seed=42)
    flat_hist = ratio_hist(flat_events, grid, 0.1)
    assert flat_hist.covered == (True, False, False, False, False)
    assert flat_hist.label == "II-consistent"
    elapsed = time.perf_counter() - start
    _pass(9, f"witness counts {counts} cover {hist.coverage:.2f} of the grid "
             f"({hist.label}); constant family hits only t=0 "
             f"({flat_hist.label}, {flat_hist.events_total} events) "
             f"in {elapsed:.0f}s")


def test_criterion_10_bit_reproducible_reports(tmp_path):
    config = {
        "seed": 20260818,
        "experiments": [
            {"kind": "kakutani", "family": {"kind": "z_demo"},
             "params": {"radii": [1000, 10_000], "g": 1,
                        "c_values": [1.0], "r_inner": 1000}},
            {"kind": "clt", "family": {"kind": "z_demo"},
             "params": {"n_values": [16, 64], "sample_count": 4000,
                        "budget": 64}},
            {"kind": "maharam-check",
             "family": {"kind": "finitely_perturbed",
                        "support": {"2": 0.7, "-3": 0.4}},
             "params": {"g_values": [1, -2], "cylinder": {"0": 0},
                        "intervals": [[0.0, 1.0]]}},
        ],
    }
    cfg = tmp_path / "acceptance.json"
    cfg.write_text(json.dumps(config))
    outs = (tmp_path / "first", tmp_path / "second")
    for out in outs:
        rc = cli_main(["report", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
    first = sorted(p.name for p in outs[0].glob("*.csv"))
    second = sorted(p.name for p in outs[1].glob("*.csv"))
    assert first == second and first
    for name in first:
        a = (outs[0] / name).read_bytes()
        b = (outs[1] / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"
    _pass(10, f"{len(first)} CSV tables byte-identical across reruns")
