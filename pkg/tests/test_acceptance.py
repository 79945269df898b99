"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import io
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from mepp import cli, verify
from mepp import ensemble_calc as calc
from mepp import scheduler as sch


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip())
        assert ok, f"criterion {number}: {detail}"

    return emit


def test_1_fixed_point_and_threshold(report):
    t0 = time.perf_counter()
    quarter = calc.symmetric_ensemble(0.25)
    drift = max(abs(a - b) for a, b in zip(calc.normal_round(quarter).out.probs, quarter.probs))
    grid = np.linspace(0, 1, 1001)[1:-1]
    gain = {f: calc.normal_round(calc.symmetric_ensemble(f)).out.fidelity - f for f in grid}
    improves = all(g > 0 for f, g in gain.items() if f > 0.25)
    degrades = all(g < 0 for f, g in gain.items() if f < 0.25)
    elapsed = time.perf_counter() - t0
    ok = drift <= 1e-12 and improves and degrades and elapsed < 1
    report(1, "fixed point at 1/4, gain iff F0 > 1/4", ok, f"drift={drift:.1e} t={elapsed:.2f}s")


def _improves(F0, F1, F2):
    e = calc.GhzEnsemble(3, (F0, F1, F2, max(1 - F0 - F1 - F2, 0.0)))
    return calc.normal_round(e).out.fidelity > F0


def test_2_gain_threshold_consistency(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for F1, F2 in rng.uniform(0, 0.3, size=(50, 2)):
        lo, hi = 0.0, 1 - F1 - F2
        assert not _improves(lo, F1, F2) and _improves(hi, F1, F2)
        while hi - lo > 1e-10:
            mid = 0.5 * (lo + hi)
            lo, hi = (lo, mid) if _improves(mid, F1, F2) else (mid, hi)
        worst = max(worst, abs(0.5 * (lo + hi) - calc.gain_threshold(F1, F2)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 1
    report(2, "bisected gain boundary equals closed-form threshold", ok, f"max|diff|={worst:.1e} t={elapsed:.2f}s")


def test_3_oracle_equivalence(report):
    t0 = time.perf_counter()
    results = verify.oracle_matrix(n3=100, n4=25, seed=3, tol=1e-10)
    elapsed = time.perf_counter() - t0
    worst = max(r.metric for r in results)
    ok = all(r.passed for r in results) and elapsed < 30
    report(3, "circuits match closed forms (100 N=3, 25 N=4)", ok, f"max err={worst:.1e} t={elapsed:.1f}s")


def test_4_recurrence_closed_form(report):
    worst_pair = 0.0
    for f0 in np.linspace(0, 1, 100):
        pe = calc.PairEnsemble("AB", f0, 1 - f0)
        composed = pe
        for n in range(11):
            worst_pair = max(worst_pair, abs(calc.pair_round_n(pe, n).f0 - composed.f0))
            composed = calc.pair_round(composed).out
    worst_link = 0.0
    for F0 in np.linspace(0.01, 0.99, 100):
        h = calc.cross_distill(calc.symmetric_ensemble(F0))
        for n in range(11):
            ab, bc = h["AB"].ensemble, h["BC"].ensemble
            for _ in range(n):
                ab, bc = calc.pair_round(ab).out, calc.pair_round(bc).out
            worst_link = max(worst_link, abs(calc.link(ab, bc).fidelity - calc.link_fidelity_closed(F0, n)))
    ok = worst_pair <= 1e-12 and worst_link <= 1e-12
    report(4, "n-round closed forms equal composition", ok, f"pair={worst_pair:.1e} link={worst_link:.1e}")


def test_5_curve_identities(report):
    worst = 0.0
    for F0 in np.linspace(0, 1, 10_000):
        c = calc.symmetric_curves(F0)
        worst = max(
            worst,
            abs(c.E_n + c.P_3to2 - 1),
            abs(c.E_o - c.E_n - c.E_2to3),
            abs(c.F_2to3 - c.F_2**2),
        )
    one, half = calc.symmetric_curves(1.0), calc.symmetric_curves(0.5)
    ends = max(abs(one.E_o - 1), abs(half.E_n - 1 / 3), abs(half.F_n - 0.75))
    ok = worst <= 1e-12 and ends <= 1e-12
    report(5, "efficiency and fidelity curve identities", ok, f"identities={worst:.1e} endpoints={ends:.1e}")


def test_6_monte_carlo(report):
    buf = io.StringIO()
    t0 = time.perf_counter()
    with redirect_stdout(buf):
        code = cli.main(["verify", "--trials", "100000", "--seed", "20240601"])
    elapsed = time.perf_counter() - t0
    summary = buf.getvalue().strip().splitlines()[-1]
    ok = code == 0 and elapsed < 60
    report(6, "Monte Carlo within 4 SE of calculus, verify exits 0", ok, f"exit={code} {summary}")


def test_7_yield_ratio_qualitative(report):
    coarse = sch.yield_ratio_curve(np.round(np.arange(0.26, 1.0, 1e-3), 12))
    fine = sch.yield_ratio_curve(np.round(np.arange(0.26, 1.0, 2.5e-4), 12))

    low = [r.f0 for r in coarse if r.ratio > 1]
    above_one = bool(low) and min(low) < 0.3

    # the ratio is piecewise smooth: it only jumps where an integer round
    # count changes, and inside each segment steps shrink with the grid
    def max_step(reports):
        return max(
            abs(b.ratio - a.ratio)
            for a, b in zip(reports, reports[1:])
            if (a.rounds_normal, a.rounds_pair) == (b.rounds_normal, b.rounds_pair)
        )

    shrink = max_step(fine) / max_step(coarse)
    tail = [r.ratio for r in coarse if r.f0 >= 0.95]
    to_zero = all(a >= b for a, b in zip(tail, tail[1:])) and sch.yield_report(1.0).ratio == 0.0 and tail[-1] < 0.01

    boundary = sch.depth_boundary(1)
    depth_ok = abs(boundary - 0.674) <= 1e-3 and sch.pair_depth(boundary + 1e-9) == 1 and sch.pair_depth(boundary - 1e-6) == 2

    crossover = sch.ratio_crossover(coarse)
    ok = above_one and shrink < 0.35 and to_zero and depth_ok
    anchors = sch.REFERENCE_ANCHORS
    detail = (
        f"ratio>1 from f0={min(low) if low else float('nan'):.3f} shrink={shrink:.2f} tail={tail[-1]:.1e} "
        f"depth-1 boundary={boundary:.4f} crossover={crossover:.4f} "
        f"(anchors {anchors['depth_one_boundary']}/{anchors['ratio_crossover']}/{anchors['considerable_below']} approximate)"
    )
    report(7, "yield ratio: >1 at low F0, piecewise continuous, -> 0, depth-1 boundary", ok, detail)


def test_8_determinism(report, tmp_path, capsys):
    same = []
    for cmd in ("sweep", "yield"):
        paths = [tmp_path / f"{cmd}{i}.csv" for i in (1, 2)]
        for p in paths:
            assert cli.main([cmd, "--f0-min", "0.25", "--f0-max", "1", "--step", "0.01", "--out", str(p)]) == 0
        same.append(paths[0].read_bytes() == paths[1].read_bytes())
    capsys.readouterr()
    report(8, "sweep and yield CSVs byte-identical across runs", all(same), f"sweep={same[0]} yield={same[1]}")
