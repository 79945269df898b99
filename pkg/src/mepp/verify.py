"""Oracle-versus-calculus and Monte Carlo verification matrices."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import ensemble_calc as calc
from . import exact_sim as sim
from . import montecarlo as mc
from .ghz_core import PAIR_PARTIES

ORACLE_TOL = 1e-10

LINK_COMBOS = (("AB", "BC"), ("AB", "AC"), ("AC", "BC"), ("BC", "AB"))


@dataclass
class CaseResult:
    group: str
    name: str
    passed: bool
    metric: float
    tolerance: float
    detail: str = ""


def _ghz_error(mixture: sim.WeightedMixture, expected: dict) -> float:
    """Largest deviation of the GHZ-basis density matrix from ``expected`` (diagonal)."""
    dist, off = sim.ghz_distribution(mixture)
    return max(off, max(abs(p - expected.get(lab, 0.0)) for lab, p in dist.items()))


def _random_ensemble(rng: np.random.Generator, n: int) -> calc.GhzEnsemble:
    return calc.GhzEnsemble(n, rng.dirichlet(np.ones(1 << (n - 1))))


def _random_pair(rng, pair: str) -> calc.PairEnsemble:
    f0 = float(rng.uniform())
    return calc.PairEnsemble(pair, f0, 1 - f0)


def check_normal_round(e: calc.GhzEnsemble) -> float:
    rho = sim.ghz_mixture(e.n_parties, e.probs)
    got = sim.normal_round_circuit(sim.product(rho, rho))
    want = calc.normal_round(e)
    return max(abs(got.kept_probability - want.kept_prob), _ghz_error(got.output, want.out.as_dict()))


def check_cross_distill(e: calc.GhzEnsemble) -> float:
    rho = sim.ghz_mixture(3, e.probs)
    got = sim.distill_circuit(sim.product(rho, rho))
    want = calc.cross_distill(e)
    err = 0.0
    for pair in PAIR_PARTIES:
        err = max(err, abs(got[pair].probability - want[pair].weight))
        pe = want[pair].ensemble
        if pe is not None:
            err = max(err, _ghz_error(got[pair].output, _pair_dict(pe)))
    return err


def _pair_dict(pe: calc.PairEnsemble) -> dict:
    return {sim.BELL["phi+"]: pe.f0, sim.BELL["psi+"]: pe.f1}


def _pair_mixture(pe: calc.PairEnsemble) -> sim.WeightedMixture:
    return sim.ghz_mixture(2, (pe.f0, pe.f1))


def check_pair_round(pe: calc.PairEnsemble) -> float:
    rho = _pair_mixture(pe)
    got = sim.pair_round_circuit(sim.product(rho, rho))
    want = calc.pair_round(pe)
    return max(abs(got.kept_probability - want.success_prob), _ghz_error(got.output, _pair_dict(want.out)))


def link_parties(first: str, second: str) -> tuple[int, int, int]:
    a, b = set(PAIR_PARTIES[first]), set(PAIR_PARTIES[second])
    (s,) = a & b
    return (a - {s}).pop(), s, (b - {s}).pop()


def check_link(first: calc.PairEnsemble, second: calc.PairEnsemble) -> float:
    got = sim.link_circuit(
        sim.product(_pair_mixture(first), _pair_mixture(second)), link_parties(first.pair, second.pair)
    )
    want = calc.link(first, second)
    return max(abs(got.probability - 1.0), _ghz_error(got.output, want.as_dict()))


def oracle_matrix(n3: int = 100, n4: int = 25, seed: int = 0, tol: float = ORACLE_TOL) -> list[CaseResult]:
    """Compare every closed form with its circuit on random inputs."""
    rng = np.random.default_rng(seed)
    errs = {"normal_round[N=3]": 0.0, "cross_distill": 0.0, "pair_round": 0.0, "link": 0.0, "normal_round[N=4]": 0.0}
    for _ in range(n3):
        e = _random_ensemble(rng, 3)
        errs["normal_round[N=3]"] = max(errs["normal_round[N=3]"], check_normal_round(e))
        errs["cross_distill"] = max(errs["cross_distill"], check_cross_distill(e))
        errs["pair_round"] = max(errs["pair_round"], check_pair_round(_random_pair(rng, "AB")))
        for first, second in LINK_COMBOS:
            errs["link"] = max(errs["link"], check_link(_random_pair(rng, first), _random_pair(rng, second)))
    for _ in range(n4):
        errs["normal_round[N=4]"] = max(errs["normal_round[N=4]"], check_normal_round(_random_ensemble(rng, 4)))
    return [CaseResult("oracle", name, err <= tol, err, tol) for name, err in errs.items()]


def montecarlo_configs(trials: int, seed: int) -> list[tuple[str, mc.TrialConfig]]:
    asym = (0.4, 0.3, 0.2, 0.1)
    four = (0.5, 0.1, 0.1, 0.08, 0.07, 0.06, 0.05, 0.04)
    return [
        ("normal_round symmetric F0=0.5", mc.TrialConfig("normal_round", trials, seed, {"probs": (0.5, 1 / 6, 1 / 6, 1 / 6)})),
        ("normal_round (0.4,0.3,0.2,0.1)", mc.TrialConfig("normal_round", trials, seed, {"probs": asym})),
        ("normal_round pure", mc.TrialConfig("normal_round", trials, seed, {"probs": (1.0, 0.0, 0.0, 0.0)})),
        ("normal_round N=4", mc.TrialConfig("normal_round", trials, seed, {"probs": four, "n_parties": 4})),
        ("distill (0.4,0.3,0.2,0.1)", mc.TrialConfig("distill", trials, seed, {"probs": asym})),
        ("pair_round f0=0.6", mc.TrialConfig("pair_round", trials, seed, {"f0": 0.6})),
        ("link AB(0.9)+BC(0.8)", mc.TrialConfig("link", trials, seed, {"first": (0.9, 0.1), "second": (0.8, 0.2)})),
        (
            "link AB(0.7)+AC(0.85)",
            mc.TrialConfig("link", trials, seed, {"first": (0.7, 0.3), "second": (0.85, 0.15), "first_pair": "AB", "second_pair": "AC"}),
        ),
        ("full_pipeline F0=0.5", mc.TrialConfig("full_pipeline", trials, seed, {"F0": 0.5})),
    ]


def montecarlo_matrix(trials: int = 100_000, seed: int = 0) -> list[CaseResult]:
    out = []
    for name, cfg in montecarlo_configs(trials, seed):
        summary = mc.sample_scenario(cfg)
        cmp = mc.compare_to_calculus(summary)
        worst = max(cmp.z_scores, key=cmp.z_scores.get)
        out.append(CaseResult("montecarlo", name, cmp.passed, cmp.worst_z, mc.Z_PASS, f"worst={worst}"))
    return out


def results_csv(results: list[CaseResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "name", "passed", "metric", "tolerance", "detail"])
    for r in results:
        w.writerow([r.group, r.name, int(r.passed), f"{r.metric:.6g}", f"{r.tolerance:.6g}", r.detail])
    return buf.getvalue()
