"""Monte Carlo trajectory sampling of the protocol circuits.

Every trial draws its input labels from the configured distribution and then
walks the exact branch tree of the circuit (:func:`mepp.exact_sim.circuit_tree`),
choosing each measurement outcome with its exact conditional probability.

Random numbers come from Philox-4x64 (numpy's ``Philox`` bit generator),
keyed by ``SeedSequence((seed, stream))``.  Trial ``i`` of a stream always
consumes the 16 doubles at counter offset ``4*i``, so any split of the trials
into chunks reproduces the serial run bit for bit.
"""

from __future__ import annotations

import bisect
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import ensemble_calc as calc
from . import scheduler
from .errors import ScenarioError
from .exact_sim import BELL, Node, circuit_tree, identify_ghz, kron, make_ghz
from .ghz_core import PAIR_PARTIES, GhzLabel, all_labels, ensemble_labels

SCENARIOS = ("normal_round", "distill", "pair_round", "link", "full_pipeline")
UNIFORMS_PER_TRIAL = 16
Z_PASS = 4.0

_MASK64 = (1 << 64) - 1


def trial_uniforms(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Uniforms for trials ``start .. start+count-1`` of one stream, one row per trial."""
    if not 0 <= seed <= _MASK64:
        raise ScenarioError(f"seed must be an unsigned 64-bit integer, got {seed}")
    key = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, stream]).generate_state(2, np.uint64)
    bitgen = np.random.Philox(key=key)
    # one double per 64-bit word, four words per counter step
    bitgen.advance(start * UNIFORMS_PER_TRIAL // 4)
    return np.random.Generator(bitgen).random((count, UNIFORMS_PER_TRIAL))


@dataclass
class _Compact:
    cum: list[float] | None = None
    children: list["_Compact"] = field(default_factory=list)
    kept: bool = False
    label: GhzLabel | None = None
    pair: str | None = None


def _compact(node: Node) -> _Compact:
    if node.is_leaf:
        leaf = node.path
        label = identify_ghz(leaf.state) if leaf.kept else None
        return _Compact(kept=leaf.kept, label=label, pair=leaf.record.get("pair"))
    cum = np.cumsum([p for p, _ in node.branches]).tolist()
    cum[-1] = 1.0
    return _Compact(cum=cum, children=[_compact(c) for _, c in node.branches])


_TREES: dict[tuple, _Compact] = {}


def _tree(circuit: str, labels: tuple[GhzLabel, ...], *args) -> _Compact:
    key = (circuit, labels, args)
    t = _TREES.get(key)
    if t is None:
        state = kron(*(make_ghz(lab.n_parties, lab) for lab in labels))
        t = _TREES[key] = _compact(circuit_tree(circuit, state, *args))
    return t


def clear_caches():
    _TREES.clear()


def _walk(tree: _Compact, u: np.ndarray, j: int) -> _Compact:
    while tree.cum is not None:
        k = bisect.bisect_right(tree.cum, u[j])
        tree = tree.children[min(k, len(tree.children) - 1)]
        j += 1
    return tree


def _draw(cum: list[float], x: float) -> int:
    return min(bisect.bisect_right(cum, x), len(cum) - 1)


def _cumulative(probs: Sequence[float]) -> list[float]:
    c = np.cumsum(np.asarray(probs, dtype=float))
    return (c / c[-1]).tolist()


@dataclass
class Statistic:
    """One tallied quantity.

    Binomial statistics carry ``count`` out of ``n``; batch statistics carry an
    estimate with a standard error taken from the spread of batch means.
    """

    name: str
    estimate: float
    se: float
    n: int
    prediction: float | None = None
    binomial: bool = True

    @classmethod
    def binomial_rate(cls, name: str, count: int, n: int, prediction: float | None = None):
        p = count / n if n else math.nan
        se = math.sqrt(p * (1 - p) / n) if n else math.nan
        return cls(name, p, se, n, prediction)

    def null_se(self, prediction: float) -> float:
        if self.binomial:
            p0 = min(max(prediction, 0.0), 1.0)
            return math.sqrt(p0 * (1 - p0) / self.n) if self.n else math.nan
        return self.se

    def z(self, prediction: float | None = None) -> float:
        pred = self.prediction if prediction is None else prediction
        if pred is None or self.n == 0:
            return math.nan
        diff = abs(self.estimate - pred)
        se = self.null_se(pred)
        if se == 0:
            return 0.0 if diff <= 1e-12 else math.inf
        return diff / se


@dataclass(frozen=True)
class TrialConfig:
    scenario: str
    trials: int
    seed: int
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ScenarioError(f"unknown scenario {self.scenario!r}")
        if self.trials < 1:
            raise ScenarioError("need at least one trial")


@dataclass
class TrialSummary:
    scenario: str
    trials: int
    seed: int
    stats: dict[str, Statistic]

    @property
    def kept_rate(self) -> float | None:
        s = self.stats.get("kept")
        return None if s is None else s.estimate

    @property
    def label_frequencies(self) -> dict[str, float]:
        return {k: s.estimate for k, s in self.stats.items() if k.startswith(("GHZ", "AB:", "AC:", "BC:"))}

    @property
    def standard_errors(self) -> dict[str, float]:
        return {k: s.se for k, s in self.stats.items()}

    @property
    def z_scores(self) -> dict[str, float]:
        return {k: s.z() for k, s in self.stats.items() if s.prediction is not None}

    @property
    def max_abs_deviation(self) -> float:
        devs = [abs(s.estimate - s.prediction) for s in self.stats.values() if s.prediction is not None and s.n]
        return max(devs, default=0.0)


def _label_stats(prefix: str, counts: dict[GhzLabel, int], n: int, n_parties: int, predicted: dict[GhzLabel, float]):
    out = {}
    for lab in all_labels(n_parties):
        name = f"{prefix}{lab}"
        out[name] = Statistic.binomial_rate(name, counts.get(lab, 0), n, predicted.get(lab, 0.0))
    return out


def _sample_pair_inputs(cfg, circuit, labels_a, cum_a, labels_b, cum_b, args=(), stream=0):
    """Draw one input from each distribution per trial and walk the circuit."""
    u = trial_uniforms(cfg.seed, stream, 0, cfg.trials).tolist()
    leaves = []
    for row in u:
        a = labels_a[_draw(cum_a, row[0])]
        b = labels_b[_draw(cum_b, row[1])]
        leaves.append(_walk(_tree(circuit, (a, b), *args), row, 2))
    return leaves


def _normal_round(cfg: TrialConfig) -> dict[str, Statistic]:
    probs = cfg.params["probs"]
    n = cfg.params.get("n_parties", (len(probs)).bit_length())
    e = calc.GhzEnsemble(n, probs)
    labels, cum = ensemble_labels(n), _cumulative(probs)
    leaves = _sample_pair_inputs(cfg, "normal_round", labels, cum, labels, cum, (n,))
    kept = [lf.label for lf in leaves if lf.kept]
    pred = calc.normal_round(e)
    stats = {"kept": Statistic.binomial_rate("kept", len(kept), cfg.trials, pred.kept_prob)}
    stats.update(_label_stats("", Counter(kept), len(kept), n, pred.out.as_dict()))
    return stats


def _pair_prediction(pe: calc.PairEnsemble) -> dict[GhzLabel, float]:
    return {BELL["phi+"]: pe.f0, BELL["psi+"]: pe.f1}


def _distill(cfg: TrialConfig) -> dict[str, Statistic]:
    e = calc.GhzEnsemble(3, cfg.params["probs"])
    labels, cum = ensemble_labels(3), _cumulative(e.probs)
    leaves = _sample_pair_inputs(cfg, "distill", labels, cum, labels, cum)
    harvest = calc.cross_distill(e)
    stats = {}
    for pair in PAIR_PARTIES:
        got = [lf.label for lf in leaves if lf.kept and lf.pair == pair]
        stats[f"harvest:{pair}"] = Statistic.binomial_rate(f"harvest:{pair}", len(got), cfg.trials, harvest[pair].weight)
        pe = harvest[pair].ensemble
        stats.update(_label_stats(f"{pair}:", Counter(got), len(got), 2, _pair_prediction(pe) if pe else {}))
    return stats


def _pair_round(cfg: TrialConfig) -> dict[str, Statistic]:
    f0 = cfg.params["f0"]
    pe = calc.PairEnsemble(cfg.params.get("pair", "AB"), f0, 1 - f0)
    labels, cum = ensemble_labels(2), _cumulative((pe.f0, pe.f1))
    leaves = _sample_pair_inputs(cfg, "normal_round", labels, cum, labels, cum, (2,))
    kept = [lf.label for lf in leaves if lf.kept]
    pred = calc.pair_round(pe)
    stats = {"kept": Statistic.binomial_rate("kept", len(kept), cfg.trials, pred.success_prob)}
    stats.update(_label_stats("", Counter(kept), len(kept), 2, _pair_prediction(pred.out)))
    return stats


def _link_parties(first: str, second: str) -> tuple[int, int, int]:
    a, b = set(PAIR_PARTIES[first]), set(PAIR_PARTIES[second])
    (s,) = a & b
    (o1,) = a - {s}
    (o2,) = b - {s}
    return o1, s, o2


def _link(cfg: TrialConfig) -> dict[str, Statistic]:
    p = cfg.params
    first = calc.PairEnsemble(p.get("first_pair", "AB"), *p["first"])
    second = calc.PairEnsemble(p.get("second_pair", "BC"), *p["second"])
    labels = ensemble_labels(2)
    parties = _link_parties(first.pair, second.pair)
    leaves = _sample_pair_inputs(
        cfg, "link", labels, _cumulative((first.f0, first.f1)), labels, _cumulative((second.f0, second.f1)), (parties,)
    )
    kept = [lf.label for lf in leaves if lf.kept]
    pred = calc.link(first, second)
    stats = {"kept": Statistic.binomial_rate("kept", len(kept), cfg.trials, 1.0)}
    stats.update(_label_stats("", Counter(kept), len(kept), 3, pred.as_dict()))
    return stats


def sample_full_pipeline(
    F0: float, policy: scheduler.YieldPolicy = scheduler.YieldPolicy(), trials: int = 100_000, seed: int = 0, batches: int = 20
) -> TrialSummary:
    """Stage-by-stage Monte Carlo of both yield pipelines under symmetric noise.

    Each of ``batches`` independent replicas runs ``trials // batches`` trials
    per stage.  A stage draws its inputs from the output pool of the previous
    stage, so purified states are genuine oracle outputs.  Yields follow the
    same per-stage accounting as :mod:`mepp.scheduler`; standard errors come
    from the spread of the batch estimates.
    """
    if batches < 2:
        raise ScenarioError("need at least two batches for a standard error")
    per = max(trials // batches, 1)
    report = scheduler.yield_report(F0, policy)
    n_normal = report.rounds_normal if scheduler.UNREACHABLE_NORMAL not in report.flags else 0
    n_pair = report.rounds_pair if scheduler.UNREACHABLE_RECYCLE not in report.flags else 0
    e = calc.symmetric_ensemble(F0)
    labels3, cum3 = ensemble_labels(3), _cumulative(e.probs)
    target3 = labels3[0]

    y_n, fid_n, y_r, fid_r = [], [], [], []
    for b in range(batches):
        stream = 1000 * (b + 1)
        # normal path
        pool = None
        y = 1.0
        for k in range(n_normal):
            u = trial_uniforms(seed, stream + k, 0, per).tolist()
            out = []
            for row in u:
                x, z = (_pick(pool, labels3, cum3, row[0]), _pick(pool, labels3, cum3, row[1]))
                leaf = _walk(_tree("normal_round", (x, z), 3), row, 2)
                if leaf.kept:
                    out.append(leaf.label)
            y *= len(out) / per / 2
            pool = out
            if not pool:
                break
        y_n.append(y)
        if pool is None:
            fid_n.append(F0)
        elif pool:
            fid_n.append(sum(lab == target3 for lab in pool) / len(pool))

        # recycling path
        u = trial_uniforms(seed, stream + 100, 0, per).tolist()
        pools: dict[str, list] = {p: [] for p in PAIR_PARTIES}
        for row in u:
            x, z = labels3[_draw(cum3, row[0])], labels3[_draw(cum3, row[1])]
            leaf = _walk(_tree("distill", (x, z)), row, 2)
            if leaf.kept:
                pools[leaf.pair].append(leaf.label)
        counts = {p: len(v) / per / 2 for p, v in pools.items()}
        if report.y_recycle == 0 or scheduler.UNREACHABLE_RECYCLE in report.flags:
            y_r.append(0.0)
            continue
        for k in range(n_pair):
            for j, pair in enumerate(PAIR_PARTIES):
                u = trial_uniforms(seed, stream + 200 + 10 * k + j, 0, per).tolist()
                src, out = pools[pair], []
                if src:
                    for row in u:
                        x, z = src[_draw_index(len(src), row[0])], src[_draw_index(len(src), row[1])]
                        leaf = _walk(_tree("normal_round", (x, z), 2), row, 2)
                        if leaf.kept:
                            out.append(leaf.label)
                counts[pair] *= len(out) / per / 2
                pools[pair] = out
        y_r.append(scheduler.match_links(counts))
        if pools["AB"] and pools["BC"]:
            u = trial_uniforms(seed, stream + 900, 0, per).tolist()
            hits = 0
            for row in u:
                x = pools["AB"][_draw_index(len(pools["AB"]), row[0])]
                z = pools["BC"][_draw_index(len(pools["BC"]), row[1])]
                leaf = _walk(_tree("link", (x, z), (0, 1, 2)), row, 2)
                hits += leaf.label == target3
            fid_r.append(hits / per)

    stats = {
        "y_normal": _batch_stat("y_normal", y_n, report.y_normal),
        "y_recycle": _batch_stat("y_recycle", y_r, report.y_recycle),
    }
    if fid_n:
        stats["fidelity_normal"] = _batch_stat("fidelity_normal", fid_n, report.final_fidelities["normal"])
    if fid_r and "recycle" in report.final_fidelities:
        stats["fidelity_recycle"] = _batch_stat("fidelity_recycle", fid_r, report.final_fidelities["recycle"])
    return TrialSummary("full_pipeline", per * batches, seed, stats)


def _pick(pool, labels, cum, x):
    if pool is None:
        return labels[_draw(cum, x)]
    return pool[_draw_index(len(pool), x)]


def _draw_index(size: int, x: float) -> int:
    return min(int(x * size), size - 1)


def _batch_stat(name: str, values: list[float], prediction: float) -> Statistic:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return Statistic(name, float(v.mean()), se, v.size, prediction, binomial=False)


def _full_pipeline(cfg: TrialConfig) -> TrialSummary:
    p = cfg.params
    policy = scheduler.YieldPolicy(f_thr=p.get("f_thr", 0.95))
    return sample_full_pipeline(p["F0"], policy, cfg.trials, cfg.seed, p.get("batches", 20))


_RUNNERS = {
    "normal_round": _normal_round,
    "distill": _distill,
    "pair_round": _pair_round,
    "link": _link,
}


def sample_scenario(cfg: TrialConfig) -> TrialSummary:
    """Run ``cfg`` and tally every statistic next to its closed-form prediction."""
    try:
        if cfg.scenario == "full_pipeline":
            return _full_pipeline(cfg)
        stats = _RUNNERS[cfg.scenario](cfg)
    except KeyError as exc:
        raise ScenarioError(f"scenario {cfg.scenario!r} is missing parameter {exc}") from None
    return TrialSummary(cfg.scenario, cfg.trials, cfg.seed, stats)


@dataclass
class Comparison:
    passed: bool
    worst_z: float
    z_scores: dict[str, float]


def compare_to_calculus(summary: TrialSummary, prediction: Mapping[str, float] | None = None) -> Comparison:
    """Pass iff every predicted statistic lies within 4 standard errors.

    Binomial statistics use the standard error implied by the predicted
    rate; batch statistics use their empirical standard error.
    """
    if summary.trials == 0:
        raise ScenarioError("empty summary")
    zs = {}
    for name, stat in summary.stats.items():
        pred = stat.prediction if prediction is None else prediction.get(name, stat.prediction)
        if pred is None or stat.n == 0:
            continue
        zs[name] = stat.z(pred)
    worst = max(zs.values(), default=0.0)
    return Comparison(worst <= Z_PASS, worst, zs)
