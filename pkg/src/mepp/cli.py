"""``mepp`` command-line front end.

Subcommands: ``sweep``, ``yield``, ``verify``, ``simulate``, ``thresholds``.
Exit codes: 0 success, 1 usage or parse error, 2 I/O error, 3 verification
failure.
"""

from __future__ import annotations

import argparse
import math
import os
import re
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ensemble_calc as calc
from . import exact_sim as sim
from . import scheduler, verify
from .errors import MeppError
from .ghz_core import PAIR_PARTIES, GhzLabel, ensemble_labels, parse_label

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VERIFY = 0, 1, 2, 3

SWEEP_HEADER = "f0,e_n,e_2to3,e_o,f_n,f_2,f_2to3"
YIELD_HEADER = "f0,y_n,y_r,ratio,rounds_normal,rounds_pair,flags"
THRESHOLD_HEADER = "f1,f2,f0_min"


class UsageError(Exception):
    pass


def fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = f"{x:.6g}"
    return "0" if s == "-0" else s


@dataclass(frozen=True)
class SweepConfig:
    f0_min: float = 0.25
    f0_max: float = 1.0
    step: float = 0.01
    out: str | None = None

    def __post_init__(self):
        if not 0 <= self.f0_min <= self.f0_max <= 1:
            raise UsageError(f"need 0 <= f0_min <= f0_max <= 1, got [{self.f0_min}, {self.f0_max}]")
        if not self.step > 0:
            raise UsageError(f"step must be positive, got {self.step}")

    def grid(self) -> np.ndarray:
        # integer stepping keeps the grid free of accumulated rounding
        n = int(math.floor((self.f0_max - self.f0_min) / self.step + 1e-9))
        pts = np.round(self.f0_min + self.step * np.arange(n + 1), 12)
        return np.clip(pts, 0.0, 1.0)


def read_config(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{n}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _float(settings: dict, key: str, default: float) -> float:
    if key not in settings or settings[key] is None:
        return default
    try:
        return float(settings[key])
    except ValueError:
        raise UsageError(f"{key}: not a number: {settings[key]!r}") from None


def _int(settings: dict, key: str, default: int | None) -> int | None:
    if key not in settings or settings[key] is None:
        return default
    try:
        return int(settings[key])
    except ValueError:
        raise UsageError(f"{key}: not an integer: {settings[key]!r}") from None


def _settings(args) -> dict:
    """Config file values, overridden by any flags given on the command line."""
    settings = read_config(args.config) if args.config else {}
    for key in ("f0_min", "f0_max", "step", "f_thr", "trials", "seed", "out"):
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    return settings


def _seed(settings: dict) -> int:
    if settings.get("seed") is None and "MEPP_SEED" in os.environ:
        settings["seed"] = os.environ["MEPP_SEED"]
    return _int(settings, "seed", 0)


def _sweep_config(settings: dict) -> SweepConfig:
    return SweepConfig(
        _float(settings, "f0_min", 0.25),
        _float(settings, "f0_max", 1.0),
        _float(settings, "step", 0.01),
        settings.get("out"),
    )


def _emit(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc.strerror}") from exc


def sweep_csv(cfg: SweepConfig) -> str:
    rows = [SWEEP_HEADER]
    for f0 in cfg.grid():
        c = calc.symmetric_curves(float(f0))
        rows.append(",".join(fmt(v) for v in (c.F0, c.E_n, c.E_2to3, c.E_o, c.F_n, c.F_2, c.F_2to3)))
    return "\n".join(rows) + "\n"


def yield_csv(cfg: SweepConfig, policy: scheduler.YieldPolicy) -> tuple[str, list[scheduler.YieldReport]]:
    reports = scheduler.yield_ratio_curve(cfg.grid(), policy)
    rows = [YIELD_HEADER]
    for r in reports:
        rows.append(
            ",".join(
                [fmt(r.f0), fmt(r.y_normal), fmt(r.y_recycle), fmt(r.ratio), str(r.rounds_normal), str(r.rounds_pair), "|".join(r.flags)]
            )
        )
    return "\n".join(rows) + "\n", reports


def thresholds_csv(step: float) -> str:
    rows = [THRESHOLD_HEADER]
    n = int(math.floor(1 / step + 1e-9))
    for i in range(n + 1):
        for j in range(n + 1 - i):
            f1, f2 = round(i * step, 12), round(j * step, 12)
            try:
                t = fmt(calc.gain_threshold(f1, f2))
            except MeppError:
                t = "nan"
            rows.append(f"{fmt(f1)},{fmt(f2)},{t}")
    return "\n".join(rows) + "\n"


def cmd_sweep(args) -> int:
    cfg = _sweep_config(_settings(args))
    _emit(sweep_csv(cfg), cfg.out)
    return EXIT_OK


def cmd_yield(args) -> int:
    settings = _settings(args)
    cfg = _sweep_config(settings)
    try:
        policy = scheduler.YieldPolicy(f_thr=_float(settings, "f_thr", 0.95))
    except MeppError as exc:
        raise UsageError(str(exc)) from None
    text, reports = yield_csv(cfg, policy)
    _emit(text, cfg.out)
    cross = scheduler.ratio_crossover(reports, policy)
    msg = f"ratio=1 crossover: f0={cross:.4f}" if cross is not None else "ratio=1 crossover: none in range"
    print(msg, file=sys.stderr if cfg.out in (None, "-") else sys.stdout)
    return EXIT_OK


def cmd_thresholds(args) -> int:
    settings = _settings(args)
    step = _float(settings, "step", 0.05)
    if not step > 0:
        raise UsageError("step must be positive")
    _emit(thresholds_csv(step), settings.get("out"))
    return EXIT_OK


def cmd_verify(args) -> int:
    settings = _settings(args)
    trials = _int(settings, "trials", 100_000)
    seed = _seed(settings)
    if trials <= 0:
        raise UsageError("trials must be positive")
    t0 = time.perf_counter()
    results = verify.oracle_matrix(seed=seed) + verify.montecarlo_matrix(trials, seed)
    elapsed = time.perf_counter() - t0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.group:<10} {r.name:<32} metric={fmt(r.metric)} tol={fmt(r.tolerance)} {r.detail}".rstrip())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} passed in {elapsed:.1f} s (trials={trials}, seed={seed})")
    if settings.get("out"):
        _emit(verify.results_csv(results), settings["out"])
    if failed:
        for r in failed:
            print(f"failing case: {r.group}/{r.name}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


_BELL_NAMES = {"phi+", "phi-", "psi+", "psi-"}
_SHORT_RE = re.compile(r"^ghz(\d+):([+-])(\d+)$")


def parse_term(text: str) -> GhzLabel:
    """``ghz3:+1`` (sign and ensemble index), ``phi+`` etc., or ``GHZ[3;011;+]``."""
    t = text.strip()
    if t.lower() in _BELL_NAMES:
        return sim.BELL[t.lower()]
    m = _SHORT_RE.match(t.lower())
    if m:
        n, sign, idx = int(m[1]), m[2], int(m[3])
        labels = ensemble_labels(n, sign)
        if idx >= len(labels):
            raise UsageError(f"{t}: index out of range for N={n}")
        return labels[idx]
    try:
        return parse_label(t)
    except MeppError as exc:
        raise UsageError(f"cannot parse state term {t!r}: {exc}") from None


def parse_product(text: str) -> list[GhzLabel]:
    return [parse_term(part) for part in re.split(r"\s+x\s+", text.strip())]


def _product_state(labels: list[GhzLabel]) -> sim.PureState:
    return sim.kron(*(sim.make_ghz(lab.n_parties, lab) for lab in labels))


def parse_mixture(settings: dict) -> sim.WeightedMixture:
    """Mixture from ``state``, ``mixture`` or ``ensemble``/``ensemble2`` keys."""
    if "state" in settings:
        return sim.WeightedMixture([(1.0, _product_state(parse_product(settings["state"])))])
    if "mixture" in settings:
        terms = []
        # ";" also appears inside GHZ[...] labels, so split only outside brackets
        for chunk in re.split(r";(?![^\[]*\])", settings["mixture"]):
            if not chunk.strip():
                continue
            w, sep, body = chunk.partition(":")
            if not sep:
                raise UsageError(f"mixture term {chunk.strip()!r} needs 'weight: state'")
            try:
                weight = float(w)
            except ValueError:
                raise UsageError(f"bad mixture weight {w.strip()!r}") from None
            terms.append((weight, _product_state(parse_product(body))))
        if not terms:
            raise UsageError("empty mixture")
        return sim.WeightedMixture(terms).normalized()
    if "ensemble" in settings:
        first = _weights(settings["ensemble"])
        rho = _ensemble_mixture(first)
        second = _weights(settings["ensemble2"]) if "ensemble2" in settings else first
        return sim.product(rho, _ensemble_mixture(second))
    raise UsageError("simulate needs one of: state, mixture, ensemble")


def _weights(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"bad ensemble weights {text!r}") from None


def _ensemble_mixture(weights: list[float]) -> sim.WeightedMixture:
    n = len(weights).bit_length()
    if 1 << (n - 1) != len(weights):
        raise UsageError(f"{len(weights)} weights is not a power of two")
    return sim.ghz_mixture(n, weights)


def _dump_mixture(mixture: sim.WeightedMixture | None) -> list[str]:
    if mixture is None:
        return ["  (nothing kept)"]
    dist, off = sim.ghz_distribution(mixture)
    lines = [f"  {lab}\t{fmt(p)}" for lab, p in sorted(dist.items(), key=lambda kv: (-kv[1], str(kv[0]))) if p > sim.DUMP_CUTOFF]
    lines.append(f"  max_offdiag\t{fmt(off)}")
    merged: dict[bytes, list] = {}
    for w, state in mixture.terms:
        # remove the global phase so equal rays merge
        amps = state.amplitudes
        lead = amps[np.argmax(np.abs(amps) > 1e-9)]
        amps = amps * (abs(lead) / lead)
        key = (np.round(amps, 10) + 0.0).tobytes()  # +0.0 folds -0.0
        merged.setdefault(key, [0.0, sim.PureState(amps)])[0] += w
    for w, state in merged.values():
        lines.append(f"  state weight={fmt(w)}")
        lines.extend("    " + row for row in sim.dump_state(state).splitlines())
    return lines


def run_simulation(settings: dict) -> str:
    circuit = settings.get("circuit")
    if circuit is None:
        raise UsageError("simulate needs a circuit key")
    mixture = parse_mixture(settings)
    lines = [f"circuit {circuit}"]
    if circuit in ("normal_round", "pair_round"):
        fn = sim.normal_round_circuit if circuit == "normal_round" else sim.pair_round_circuit
        r = fn(mixture)
        lines.append(f"kept {fmt(r.kept_probability)}")
        for key, p in sorted(r.discard_log.items()):
            lines.append(f"discard {key} {fmt(p)}")
        lines.append("output")
        lines.extend(_dump_mixture(r.output))
    elif circuit == "distill":
        for pair, h in sim.distill_circuit(mixture).items():
            lines.append(f"harvest {pair} {fmt(h.probability)}")
            lines.extend(_dump_mixture(h.output))
    elif circuit == "link":
        parties = _link_parties(settings.get("parties", "AB,BC"))
        r = sim.link_circuit(mixture, parties)
        lines.append(f"probability {fmt(r.probability)}")
        lines.append("output")
        lines.extend(_dump_mixture(r.output))
    else:
        raise UsageError(f"unknown circuit {circuit!r}")
    return "\n".join(lines) + "\n"


def _link_parties(text: str) -> tuple[int, int, int]:
    pairs = [p.strip().upper() for p in text.split(",")]
    if len(pairs) != 2 or any(p not in PAIR_PARTIES for p in pairs):
        raise UsageError(f"parties must be two pair names like AB,BC; got {text!r}")
    try:
        return verify.link_parties(*pairs)
    except ValueError:
        raise UsageError(f"pairs {text!r} do not share exactly one party") from None


def cmd_simulate(args) -> int:
    settings = _settings(args)
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        settings[key.strip()] = value.strip()
    try:
        text = run_simulation(settings)
    except MeppError as exc:
        raise UsageError(str(exc)) from None
    _emit(text, settings.get("out"))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mepp", description="GHZ purification calculus, oracle and sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *flags):
        p.add_argument("--config", help="key = value config file; flags override it")
        p.add_argument("--out", help="output path (default: stdout)")
        for flag, kind in flags:
            p.add_argument(flag, type=kind)
        return p

    grid = (("--f0-min", float), ("--f0-max", float), ("--step", float))
    p = common(sub.add_parser("sweep", help="one-round efficiency and fidelity curves"), *grid)
    p.set_defaults(func=cmd_sweep)
    p = common(sub.add_parser("yield", help="normal vs recycling yields"), *grid, ("--f-thr", float))
    p.set_defaults(func=cmd_yield)
    p = common(sub.add_parser("verify", help="oracle and Monte Carlo verification"), ("--trials", int), ("--seed", int))
    p.set_defaults(func=cmd_verify)
    p = common(sub.add_parser("simulate", help="run one circuit on the exact simulator"))
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config entry (repeatable)")
    p.set_defaults(func=cmd_simulate)
    p = common(sub.add_parser("thresholds", help="gain threshold over an (f1, f2) grid"), ("--step", float))
    p.set_defaults(func=cmd_thresholds)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mepp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"mepp: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
