"""Exact state-vector oracle for small spin registers.

Qubit 0 is the most significant bit of the amplitude index, so a register
``A1 B1 C1 A2 B2 C2`` is indexed exactly like the ket ``|a1 b1 c1 a2 b2 c2>``
(0 = spin up, 1 = spin down).  Mixtures are kept as weighted lists of pure
states.

The protocol circuits are written as a sequence of *stages*.  A stage maps a
:class:`Path` (one measurement history) to its children with conditional
probabilities; :func:`build_tree` expands a pure input into the full branch
tree.  Exact evaluation sums over the leaves, Monte Carlo walks the same tree
by sampling.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import CapacityError, ContractError, NotACrossItemError
from .ghz_core import (
    MINUS,
    PLUS,
    GhzLabel,
    all_labels,
    ensemble_labels,
    ensemble_order,
    pair_name,
)

MAX_QUBITS = 14
NORM_TOL = 1e-12
# Branches whose probability falls below this are treated as impossible.
ZERO_PROB = 1e-14
DUMP_CUTOFF = 1e-14

_SQRT1_2 = 1 / np.sqrt(2)
_H = np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT1_2
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        size = amps.size
        if size < 2 or size & (size - 1):
            raise ContractError(f"amplitude vector length {size} is not a power of two")
        if size > 1 << MAX_QUBITS:
            raise CapacityError(f"register exceeds {MAX_QUBITS} qubits")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def inner(self, other: "PureState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_qubits)


def basis_state(bits: str) -> PureState:
    """Computational basis state from a bit string, e.g. ``"010"``."""
    n = len(bits)
    _check_capacity(n)
    amps = np.zeros(1 << n, dtype=complex)
    amps[int(bits, 2)] = 1.0
    return PureState(amps)


def _check_capacity(n: int):
    if n > MAX_QUBITS:
        raise CapacityError(f"{n} qubits requested, limit is {MAX_QUBITS}")


def make_ghz(n: int, label: GhzLabel) -> PureState:
    """``(|pattern> +/- |complement>)/sqrt(2)``, canonical amplitude +1/sqrt(2)."""
    _check_capacity(n)
    if label.n_parties != n:
        raise ContractError(f"label is for {label.n_parties} parties, register has {n}")
    amps = np.zeros(1 << n, dtype=complex)
    amps[label.mask] = _SQRT1_2
    amps[label.mask ^ ((1 << n) - 1)] = _SQRT1_2 if label.sign == PLUS else -_SQRT1_2
    return PureState(amps)


def kron(*states: PureState) -> PureState:
    amps = states[0].amplitudes
    for s in states[1:]:
        amps = np.kron(amps, s.amplitudes)
    return PureState(amps)


def _check_qubit(state: PureState, qubit: int):
    if not 0 <= qubit < state.n_qubits:
        raise ContractError(f"qubit {qubit} out of range for {state.n_qubits}-qubit register")


def apply_gate(state: PureState, matrix: np.ndarray, qubit: int) -> PureState:
    _check_qubit(state, qubit)
    t = np.moveaxis(state.tensor(), qubit, 0)
    t = np.tensordot(matrix, t, axes=([1], [0]))
    return PureState(np.moveaxis(t, 0, qubit).reshape(-1))


def apply_h(state: PureState, qubit: int) -> PureState:
    return apply_gate(state, _H, qubit)


def apply_x(state: PureState, qubit: int) -> PureState:
    return apply_gate(state, _X, qubit)


def apply_z(state: PureState, qubit: int) -> PureState:
    return apply_gate(state, _Z, qubit)


class Parity(enum.Enum):
    EVEN = "E"
    ODD = "O"


@dataclass(frozen=True)
class PcdOutcome:
    """One branch of a parity-check detection.

    ``post_state`` is ``None`` when the branch is impossible.
    """

    parity: Parity
    probability: float
    post_state: PureState | None

    @property
    def charge_reading(self) -> int:
        # The detector merges occupations 0 and 2 into a single reading 0.
        return 1 if self.parity is Parity.EVEN else 0


def _project(state: PureState, keep: np.ndarray) -> tuple[float, PureState | None]:
    amps = np.where(keep, state.amplitudes, 0)
    p = float(np.vdot(amps, amps).real)
    if p < ZERO_PROB:
        return 0.0, None
    return p, PureState(amps / np.sqrt(p))


@lru_cache(maxsize=None)
def _bit_table(n: int, qubit: int) -> np.ndarray:
    idx = np.arange(1 << n)
    table = (idx >> (n - 1 - qubit)) & 1
    table.setflags(write=False)
    return table


def pcd(state: PureState, qa: int, qb: int) -> tuple[PcdOutcome, PcdOutcome]:
    """Parity-check detection on qubits ``qa`` and ``qb``.

    Projects onto equal spins (even parity, charge reading 1) or opposite
    spins (odd parity, reading 0) without touching coherences inside either
    subspace.
    """
    _check_qubit(state, qa)
    _check_qubit(state, qb)
    if qa == qb:
        raise ContractError("parity check needs two distinct qubits")
    n = state.n_qubits
    same = _bit_table(n, qa) == _bit_table(n, qb)
    p_even, s_even = _project(state, same)
    p_odd, s_odd = _project(state, ~same)
    return PcdOutcome(Parity.EVEN, p_even, s_even), PcdOutcome(Parity.ODD, p_odd, s_odd)


@dataclass(frozen=True)
class ZOutcome:
    outcome: int  # 0 = up, 1 = down
    probability: float
    post_state: PureState | None


def measure_z(state: PureState, qubit: int) -> list[ZOutcome]:
    """Projective spin measurement along z; the qubit stays in the register."""
    _check_qubit(state, qubit)
    bits = _bit_table(state.n_qubits, qubit)
    out = []
    for v in (0, 1):
        p, post = _project(state, bits == v)
        out.append(ZOutcome(v, p, post))
    return out


def drop_qubits(state: PureState, qubits: Iterable[int]) -> PureState:
    """Remove qubits that sit in a definite computational basis value."""
    qubits = sorted(set(qubits))
    t = state.tensor()
    index: list = [slice(None)] * state.n_qubits
    for q in qubits:
        _check_qubit(state, q)
        weights = np.sum(np.abs(np.moveaxis(t, q, 0)) ** 2, axis=tuple(range(1, t.ndim)))
        value = int(np.argmax(weights))
        if weights[1 - value] > ZERO_PROB:
            raise ContractError(f"qubit {q} is not in a definite basis state")
        index[q] = value
    return PureState(t[tuple(index)].reshape(-1))


def permute_qubits(state: PureState, order: Sequence[int]) -> PureState:
    """New register whose qubit ``k`` is old qubit ``order[k]``."""
    if sorted(order) != list(range(state.n_qubits)):
        raise ContractError(f"{order} is not a permutation of the register")
    return PureState(np.transpose(state.tensor(), order).reshape(-1))


def is_product(state: PureState, split: int, tol: float = 1e-9) -> bool:
    """True when the state factorizes between qubits ``[0, split)`` and the rest."""
    m = state.amplitudes.reshape(1 << split, -1)
    sv = np.linalg.svd(m, compute_uv=False)
    return sv.size < 2 or sv[1] < tol


@dataclass
class WeightedMixture:
    terms: list[tuple[float, PureState]] = field(default_factory=list)

    def __post_init__(self):
        ns = {s.n_qubits for _, s in self.terms}
        if len(ns) > 1:
            raise ContractError(f"mixture terms have differing register sizes {sorted(ns)}")
        if any(w < 0 for w, _ in self.terms):
            raise ContractError("mixture weights must be non-negative")

    @property
    def n_qubits(self) -> int:
        if not self.terms:
            raise ContractError("empty mixture")
        return self.terms[0][1].n_qubits

    @property
    def total_weight(self) -> float:
        return float(sum(w for w, _ in self.terms))

    def normalized(self) -> "WeightedMixture":
        total = self.total_weight
        if total <= 0:
            raise ContractError("cannot normalize a mixture of zero weight")
        return WeightedMixture([(w / total, s) for w, s in self.terms])


def ghz_mixture(n: int, weights: Sequence[float] | Mapping[GhzLabel, float]) -> WeightedMixture:
    """GHZ-diagonal mixture; a sequence is read in plus-sector ensemble order."""
    if isinstance(weights, Mapping):
        items = list(weights.items())
    else:
        items = list(zip(ensemble_labels(n), weights))
    return WeightedMixture([(float(w), make_ghz(n, lab)) for lab, w in items if w > 0])


def product(first: WeightedMixture, second: WeightedMixture) -> WeightedMixture:
    """Mixture of the product state ``first (x) second``."""
    return WeightedMixture(
        [(w1 * w2, kron(s1, s2)) for w1, s1 in first.terms for w2, s2 in second.terms]
    )


def ghz_amplitudes(state: PureState) -> np.ndarray:
    """Overlaps ``<L|psi>`` for every label in :func:`mepp.ghz_core.all_labels` order."""
    n = state.n_qubits
    masks = np.array(ensemble_order(n))
    comp = masks ^ ((1 << n) - 1)
    a, b = state.amplitudes[masks], state.amplitudes[comp]
    return np.concatenate([(a + b) * _SQRT1_2, (a - b) * _SQRT1_2])


def ghz_density(mixture: WeightedMixture) -> np.ndarray:
    """Density matrix in the GHZ basis (rows/cols in ``all_labels`` order)."""
    c = np.array([ghz_amplitudes(s) for _, s in mixture.terms])
    w = np.array([w for w, _ in mixture.terms])
    return (c.T * w) @ c.conj()


def ghz_distribution(mixture: WeightedMixture) -> tuple[dict[GhzLabel, float], float]:
    """Diagonal of :func:`ghz_density` and the largest off-diagonal magnitude."""
    rho = ghz_density(mixture)
    diag = np.real(np.diag(rho))
    off = np.abs(rho - np.diag(np.diag(rho)))
    labels = all_labels(mixture.n_qubits)
    return {lab: float(p) for lab, p in zip(labels, diag)}, float(off.max(initial=0.0))


def identify_ghz(state: PureState, tol: float = 1e-10) -> GhzLabel:
    """The GHZ basis label of a state that is (up to phase) a GHZ basis state."""
    c = np.abs(ghz_amplitudes(state)) ** 2
    k = int(np.argmax(c))
    if abs(c[k] - 1) > tol:
        raise ContractError("state is not a GHZ basis state")
    return all_labels(state.n_qubits)[k]


def dump_state(state: PureState) -> str:
    """``bitstring TAB re TAB im`` per line, tiny amplitudes omitted."""
    n = state.n_qubits
    lines = []
    for i, a in enumerate(state.amplitudes):
        if abs(a) >= DUMP_CUTOFF:
            lines.append(f"{i:0{n}b}\t{a.real:.6g}\t{a.imag:.6g}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Branch trees


@dataclass(frozen=True)
class Path:
    """One measurement history: the current pure state plus classical record."""

    state: PureState
    kept: bool = True
    record: Mapping = field(default_factory=dict)

    def evolve(self, state: PureState | None = None, kept: bool | None = None, **record) -> "Path":
        return replace(
            self,
            state=self.state if state is None else state,
            kept=self.kept if kept is None else kept,
            record={**self.record, **record},
        )


Stage = Callable[[Path], list[tuple[float, Path]]]


@dataclass
class Node:
    """Branch point of a circuit; leaves have no branches and carry a final path."""

    path: Path
    branches: list[tuple[float, "Node"]] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.branches


def build_tree(stages: Sequence[Stage], path: Path) -> Node:
    i = 0
    while i < len(stages) and path.kept:
        children = stages[i](path)
        i += 1
        if len(children) == 1:
            path = children[0][1]
            continue
        return Node(path, [(p, build_tree(stages[i:], child)) for p, child in children])
    return Node(path)


def iter_leaves(node: Node, weight: float = 1.0) -> Iterator[tuple[float, Path]]:
    if node.is_leaf:
        yield weight, node.path
        return
    for p, child in node.branches:
        yield from iter_leaves(child, weight * p)


def _stage_pcd(qa: int, qb: int) -> Stage:
    def run(path):
        return [
            (o.probability, path.evolve(o.post_state, parities=path.record.get("parities", "") + o.parity.value))
            for o in pcd(path.state, qa, qb)
            if o.post_state is not None
        ]

    return run


def _stage_measure(k: int) -> Stage:
    """Measure the ``k``-th qubit listed in ``record['measure']``."""

    def run(path):
        q = path.record["measure"][k]
        return [
            (o.probability, path.evolve(o.post_state, outcomes=path.record.get("outcomes", ()) + (o.outcome,)))
            for o in measure_z(path.state, q)
            if o.post_state is not None
        ]

    return run


def _stage_hadamards(path: Path) -> list[tuple[float, Path]]:
    state = path.state
    for q in path.record["measure"]:
        state = apply_h(state, q)
    return [(1.0, path.evolve(state))]


def _stage_phase_fix(path: Path) -> list[tuple[float, Path]]:
    # An odd number of down outcomes leaves a relative minus sign between the
    # two complementary kets; a Z on any surviving qubit removes it.
    if sum(path.record["outcomes"]) % 2:
        return [(1.0, path.evolve(apply_z(path.state, path.record["fix_qubit"])))]
    return [(1.0, path)]


def _stage_drop(path: Path) -> list[tuple[float, Path]]:
    state = drop_qubits(path.state, path.record["measure"])
    order = path.record.get("output_order")
    if order is not None:
        state = permute_qubits(state, order)
    return [(1.0, path.evolve(state))]


def _tail(n_measured: int) -> list[Stage]:
    return [_stage_hadamards, *(_stage_measure(k) for k in range(n_measured)), _stage_phase_fix, _stage_drop]


def _select_uniform_parity(n: int) -> Stage:
    def run(path):
        parities = path.record["parities"]
        if len(set(parities)) != 1:
            return [(1.0, path.evolve(kept=False))]
        state = path.state
        if parities[0] == Parity.ODD.value:
            for q in range(n, 2 * n):
                state = apply_x(state, q)
        return [(1.0, path.evolve(state, measure=tuple(range(n, 2 * n)), fix_qubit=0))]

    return run


def normal_round_stages(n: int) -> list[Stage]:
    """Register ``X1..Z1 X2..Z2``: parity checks per party, keep uniform parity,
    flip the second copy on odd, then Hadamard, measure and phase-fix it."""
    return [*(_stage_pcd(p, n + p) for p in range(n)), _select_uniform_parity(n), *_tail(n)]


def _select_cross_route(path: Path) -> list[tuple[float, Path]]:
    parities = path.record["parities"]
    n = len(parities)
    odd_one = [p for p in range(n) if parities.count(parities[p]) == 1]
    if len(set(parities)) == 1 or len(odd_one) != 1:
        return [(1.0, path.evolve(kept=False))]
    q = odd_one[0]
    keep = tuple(p for p in range(n) if p != q)
    measure = (q, n + q, *(n + p for p in keep))
    return [(1.0, path.evolve(measure=measure, fix_qubit=keep[0], pair=pair_name(keep)))]


def distill_stages() -> list[Stage]:
    """Three-party cross-item distillation.

    The party whose parity differs from the other two carries the error; it
    measures both its electrons, the others measure their second electron,
    all after a Hadamard, leaving the remaining two parties entangled.
    """
    return [*(_stage_pcd(p, 3 + p) for p in range(3)), _select_cross_route, *_tail(4)]


def _link_route(path: Path) -> list[tuple[float, Path]]:
    state = path.state
    if path.record["parities"] == Parity.ODD.value:
        state = apply_x(state, 3)
    return [(1.0, path.evolve(state, measure=(2,), fix_qubit=0))]


def link_stages(parties: tuple[int, int, int] = (0, 1, 2)) -> list[Stage]:
    """Register ``(outer1, shared, shared', outer2)``; ``parties`` gives the party
    index of outer1, shared and outer2 and fixes the output qubit order."""
    o1, s, o2 = parties
    if sorted(parties) != [0, 1, 2]:
        raise ContractError(f"link parties must be a permutation of (0, 1, 2), got {parties}")
    remaining = {o1: 0, s: 1, o2: 2}
    order = tuple(remaining[p] for p in range(3))

    def route(path):
        return [(1.0, c.evolve(output_order=order)) for _, c in _link_route(path)]

    return [_stage_pcd(1, 2), route, *_tail(1)]


_STAGE_BUILDERS: dict[str, Callable[..., list[Stage]]] = {
    "normal_round": normal_round_stages,
    "distill": distill_stages,
    "link": link_stages,
}


@lru_cache(maxsize=4096)
def _cached_tree(circuit: str, args: tuple, amps: bytes) -> Node:
    state = PureState(np.frombuffer(amps, dtype=complex))
    return build_tree(_STAGE_BUILDERS[circuit](*args), Path(state))


def circuit_tree(circuit: str, state: PureState, *args) -> Node:
    """Branch tree of ``circuit`` on a pure input (memoized on the amplitudes)."""
    if circuit not in _STAGE_BUILDERS:
        raise ContractError(f"unknown circuit {circuit!r}")
    return _cached_tree(circuit, tuple(args), state.amplitudes.tobytes())


def clear_caches():
    _cached_tree.cache_clear()


def _run(circuit: str, mixture: WeightedMixture, *args) -> Iterator[tuple[float, Path]]:
    for w, s in mixture.terms:
        for p, leaf in iter_leaves(circuit_tree(circuit, s, *args)):
            yield w * p, leaf


def _check_product_input(mixture: WeightedMixture, n_qubits: int, split: int):
    if mixture.n_qubits != n_qubits:
        raise ContractError(f"expected a {n_qubits}-qubit register, got {mixture.n_qubits}")
    for _, s in mixture.terms:
        if not is_product(s, split):
            raise ContractError("input term is not a product of the two subsystems")


@dataclass
class RoundResult:
    kept_probability: float
    output: WeightedMixture | None
    discard_log: dict[str, float] = field(default_factory=dict)


def normal_round_circuit(mixture: WeightedMixture) -> RoundResult:
    """Run one purification round on a product of two N-party systems.

    ``output`` is the normalized N-qubit mixture on the first copy, or ``None``
    if nothing is kept.  ``discard_log`` maps each rejected parity pattern
    (``E``/``O`` per party) to its probability.
    """
    n2 = mixture.n_qubits
    if n2 % 2 or n2 < 4:
        raise ContractError(f"normal round needs an even register of at least 4 qubits, got {n2}")
    _check_product_input(mixture, n2, n2 // 2)
    kept: list[tuple[float, PureState]] = []
    discarded: dict[str, float] = {}
    for w, leaf in _run("normal_round", mixture, n2 // 2):
        if leaf.kept:
            kept.append((w, leaf.state))
        else:
            key = leaf.record["parities"]
            discarded[key] = discarded.get(key, 0.0) + w
    out = WeightedMixture(kept)
    total = out.total_weight
    return RoundResult(total, out.normalized() if total > ZERO_PROB else None, discarded)


def pair_round_circuit(mixture: WeightedMixture) -> RoundResult:
    """Two-party recurrence round on ``A1 B1 A2 B2``."""
    if mixture.n_qubits != 4:
        raise ContractError(f"pair round needs 4 qubits, got {mixture.n_qubits}")
    return normal_round_circuit(mixture)


@dataclass
class Harvest:
    pair: str
    probability: float
    output: WeightedMixture | None


def distill_circuit(mixture: WeightedMixture) -> dict[str, Harvest]:
    """Harvest two-party pairs from the cross-combination branches.

    Probabilities are absolute with respect to the input mixture; for a full
    ``rho (x) rho`` input they add up to the cross-item probability.
    Raises :class:`NotACrossItemError` if no branch has mismatched parities.
    """
    _check_product_input(mixture, 6, 3)
    buckets: dict[str, list[tuple[float, PureState]]] = {p: [] for p in ("AB", "AC", "BC")}
    for w, leaf in _run("distill", mixture):
        if leaf.kept:
            buckets[leaf.record["pair"]].append((w, leaf.state))
    if all(sum(w for w, _ in terms) <= ZERO_PROB for terms in buckets.values()):
        raise NotACrossItemError("input has no cross-combination branch")
    out = {}
    for pair, terms in buckets.items():
        m = WeightedMixture(terms)
        total = m.total_weight
        out[pair] = Harvest(pair, total, m.normalized() if total > ZERO_PROB else None)
    return out


@dataclass
class LinkResult:
    probability: float
    output: WeightedMixture


def link_circuit(mixture: WeightedMixture, parties: tuple[int, int, int] = (0, 1, 2)) -> LinkResult:
    """Fuse two overlapping pairs into a three-party state.

    The register is ``(outer1, shared, shared', outer2)``; the output qubit
    ``k`` belongs to party ``k``.  All branches are corrected, so the
    probability is 1 for any normalized input.
    """
    _check_product_input(mixture, 4, 2)
    terms = [(w, leaf.state) for w, leaf in _run("link", mixture, tuple(parties)) if leaf.kept]
    out = WeightedMixture(terms)
    return LinkResult(out.total_weight, out.normalized())


BELL = {
    "phi+": GhzLabel(2, 0, PLUS),
    "phi-": GhzLabel(2, 0, MINUS),
    "psi+": GhzLabel(2, 1, PLUS),
    "psi-": GhzLabel(2, 1, MINUS),
}
