import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mepp import exact_sim as sim
from mepp.errors import CapacityError, ContractError, NotACrossItemError
from mepp.ghz_core import GhzLabel, all_labels, ensemble_labels

A0, A1, A2, A3 = ensemble_labels(3)


def ghz(label):
    return sim.make_ghz(label.n_parties, label)


def pure(*labels):
    return sim.WeightedMixture([(1.0, sim.kron(*(ghz(lab) for lab in labels)))])


def random_state(seed, n):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return sim.PureState(v / np.linalg.norm(v))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_ghz_basis_is_orthonormal(n):
    states = [ghz(lab) for lab in all_labels(n)]
    gram = np.array([[a.inner(b) for b in states] for a in states])
    assert np.allclose(gram, np.eye(1 << n), atol=1e-12)


def test_hadamard_squares_to_identity():
    s = random_state(1, 3)
    for q in range(3):
        assert np.allclose(sim.apply_h(sim.apply_h(s, q), q).amplitudes, s.amplitudes)


def test_x_flips_ghz_label():
    s = sim.apply_x(ghz(A0), 0)
    assert sim.identify_ghz(s) == A1


def test_z_maps_plus_to_minus():
    s = sim.apply_z(ghz(A0), 2)
    assert sim.identify_ghz(s) == GhzLabel(3, 0, "-")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5), st.data())
def test_pcd_conserves_probability(seed, n, data):
    qa = data.draw(st.integers(0, n - 1))
    qb = data.draw(st.integers(0, n - 1).filter(lambda q: q != qa))
    s = random_state(seed, n)
    even, odd = sim.pcd(s, qa, qb)
    assert even.probability + odd.probability == pytest.approx(1.0, abs=1e-12)
    assert even.charge_reading == 1 and odd.charge_reading == 0
    for o in (even, odd):
        assert o.post_state.norm() == pytest.approx(1.0, abs=1e-12)


def test_pcd_keeps_coherence_inside_subspace():
    # |00> + |11> is entirely even; the superposition must survive untouched
    s = ghz(GhzLabel(2, 0))
    even, odd = sim.pcd(s, 0, 1)
    assert even.probability == pytest.approx(1.0)
    assert odd.post_state is None
    assert abs(even.post_state.inner(s)) == pytest.approx(1.0)


def test_pcd_rejects_same_qubit():
    with pytest.raises(ContractError):
        sim.pcd(ghz(A0), 1, 1)


def test_measure_z_branches():
    up, down = sim.measure_z(ghz(A0), 0)
    assert up.probability == pytest.approx(0.5) and down.probability == pytest.approx(0.5)
    assert np.allclose(up.post_state.amplitudes, sim.basis_state("000").amplitudes)


def test_drop_and_permute():
    s = sim.kron(sim.basis_state("1"), ghz(GhzLabel(2, 1)))
    dropped = sim.drop_qubits(s, [0])
    assert sim.identify_ghz(dropped) == GhzLabel(2, 1)
    with pytest.raises(ContractError):
        sim.drop_qubits(s, [1])
    p = sim.permute_qubits(sim.basis_state("100"), [1, 2, 0])
    assert np.allclose(p.amplitudes, sim.basis_state("001").amplitudes)


def test_capacity_limit():
    with pytest.raises(CapacityError):
        sim.basis_state("0" * (sim.MAX_QUBITS + 1))


def test_is_product():
    assert sim.is_product(sim.kron(ghz(A0), ghz(A1)), 3)
    assert not sim.is_product(ghz(A0), 1)


def test_normal_round_identical_labels_kept():
    r = sim.normal_round_circuit(pure(A2, A2))
    assert r.kept_probability == pytest.approx(1.0)
    dist, off = sim.ghz_distribution(r.output)
    assert dist[A2] == pytest.approx(1.0) and off < 1e-12


def test_normal_round_mismatch_discarded():
    r = sim.normal_round_circuit(pure(A0, A1))
    assert r.kept_probability == pytest.approx(0.0, abs=1e-14)
    assert r.output is None
    assert sum(r.discard_log.values()) == pytest.approx(1.0)


def test_normal_round_symmetric_half():
    rho = sim.ghz_mixture(3, [0.5, 1 / 6, 1 / 6, 1 / 6])
    r = sim.normal_round_circuit(sim.product(rho, rho))
    # kept = 0.25 + 3/36, fidelity = 0.25 / kept
    assert r.kept_probability == pytest.approx(1 / 3, abs=1e-12)
    dist, off = sim.ghz_distribution(r.output)
    assert dist[A0] == pytest.approx(0.75, abs=1e-12)
    assert off < 1e-12


def test_normal_round_rejects_entangled_input():
    s = random_state(3, 6)
    with pytest.raises(ContractError):
        sim.normal_round_circuit(sim.WeightedMixture([(1.0, s)]))


def test_distill_harvest():
    rho = sim.ghz_mixture(3, [0.4, 0.3, 0.2, 0.1])
    h = sim.distill_circuit(sim.product(rho, rho))
    phi = sim.BELL["phi+"]
    # weights 2*F_a*F_b + 2*F_c*F_d per pair, fidelity is the first share
    expected = {"AB": (0.20, 0.08 / 0.20), "AC": (0.22, 0.16 / 0.22), "BC": (0.28, 0.24 / 0.28)}
    for pair, (w, f0) in expected.items():
        assert h[pair].probability == pytest.approx(w, abs=1e-12)
        dist, off = sim.ghz_distribution(h[pair].output)
        assert dist[phi] == pytest.approx(f0, abs=1e-12)
        assert off < 1e-12


def test_distill_needs_cross_item():
    with pytest.raises(NotACrossItemError):
        sim.distill_circuit(pure(A1, A1))


@pytest.mark.parametrize(
    "first, second, parties",
    [(0.9, 0.8, (0, 1, 2)), (0.7, 0.6, (1, 0, 2)), (0.75, 0.55, (0, 2, 1))],
)
def test_link_is_deterministic_and_correct(first, second, parties):
    a = sim.ghz_mixture(2, [first, 1 - first])
    b = sim.ghz_mixture(2, [second, 1 - second])
    r = sim.link_circuit(sim.product(a, b), parties)
    assert r.probability == pytest.approx(1.0, abs=1e-12)
    dist, off = sim.ghz_distribution(r.output)
    assert dist[A0] == pytest.approx(first * second, abs=1e-12)
    assert off < 1e-12


def test_link_error_placement():
    # AB carries a flip on A, BC none: the linked state has the flip on A
    r = sim.link_circuit(pure(sim.BELL["psi+"], sim.BELL["phi+"]))
    dist, _ = sim.ghz_distribution(r.output)
    assert dist[A1] == pytest.approx(1.0)


def test_pair_round_mismatch():
    r = sim.pair_round_circuit(pure(sim.BELL["phi+"], sim.BELL["psi+"]))
    assert r.kept_probability == pytest.approx(0.0, abs=1e-14)


def test_dump_state_format():
    text = sim.dump_state(ghz(A0))
    assert text.splitlines() == ["000\t0.707107\t0", "111\t0.707107\t0"]
