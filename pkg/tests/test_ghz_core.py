import pytest
from hypothesis import given
from hypothesis import strategies as st

from mepp.errors import InvalidPatternError
from mepp.ghz_core import (
    MINUS,
    PLUS,
    ErrorPattern,
    GhzLabel,
    all_labels,
    apply_flip,
    canonicalize,
    ensemble_index,
    ensemble_labels,
    ensemble_order,
    label_from_error,
    pair_name,
    parse_label,
)


@st.composite
def labels(draw, max_n=6):
    n = draw(st.integers(2, max_n))
    mask = draw(st.integers(0, (1 << (n - 1)) - 1))
    return GhzLabel(n, mask, draw(st.sampled_from([PLUS, MINUS])))


def test_three_party_order_is_no_error_then_a_b_c():
    assert ensemble_order(3) == (0b000, 0b011, 0b010, 0b001)
    flips = [lab.flipped for lab in ensemble_labels(3)]
    assert flips == [frozenset(), {0}, {1}, {2}]


def test_text_form():
    assert str(GhzLabel(3, 0b011, PLUS)) == "GHZ[3;011;+]"
    assert parse_label("GHZ[3;100;+]") == GhzLabel(3, 0b011)


@given(labels())
def test_text_round_trip(lab):
    assert parse_label(str(lab)) == lab


def test_canonicalize_phase():
    assert canonicalize(3, 0b111, PLUS) == (GhzLabel(3, 0), 1)
    assert canonicalize(3, 0b111, MINUS) == (GhzLabel(3, 0, MINUS), -1)
    assert canonicalize(3, 0b001, MINUS) == (GhzLabel(3, 1, MINUS), 1)


@given(labels(), st.data())
def test_flip_is_involution(lab, data):
    party = data.draw(st.integers(0, lab.n_parties - 1))
    assert apply_flip(apply_flip(lab, party), party) == lab


@given(labels())
def test_flipping_everyone_is_identity(lab):
    out = lab
    for p in range(lab.n_parties):
        out = apply_flip(out, p)
    assert out == lab


@given(labels())
def test_error_pattern_round_trip(lab):
    assert label_from_error(ErrorPattern.from_label(lab), lab.sign) == lab


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_all_labels_complete(n):
    labs = all_labels(n)
    assert len(labs) == len(set(labs)) == 1 << n
    assert [ensemble_index(lab) for lab in ensemble_labels(n)] == list(range(1 << (n - 1)))


@pytest.mark.parametrize(
    "args",
    [(1, 0, PLUS), (3, 4, PLUS), (3, -1, PLUS), (3, 0, "x")],
)
def test_invalid_labels(args):
    with pytest.raises(InvalidPatternError):
        GhzLabel(*args)


@pytest.mark.parametrize("text", ["GHZ[3;01;+]", "GHZ(3;011;+)", "GHZ[3;012;+]"])
def test_bad_text(text):
    with pytest.raises(InvalidPatternError):
        parse_label(text)


def test_error_pattern_validates_parties():
    with pytest.raises(InvalidPatternError):
        ErrorPattern(3, [3])


def test_pair_name():
    assert pair_name([2, 0]) == "AC"
