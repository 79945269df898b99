import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mepp import montecarlo as mc
from mepp.errors import ScenarioError

ASYM = (0.4, 0.3, 0.2, 0.1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 50), st.integers(1, 40), st.integers(1, 40))
def test_chunked_stream_matches_serial(seed, stream, a, b):
    whole = mc.trial_uniforms(seed, stream, 0, a + b)
    parts = np.vstack([mc.trial_uniforms(seed, stream, 0, a), mc.trial_uniforms(seed, stream, a, b)])
    assert np.array_equal(whole, parts)


def test_streams_differ():
    assert not np.array_equal(mc.trial_uniforms(1, 0, 0, 4), mc.trial_uniforms(1, 1, 0, 4))


def test_bad_seed():
    with pytest.raises(ScenarioError):
        mc.trial_uniforms(-1, 0, 0, 1)


def test_config_validation():
    with pytest.raises(ScenarioError):
        mc.TrialConfig("teleport", 10, 0)
    with pytest.raises(ScenarioError):
        mc.TrialConfig("link", 0, 0)
    with pytest.raises(ScenarioError):
        mc.sample_scenario(mc.TrialConfig("link", 10, 0, {"first": (1.0, 0.0)}))


def test_same_seed_same_summary():
    cfg = mc.TrialConfig("normal_round", 2000, 11, {"probs": ASYM})
    a, b = mc.sample_scenario(cfg), mc.sample_scenario(cfg)
    assert {k: s.estimate for k, s in a.stats.items()} == {k: s.estimate for k, s in b.stats.items()}


@pytest.mark.parametrize(
    "scenario, params",
    [
        ("normal_round", {"probs": ASYM}),
        ("normal_round", {"probs": (0.4, 0.1, 0.1, 0.1, 0.1, 0.1, 0.05, 0.05), "n_parties": 4}),
        ("distill", {"probs": ASYM}),
        ("pair_round", {"f0": 0.7, "pair": "AC"}),
        ("link", {"first": (0.6, 0.4), "second": (0.9, 0.1), "first_pair": "AC", "second_pair": "BC"}),
    ],
)
def test_scenarios_agree_with_calculus(scenario, params):
    s = mc.sample_scenario(mc.TrialConfig(scenario, 20_000, 3, params))
    cmp = mc.compare_to_calculus(s)
    assert cmp.passed, cmp.z_scores


def test_pure_input_is_exact():
    s = mc.sample_scenario(mc.TrialConfig("normal_round", 500, 0, {"probs": (0.0, 0.0, 1.0, 0.0)}))
    assert s.kept_rate == 1.0
    assert s.max_abs_deviation == 0.0


def test_wrong_prediction_is_caught():
    s = mc.sample_scenario(mc.TrialConfig("pair_round", 20_000, 5, {"f0": 0.6}))
    assert not mc.compare_to_calculus(s, {"kept": 0.5}).passed


def test_full_pipeline_small():
    s = mc.sample_full_pipeline(0.5, trials=20_000, seed=2)
    assert set(s.stats) >= {"y_normal", "y_recycle"}
    assert mc.compare_to_calculus(s).passed


def test_statistic_z():
    st_ = mc.Statistic.binomial_rate("x", 30, 100, 0.25)
    assert st_.z() == pytest.approx(0.05 / np.sqrt(0.25 * 0.75 / 100))
    exact = mc.Statistic.binomial_rate("y", 0, 10, 0.0)
    assert exact.z() == 0.0
    assert mc.Statistic.binomial_rate("z", 1, 10, 0.0).z() == float("inf")
