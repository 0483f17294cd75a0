"""
Information structure tests: feature compilation, extraction from observation
histories, grid-delay checks and measurability fuzzing
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from information.info_structure import (
    AgentInformation, InformationStructure, Signal, compile_information, extract_features,
    information_from_config,
)
from information.measurability import check_measurability
from model.problem_spec import TimeGrid
from utils.exceptions import DelayNotOnGrid, HistoryTooShort, SelfSignaling


def _two_agents(first: AgentInformation, second: AgentInformation = AgentInformation(recall='markov')):
    return InformationStructure((first, second))


@pytest.mark.unit
def test_perfect_recall_lists_every_past_time():
    """Own post with perfect recall at step 2 covers times 0, 1 and 2"""
    info = InformationStructure((AgentInformation(recall='perfect'),))
    fm = compile_information(info, TimeGrid(4, 1.0), (1,))
    assert fm.features(0, 2) == ((0, 0, 0), (0, 1, 0), (0, 2, 0))
    assert fm.is_nested(0)


@pytest.mark.unit
def test_delayed_signal_is_sorted_by_time():
    """Markov own post plus a one-step-late signal: the older signal comes first"""
    fm = compile_information(_two_agents(AgentInformation(signals=(Signal(1, 1),), recall='markov')),
                             TimeGrid(4, 1.0), (1, 1))
    assert fm.features(0, 3) == ((1, 2, 0), (0, 3, 0))
    assert fm.features(0, 0) == ((0, 0, 0),)


@pytest.mark.unit
def test_sliding_window_breaks_nesting():
    """A window of one past step drops time k-2 from step k onwards"""
    info = InformationStructure((AgentInformation(recall='window', window=1),))
    fm = compile_information(info, TimeGrid(4, 1.0), (1,))
    assert fm.non_nested_steps(0) == [2, 3, 4]
    assert not fm.is_nested(0)


@pytest.mark.unit
def test_markov_dimension_is_constant():
    """Markov features have the observation dimension at every step"""
    fm = compile_information(InformationStructure.markov(2), TimeGrid(5, 1.0), (2, 3))
    assert [fm.dim(0, k) for k in range(6)] == [2] * 6
    assert [fm.dim(1, k) for k in range(6)] == [3] * 6
    assert fm.max_dim(1) == 3


@pytest.mark.unit
def test_centralized_structure_is_nested():
    """Perfect recall of every post never forgets"""
    fm = compile_information(InformationStructure.centralized(3), TimeGrid(5, 1.0), (1, 1, 2))
    for agent in range(3):
        assert fm.is_nested(agent)
    assert fm.dim(0, 5) == 6 + 5 * 1 + 5 * 2


@pytest.mark.unit
def test_extract_features_markov_reads_current_observation():
    """Markov agent at step 2 of z = (1, 2, -1) sees [-1]"""
    fm = compile_information(InformationStructure.markov(1), TimeGrid(3, 1.0), (1,))
    history = [np.array([[1.0], [2.0], [-1.0]])]
    np.testing.assert_array_equal(extract_features(fm, history, 0, 2), [-1.0])


@pytest.mark.unit
def test_extract_features_orders_signal_before_own():
    """Own z = (1, 2, 3), signal z = (7, 8, 9) one step late: step 2 gives [8, 3]"""
    fm = compile_information(_two_agents(AgentInformation(signals=(Signal(1, 1),), recall='markov')),
                             TimeGrid(3, 1.0), (1, 1))
    history = [np.array([[1.0], [2.0], [3.0]]), np.array([[7.0], [8.0], [9.0]])]
    np.testing.assert_array_equal(extract_features(fm, history, 0, 2), [8.0, 3.0])


@pytest.mark.unit
def test_extract_features_on_ensembles():
    """(P, L, k) histories give a (P, dim) feature matrix"""
    fm = compile_information(InformationStructure((AgentInformation(recall='perfect'),)), TimeGrid(3, 1.0), (2,))
    history = [np.arange(2 * 4 * 2, dtype=float).reshape(2, 4, 2)]
    features = extract_features(fm, history, 0, 1)
    assert features.shape == (2, 4)
    np.testing.assert_array_equal(features[1], history[0][1, :2].ravel())


@pytest.mark.unit
def test_blind_agent_has_empty_features():
    """No own post and no signals gives a zero-length feature vector"""
    info = InformationStructure((AgentInformation(own=False, recall='perfect'),))
    fm = compile_information(info, TimeGrid(3, 1.0), (1,))
    assert fm.dim(0, 3) == 0
    assert extract_features(fm, [np.zeros((4, 1))], 0, 3).shape == (0,)


@pytest.mark.unit
def test_short_history_is_reported():
    """Step 3 with perfect recall needs four entries"""
    fm = compile_information(InformationStructure((AgentInformation(recall='perfect'),)), TimeGrid(4, 1.0), (1,))
    with pytest.raises(HistoryTooShort) as info:
        extract_features(fm, [np.zeros((2, 1))], 0, 3)
    assert info.value.needed == 4
    assert info.value.available == 2


@pytest.mark.unit
def test_delays_off_the_grid_are_rejected():
    """Half a step, and 0.03 on a 0.02 grid, both raise DelayNotOnGrid"""
    with pytest.raises(DelayNotOnGrid):
        compile_information(_two_agents(AgentInformation(signals=(Signal(1, 0.5),))), TimeGrid(4, 1.0), (1, 1))
    with pytest.raises(DelayNotOnGrid):
        compile_information(_two_agents(AgentInformation(signals=(Signal(1, delay_time=0.03),))),
                            TimeGrid(50, 1.0), (1, 1))


@pytest.mark.unit
def test_delay_time_on_the_grid_converts_to_steps():
    """0.04 on a 0.02 grid is a two-step delay"""
    fm = compile_information(_two_agents(AgentInformation(signals=(Signal(1, delay_time=0.04),), recall='markov')),
                             TimeGrid(50, 1.0), (1, 1))
    assert fm.features(0, 5) == ((1, 3, 0), (0, 5, 0))


@pytest.mark.unit
def test_self_signaling_is_rejected():
    """An agent cannot list its own post as a signal"""
    with pytest.raises(SelfSignaling):
        compile_information(_two_agents(AgentInformation(signals=(Signal(0, 1),))), TimeGrid(4, 1.0), (1, 1))


@pytest.mark.unit
def test_unknown_recall_mode():
    with pytest.raises(ValueError):
        AgentInformation(recall='forgetful')


@settings(max_examples=60, deadline=None)
@given(recall=st.sampled_from(['perfect', 'window', 'markov']), window=st.integers(0, 3),
       delay=st.integers(1, 4), steps=st.integers(1, 8))
def test_features_never_read_the_future(recall, window, delay, steps):
    """Own triples stay at times <= k and signal triples at times <= k - delay"""
    info = _two_agents(AgentInformation(signals=(Signal(1, delay),), recall=recall, window=window))
    fm = compile_information(info, TimeGrid(steps, 1.0), (1, 2))
    for k in range(steps + 1):
        for source, time, coord in fm.features(0, k):
            assert 0 <= time <= (k if source == 0 else k - delay)
        assert list(fm.features(0, k)) == sorted(fm.features(0, k), key=lambda s: (s[1], s[0], s[2]))


@pytest.mark.unit
def test_information_from_config():
    """Config blocks build signals and check the agent count"""
    block = {"agents": [{"recall": "markov", "signals": [{"from": 1, "delay": 2}]}, {"recall": "perfect"}]}
    info = information_from_config(block, 2)
    assert info.agents[0].signals == (Signal(1, 2),)
    assert info.agents[1].recall == 'perfect'
    assert information_from_config(None, 3) == InformationStructure.markov(3)
    with pytest.raises(ValueError):
        information_from_config(block, 3)


@pytest.mark.unit
def test_profile_policies_pass_measurability(toy1_spec, markov_map, make_policy):
    """A feature-bound policy ignores every unreferenced history entry"""
    grid = TimeGrid(10, 1.0)
    fm = markov_map(toy1_spec, grid)
    policy = make_policy(toy1_spec, fm, kind="affine", init=0.7)
    histories = [np.random.default_rng(1).normal(size=(16, 11, 1))]
    report = check_measurability(lambda h, k: policy.agent_action(0, k, h), fm, 0, histories)
    assert report.passed
    assert report.max_change == 0.0


@pytest.mark.unit
def test_peeking_policy_fails_measurability(toy1_spec, markov_map):
    """Reading the final observation is caught by fuzzing"""
    grid = TimeGrid(10, 1.0)
    fm = markov_map(toy1_spec, grid)
    histories = [np.random.default_rng(2).normal(size=(16, 11, 1))]
    report = check_measurability(lambda h, k: h[0][:, -1, 0], fm, 0, histories, steps=[0, 4])
    assert not report.passed
    assert report.max_change > 0.0


@pytest.mark.unit
def test_constant_policy_passes_measurability(toy1_spec, markov_map):
    grid = TimeGrid(5, 1.0)
    fm = markov_map(toy1_spec, grid)
    histories = [np.zeros((4, 6, 1))]
    assert check_measurability(lambda h, k: np.full(4, 0.3), fm, 0, histories).passed
