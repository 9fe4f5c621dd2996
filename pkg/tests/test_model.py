import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from decpg.domains import DOMAIN_NAMES, get_domain
from decpg.model import (
    MissingHistoryError,
    ModelError,
    PolicySet,
    SoftmaxPolicy,
    TabularPolicy,
    TimedPolicy,
    build_model,
    extend_history,
    history_timestep,
    joint_policy_prob,
    load_model,
    root_histories,
    save_model,
    score,
    uniform_policies,
    validate,
)
from lookup import action_index, observation_index


def tiny_model(**overrides):
    """Two-state single-agent model used to probe validation rules."""
    kwargs = dict(
        name="tiny",
        agents=1,
        states=["a", "b"],
        actions=[["go"]],
        observations=[["tick"]],
        start={"a": 1.0},
        transitions={("a", ("go",)): {"b": 1.0}, ("b", ("go",)): {"b": 1.0}},
        rewards={("a", ("go",)): 1.0},
        observations_fn={(("go",), "a"): {("tick",): 1.0}, (("go",), "b"): {("tick",): 1.0}},
        discount=0.5,
    )
    kwargs.update(overrides)
    return build_model(**kwargs)


class TestValidate:
    def test_bundled_models_are_valid(self):
        for name in DOMAIN_NAMES:
            assert validate(get_domain(name).model) == [], name

    def test_transition_row_sum_violation_is_reported(self):
        m = tiny_model()
        broken = dataclasses.replace(m, transition=m.transition * 0.5)
        problems = validate(broken)
        assert any("sums to" in p for p in problems)

    def test_discount_one_without_horizon_is_rejected(self):
        m = tiny_model()
        problems = validate(dataclasses.replace(m, discount=1.0))
        assert any("horizon" in p for p in problems)
        assert validate(dataclasses.replace(m, discount=1.0, horizon=3)) == []

    def test_builder_autofills_omitted_terminal_rows(self):
        m = tiny_model(
            terminal=["b"],
            transitions={("a", ("go",)): {"b": 1.0}},
        )
        assert validate(m) == []
        assert m.transition[1, 0, 1] == 1.0
        assert m.reward[1, 0] == 0.0

    def test_builder_overrides_terminal_transition_rows(self):
        m = tiny_model(
            terminal=["b"],
            transitions={("a", ("go",)): {"b": 1.0}, ("b", ("go",)): {"a": 1.0}},
        )
        assert m.transition[1, 0, 1] == 1.0

    def test_builder_rejects_terminal_reward(self):
        with pytest.raises(ModelError, match="nonzero reward"):
            tiny_model(terminal=["b"], rewards={("a", ("go",)): 1.0, ("b", ("go",)): 2.0})

    def test_non_absorbing_terminal_is_reported(self):
        m = tiny_model(terminal=["b"])
        t = m.transition.copy()
        t[1, 0] = [1.0, 0.0]
        assert any("absorbing" in p for p in validate(dataclasses.replace(m, transition=t)))

    def test_terminal_reward_is_reported(self):
        m = tiny_model(terminal=["b"])
        r = m.reward.copy()
        r[1, 0] = 2.0
        assert any("nonzero" in p for p in validate(dataclasses.replace(m, reward=r)))


class TestPolicies:
    def test_uniform_joint_prob_on_matrix_game(self, climb):
        pol = uniform_policies(climb.model)
        roots = root_histories(climb.model)
        for ja in climb.model.joint_actions:
            assert joint_policy_prob(pol, roots, ja) == pytest.approx(1.0 / 9.0)

    def test_reference_policy_listens_then_opens_opposite(self, dectiger):
        m = dectiger.model
        pol = dectiger.reference_policies
        listen = action_index(m, 0, "listen")
        hl = observation_index(m, 0, "hear-left")
        hr = observation_index(m, 1, "hear-right")
        # both agents listen with certainty while fewer than two actions done
        assert joint_policy_prob(pol, ((), ()), (listen, listen)) == pytest.approx(1.0)
        h0 = (listen, hl, listen, hl)  # agent 0 heard left twice
        h1 = (listen, hr, listen, hr)  # agent 1 heard right twice
        opp0 = action_index(m, 0, "open-right")
        opp1 = action_index(m, 1, "open-left")
        assert joint_policy_prob(pol, (h0, h1), (opp0, opp1)) == pytest.approx(1.0)

    def test_reference_policy_splits_on_tied_observations(self, dectiger):
        m = dectiger.model
        pol = dectiger.reference_policies
        listen = action_index(m, 0, "listen")
        hl = observation_index(m, 0, "hear-left")
        hr = observation_index(m, 0, "hear-right")
        dist = pol.dist(0, (listen, hl, listen, hr))
        assert dist[listen] == pytest.approx(0.0)
        assert dist[action_index(m, 0, "open-left")] == pytest.approx(0.5)
        assert dist[action_index(m, 0, "open-right")] == pytest.approx(0.5)

    def test_tabular_score_is_inverse_probability(self):
        p = TabularPolicy(2)
        p.ensure_row((), np.array([0.5, 0.5]))
        assert p.score_coords((), 0) == [(((), 0), pytest.approx(2.0))]

    def test_softmax_score_is_indicator_minus_distribution(self):
        p = SoftmaxPolicy(3)
        p.ensure_row((), np.zeros(3))
        coords = dict(p.score_coords((), 1))
        assert coords[((), 0)] == pytest.approx(-1.0 / 3.0)
        assert coords[((), 1)] == pytest.approx(2.0 / 3.0)
        assert coords[((), 2)] == pytest.approx(-1.0 / 3.0)

    @given(logits=st.lists(st.floats(-5, 5), min_size=2, max_size=5))
    @settings(deadline=None, max_examples=60)
    def test_softmax_score_has_zero_mean_under_the_row(self, logits):
        p = SoftmaxPolicy(len(logits))
        p.ensure_row((), np.array(logits))
        dist = p.dist(())
        total = np.zeros(len(logits))
        for a, pa in enumerate(dist):
            for (_h, b), v in p.score_coords((), a):
                total[b] += pa * v
        assert np.abs(total).max() < 1e-12

    @given(
        weights=st.lists(st.floats(0.05, 1.0), min_size=2, max_size=5),
    )
    @settings(deadline=None, max_examples=60)
    def test_tabular_score_averages_to_one_per_coordinate(self, weights):
        # the raw probability-table score 1/pi(a) puts mass 1 on every
        # coordinate in expectation: sum_a pi(a) * (1/pi(a)) e_a = (1, .., 1)
        row = np.array(weights) / np.sum(weights)
        p = TabularPolicy(len(row))
        p.ensure_row((), row)
        total = np.zeros(len(row))
        for a, pa in enumerate(row):
            for (_h, b), v in p.score_coords((), a):
                total[b] += pa * v
        assert np.abs(total - 1.0).max() < 1e-9

    def test_score_helper_delegates_to_agent_policy(self, climb):
        pol = uniform_policies(climb.model)
        direct = pol[1].score_coords((), 2)
        assert score(pol, 1, (), 2) == direct

    @given(
        rows=st.lists(
            st.lists(st.floats(0.05, 1.0), min_size=2, max_size=2),
            min_size=2,
            max_size=2,
        )
    )
    @settings(deadline=None, max_examples=40)
    def test_joint_prob_factorizes_over_agents(self, rows):
        policies = []
        for r in rows:
            arr = np.array(r) / np.sum(r)
            p = TabularPolicy(2)
            p.ensure_row((), arr)
            policies.append(p)
        ps = PolicySet(policies)
        for a0 in range(2):
            for a1 in range(2):
                expect = ps.dist(0, ())[a0] * ps.dist(1, ())[a1]
                assert joint_policy_prob(ps, ((), ()), (a0, a1)) == pytest.approx(expect)

    def test_missing_row_raises_without_default(self):
        p = TabularPolicy(2)
        with pytest.raises(MissingHistoryError):
            p.dist((0, 0))

    def test_uniform_default_row(self):
        p = TabularPolicy(3, default_row="uniform")
        assert np.allclose(p.dist((1, 0)), [1 / 3] * 3)

    def test_callable_default_row(self):
        p = TabularPolicy(2, default_row=lambda h: np.array([1.0, 0.0]))
        assert np.allclose(p.dist((0, 1)), [1.0, 0.0])

    def test_timed_policy_accepts_distribution_rule(self):
        p = TimedPolicy(2, lambda h: np.array([0.25, 0.75]))
        assert np.allclose(p.dist(()), [0.25, 0.75])
        assert not PolicySet([p]).gradient_bearing

    def test_policy_set_copy_is_independent(self, climb):
        pol = uniform_policies(climb.model)
        pol[0].ensure_row((), np.array([1 / 3, 1 / 3, 1 / 3]))
        dup = pol.copy()
        dup[0].rows[()][:] = [0.9, 0.05, 0.05]
        assert pol.dist(0, ())[0] == pytest.approx(1 / 3)


class TestHistories:
    def test_root_histories_one_empty_tuple_per_agent(self, climb):
        assert root_histories(climb.model) == ((), ())

    def test_root_histories_rejects_initial_observation_models(self, guess):
        with pytest.raises(ModelError):
            root_histories(guess.model)

    def test_timestep_counts_completed_actions(self):
        assert history_timestep(()) == 0
        assert history_timestep((0, 1)) == 1
        assert history_timestep((0, 1, 2, 0)) == 2

    def test_extend_appends_action_observation_pair(self):
        assert extend_history((), 2, 1) == (2, 1)
        assert extend_history((2, 1), 0, 0) == (2, 1, 0, 0)


class TestSerialization:
    @pytest.mark.parametrize("name", DOMAIN_NAMES)
    def test_json_round_trip_preserves_model(self, name, tmp_path):
        m = get_domain(name).model
        path = tmp_path / f"{name}.json"
        save_model(m, path)
        m2 = load_model(path)
        assert m2.name == m.name
        assert m2.state_names == m.state_names
        assert m2.action_names == m.action_names
        assert m2.observation_names == m.observation_names
        assert np.array_equal(m2.start, m.start)
        assert np.array_equal(m2.transition, m.transition)
        assert np.array_equal(m2.observation, m.observation)
        assert np.array_equal(m2.reward, m.reward)
        assert np.array_equal(m2.terminal, m.terminal)
        assert m2.discount == m.discount
        assert m2.horizon == m.horizon
        if m.has_initial_observation:
            assert np.array_equal(m2.initial_observation, m.initial_observation)
        else:
            assert m2.initial_observation is None

    def test_saved_file_is_plain_json(self, tmp_path, climb):
        path = tmp_path / "climb.json"
        save_model(climb.model, path)
        with open(path) as f:
            doc = json.load(f)
        assert doc["name"] == "climb"


class TestAgainstOracle:
    def test_uniform_policy_matches_oracle_joint_distribution(self, dectiger):
        m = dectiger.model
        pol = uniform_policies(m)
        probs = oracles.action_probabilities(m, pol, ())
        assert probs == pytest.approx([1.0 / 9.0] * 9)

    def test_reference_policy_matches_oracle_at_depth_two(self, dectiger):
        m = dectiger.model
        pol = dectiger.reference_policies
        listen = action_index(m, 0, "listen")
        ja_listen = m.joint_actions.index((listen, listen))
        for jo in range(len(m.joint_observations)):
            h = (ja_listen, jo)
            probs = oracles.action_probabilities(m, pol, h)
            assert probs[ja_listen] == pytest.approx(1.0)
