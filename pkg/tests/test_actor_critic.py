import dataclasses
import statistics

import numpy as np
import pytest

from decpg.actor_critic import (
    ALGORITHM_VARIANTS,
    CRITIC_OF_VARIANT,
    CriticModel,
    JointSoftmaxPolicy,
    TrainConfig,
    default_config,
    episode_joint_histories,
    evaluate_policies,
    greedy_policies,
    make_actors,
    sample_episode,
    td_advantages,
    train,
)
from decpg.model import build_model, uniform_policies
from decpg.values import (
    history_value_tables,
    individual_value_table,
    state_value_table,
)
from decpg.visitation import compute_visitation


def two_step_corridor():
    """Deterministic two-decision model with known values at every prefix."""
    return build_model(
        name="corridor",
        agents=1,
        states=["a", "b", "done"],
        actions=[["go"]],
        observations=[["tick"]],
        start={"a": 1.0},
        transitions={("a", ("go",)): {"b": 1.0}, ("b", ("go",)): {"done": 1.0}},
        rewards={("a", ("go",)): 1.0, ("b", ("go",)): 2.0},
        observations_fn={(("go",), "a"): {("tick",): 1.0}, (("go",), "b"): {("tick",): 1.0}},
        discount=0.5,
        terminal=["done"],
    )


class TestEpisodes:
    def test_one_shot_game_episode(self, climb):
        m = climb.model
        ep = sample_episode(m, uniform_policies(m), 0)
        assert ep.length == 1
        assert ep.rewards[0] in {11.0, -30.0, 0.0, 7.0, 6.0, 5.0}
        assert m.terminal[ep.states[-1]]

    def test_reference_play_opens_at_round_three(self, dectiger):
        ep = sample_episode(dectiger.model, dectiger.reference_policies, 5)
        assert ep.length == 3
        assert ep.rewards[:2] == [-2.0, -2.0]

    def test_terminal_start_gives_empty_episode(self):
        m = build_model(
            name="dead",
            agents=1,
            states=["done"],
            actions=[["go"]],
            observations=[["tick"]],
            start={"done": 1.0},
            transitions={},
            rewards={},
            observations_fn={},
            discount=0.9,
            terminal=["done"],
        )
        ep = sample_episode(m, uniform_policies(m), 0)
        assert ep.length == 0
        assert ep.total_return(0.9) == 0.0

    def test_max_len_truncates_and_flags(self, dectiger):
        m = dectiger.model
        ep = sample_episode(m, uniform_policies(m), 1, max_len=2)
        assert ep.length <= 2
        if not m.terminal[ep.states[-1]]:
            assert ep.truncated

    def test_same_seed_same_episode(self, dectiger):
        m = dectiger.model
        pol = uniform_policies(m)
        a = sample_episode(m, pol, 42)
        b = sample_episode(m, pol, 42)
        assert a.states == b.states
        assert a.joint_actions == b.joint_actions
        assert a.joint_observations == b.joint_observations

    def test_joint_histories_grow_by_action_observation_pairs(self, dectiger):
        ep = sample_episode(dectiger.model, dectiger.reference_policies, 9)
        hs = episode_joint_histories(dectiger.model, ep)
        assert len(hs) == ep.length
        assert [len(h) for h in hs] == [2 * t for t in range(ep.length)]


class TestCriticModel:
    def test_unknown_variant_is_rejected(self):
        with pytest.raises(ValueError, match="variant"):
            CriticModel("nonsense")

    def test_individual_critic_keeps_one_table_per_agent(self):
        c = CriticModel("individual", agents=3)
        c.bump((), 1.0, agent=2)
        assert c.value((), agent=2) == 1.0
        assert c.value((), agent=0) == 0.0

    def test_shared_critic_ignores_agent_argument(self):
        c = CriticModel("state", agents=2)
        c.bump(0, 2.5, agent=1)
        assert c.value(0, agent=0) == 2.5

    def test_copy_is_independent(self):
        c = CriticModel("joint-history")
        c.bump((), 1.0)
        d = c.copy()
        d.bump((), 1.0)
        assert c.value(()) == 1.0 and d.value(()) == 2.0

    def test_variant_map_covers_all_algorithms(self):
        assert set(CRITIC_OF_VARIANT) == set(ALGORITHM_VARIANTS)
        assert CRITIC_OF_VARIANT["iac"] == "individual"
        assert CRITIC_OF_VARIANT["iacc-s"] == "state"
        assert CRITIC_OF_VARIANT["jac"] == "joint-history"


class TestTdAdvantages:
    def test_zero_critic_gives_raw_rewards(self, dectiger):
        ep = sample_episode(dectiger.model, dectiger.reference_policies, 3)
        critic = CriticModel("joint-history")
        deltas = td_advantages(dectiger.model, ep, critic)
        assert deltas == pytest.approx(ep.rewards)

    def test_exact_critic_zeroes_every_error(self):
        m = two_step_corridor()
        ep = sample_episode(m, uniform_policies(m), 0)
        assert ep.length == 2
        critic = CriticModel("joint-history")
        critic.bump((), 2.0)  # V(start) = 1 + 0.5 * 2
        critic.bump(episode_joint_histories(m, ep)[1], 2.0)  # V(second decision) = 2
        deltas = td_advantages(m, ep, critic)
        assert deltas == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_single_step_error_is_reward_minus_baseline(self, climb):
        m = climb.model
        ep = sample_episode(m, uniform_policies(m), 4)
        critic = CriticModel("individual", agents=2)
        critic.bump((), 1.25, agent=0)
        deltas = td_advantages(m, ep, critic, agent=0)
        assert deltas == pytest.approx([ep.rewards[0] - 1.25])

    def test_state_keyed_errors_use_state_values(self):
        m = two_step_corridor()
        ep = sample_episode(m, uniform_policies(m), 0)
        critic = CriticModel("state")
        critic.bump(m.state_index("a"), 2.0)
        critic.bump(m.state_index("b"), 2.0)
        deltas = td_advantages(m, ep, critic)
        assert deltas == pytest.approx([0.0, 0.0], abs=1e-12)


class TestEvaluation:
    def test_small_model_is_evaluated_exactly(self, climb):
        value, method = evaluate_policies(climb.model, uniform_policies(climb.model), TrainConfig())
        assert method == "exact"
        assert value == pytest.approx(-31 / 9, abs=1e-9)

    def test_huge_tree_falls_back_to_rollouts(self, dectiger):
        cfg = TrainConfig(eval_episodes=200)
        value, method = evaluate_policies(dectiger.model, uniform_policies(dectiger.model), cfg)
        assert method == "mean-return"
        assert value < -20.0  # uniform play keeps opening doors at random

    def test_greedy_policies_argmax_each_row(self, climb):
        m = climb.model
        pol = uniform_policies(m, kind="softmax")
        pol[0].ensure_row((), np.array([0.0, 2.0, 1.0]))
        pol[1].ensure_row((), np.array([3.0, 0.0, 1.0]))
        greedy = greedy_policies(m, pol)
        assert np.argmax(greedy.dist(0, ())) == 1
        assert greedy.dist(0, ())[1] == pytest.approx(1.0)
        assert np.argmax(greedy.dist(1, ())) == 0


class TestTrainLoop:
    def test_defaults_come_from_the_frozen_table(self):
        cfg = default_config("climb")
        assert (cfg.actor_lr, cfg.critic_lr, cfg.episodes, cfg.eval_every) == (0.05, 1.0, 100, 10)
        jac = default_config("climb", "jac")
        assert (jac.critic_lr, jac.episodes, jac.eval_every) == (0.5, 6000, 200)
        assert default_config("unlisted") == TrainConfig()

    def test_make_actors_shapes(self, climb):
        m = climb.model
        for variant in ALGORITHM_VARIANTS:
            actors = make_actors(m, variant)
            if variant == "jac":
                assert isinstance(actors, JointSoftmaxPolicy)
            else:
                assert actors.gradient_bearing
                assert len(actors.policies) == m.agents

    def test_same_config_same_curve(self, climb):
        m = climb.model
        cfg = TrainConfig(episodes=40, eval_every=10, seed=5, record_trace=True, eval_episodes=20)
        a = train(m, "iac", cfg)
        b = train(m, "iac", cfg)
        assert a.returns == b.returns
        assert a.trace == b.trace

    def test_trace_rows_have_the_documented_shape(self, climb):
        m = climb.model
        cfg = TrainConfig(episodes=5, record_trace=True, eval_episodes=10)
        curve = train(m, "iac", cfg)
        assert len(curve.trace) == 5 * m.agents  # one decision per episode per agent
        for episode, t, agent, action, delta, baseline in curve.trace:
            assert 0 <= episode < 5 and t == 0 and agent in (0, 1)
            assert 0 <= action < 3
            assert np.isfinite(delta) and np.isfinite(baseline)

    def test_eval_points_are_spaced_by_eval_every(self, climb):
        curve = train(climb.model, "iac", TrainConfig(episodes=40, eval_every=10, eval_episodes=20))
        assert [p.episode for p in curve.eval_points] == [0, 10, 20, 30, 40]
        assert all(p.method == "exact" for p in curve.eval_points)

    def test_decentralized_training_lands_near_the_shadow_equilibrium(self, climb):
        cfg = dataclasses.replace(default_config("climb", "iac"), seed=2)
        curve = train(climb.model, "iac", cfg)
        assert 3.0 <= curve.final_return <= 7.0
        assert curve.final_return < 10.0

    def test_joint_controller_often_finds_the_optimum(self, climb):
        cfg = dataclasses.replace(default_config("climb", "jac"), seed=1, eval_episodes=50)
        curve = train(climb.model, "jac", cfg)
        assert curve.final_greedy_return == pytest.approx(11.0)
        assert curve.final_greedy_method == "exact"


class TestCriticConsistency:
    """With the actor frozen, an annealed tabular critic is a running average
    and must land on the exact value function of the frozen policy."""

    def test_individual_critic_on_the_climb_game(self, climb):
        m = climb.model
        cfg = TrainConfig(
            actor_lr=0.0, critic_lr=1.0, critic_decay=1.0,
            episodes=150_000, seed=3, eval_every=0, eval_episodes=10,
        )
        curve = train(m, "iac", cfg)
        pol = uniform_policies(m)
        vis = compute_visitation(m, pol)
        for agent in range(2):
            v_exact = individual_value_table(m, pol, vis, agent).v[()]
            assert curve.critic.value((), agent=agent) == pytest.approx(v_exact, abs=0.05)

    @pytest.mark.parametrize("variant", ["iacc-h", "iacc-s"])
    def test_shared_critics_on_the_breakfast_game(self, morning, variant):
        m = morning.model
        cfg = TrainConfig(
            actor_lr=0.0, critic_lr=1.0, critic_decay=1.0,
            episodes=30_000, seed=3, eval_every=0, eval_episodes=10,
        )
        curve = train(m, variant, cfg)
        pol = uniform_policies(m)
        vis = compute_visitation(m, pol)
        if variant == "iacc-h":
            qj, _ = history_value_tables(m, pol, vis)
            v_exact = qj.v[vis.interner.lookup(())]
            assert curve.critic.value(()) == pytest.approx(v_exact, abs=0.05)
        else:
            qs = state_value_table(m, pol, vis)
            for s in range(m.n_states):
                if m.terminal[s] or m.start[s] <= 0.0:
                    continue
                assert curve.critic.value(int(s)) == pytest.approx(qs.v[s], abs=0.05)


class TestAggregateBehaviour:
    def test_decentralized_matching_game_stays_flat(self, guess):
        # with no channel to the partner's observation, every decentralized
        # variant hovers around zero return
        m = guess.model
        cfg = default_config("guess", "iac")
        finals = [
            train(m, "iac", dataclasses.replace(cfg, seed=s)).final_return
            for s in range(10)
        ]
        assert abs(statistics.mean(finals)) <= 1.0
