"""Episode-driven actor-critic training with learned tabular V-critics.

This is the practical counterpart of the exact machinery in ``gradients``:
instead of closed-form critic tables recomputed per iterate, a tabular V
estimate is bootstrapped from sampled episodes with one-step TD errors

    delta_t = r_t + discount * V(key at t+1) - V(key at t)

and each agent ascends  sum_t discount^t * delta_t * grad log pi_i(a_it; h_it).

Five trainer variants differ only in the critic's conditioning key and in
who owns the actor:

- ``iac``      per-agent critic V_i(private history), per-agent actors
- ``iacc-h``   shared critic V(joint history), per-agent actors
- ``iacc-s``   shared critic V(state), per-agent actors
- ``iacc-hs``  shared critic V(joint history, state), per-agent actors
- ``jac``      shared critic V(joint history), one centralized actor over
               joint actions (an upper-bound baseline, not decentralized)

Actors are softmax and tabular only, critics tabular only: the point of the
laboratory is comparing the update structure against the exact theory, not
function approximation.  The discount^t factor in the actor update is kept
exactly as in the defining estimator even though many implementations drop
it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import (
    DecPomdpModel,
    PolicySet,
    SoftmaxPolicy,
    TabularPolicy,
    UnsupportedParameterizationError,
)
from .values import (
    HISTORY_STATE,
    INDIVIDUAL,
    JOINT_HISTORY,
    STATE,
    expected_return,
)
from .visitation import (
    BudgetExceededError,
    compute_visitation,
    joint_action_probs,
    max_depth_for,
    project_history,
)
from .gradients import Episode

ALGORITHM_VARIANTS = ("iac", "iacc-h", "iacc-s", "iacc-hs", "jac")

#: critic conditioning key used by each algorithm variant
CRITIC_OF_VARIANT = {
    "iac": INDIVIDUAL,
    "iacc-h": JOINT_HISTORY,
    "iacc-s": STATE,
    "iacc-hs": HISTORY_STATE,
    "jac": JOINT_HISTORY,
}


class CriticModel:
    """Tabular V estimate keyed by the variant's conditioning information.

    Keys are created lazily on first update and start at 0, which doubles as
    the value of any terminal continuation.  The ``individual`` variant keeps
    one table per agent (keys are private histories); the shared variants
    keep a single table keyed by joint history, state index, or
    (joint history, state) pairs.
    """

    def __init__(self, variant: str, agents: int = 1):
        if variant not in (INDIVIDUAL, JOINT_HISTORY, STATE, HISTORY_STATE):
            raise ValueError(f"unknown critic variant {variant!r}")
        self.variant = variant
        self.agents = agents
        n_tables = agents if variant == INDIVIDUAL else 1
        self.tables = [dict() for _ in range(n_tables)]

    def _table(self, agent: int) -> dict:
        return self.tables[agent if self.variant == INDIVIDUAL else 0]

    def value(self, key, agent: int = 0) -> float:
        return self._table(agent).get(key, 0.0)

    def bump(self, key, amount: float, agent: int = 0) -> None:
        table = self._table(agent)
        table[key] = table.get(key, 0.0) + amount

    def copy(self) -> "CriticModel":
        out = CriticModel(self.variant, self.agents)
        out.tables = [dict(t) for t in self.tables]
        return out


class JointSoftmaxPolicy:
    """Centralized softmax policy over joint actions, keyed by joint history.

    Exposes ``joint_action_probs(model, h)`` so every engine that consumes a
    product policy set through that hook (visitation, exact values, expected
    return) works unchanged with the centralized controller.
    """

    kind = "softmax"

    def __init__(self, n_joint_actions: int):
        self.n = n_joint_actions
        self.rows: dict = {}

    def _logits(self, h: tuple) -> np.ndarray:
        row = self.rows.get(h)
        if row is None:
            row = self.rows[h] = np.zeros(self.n)
        return row

    def joint_dist(self, h: tuple) -> np.ndarray:
        z = self._logits(h)
        e = np.exp(z - z.max())
        return e / e.sum()

    def joint_action_probs(self, model: DecPomdpModel, h: tuple) -> np.ndarray:
        return self.joint_dist(h)

    def score_coords(self, h: tuple, ja: int):
        """Score-function coordinates for the played joint action."""
        pi = self.joint_dist(h)
        return [((h, b), (1.0 if b == ja else 0.0) - pi[b]) for b in range(self.n)]

    def copy(self) -> "JointSoftmaxPolicy":
        out = JointSoftmaxPolicy(self.n)
        out.rows = {h: row.copy() for h, row in self.rows.items()}
        return out


class _GreedyJoint:
    """Deterministic argmax wrapper around any joint-action policy."""

    def __init__(self, base, n_joint_actions: int):
        self.base = base
        self.n = n_joint_actions

    def joint_action_probs(self, model: DecPomdpModel, h: tuple) -> np.ndarray:
        probs = joint_action_probs(model, self.base, h)
        out = np.zeros(self.n)
        out[int(np.argmax(probs))] = 1.0
        return out


def greedy_policies(model: DecPomdpModel, policies):
    """Deterministic argmax version of a learned policy (product or joint)."""
    if hasattr(policies, "joint_action_probs"):
        return _GreedyJoint(policies, len(model.joint_actions))

    def make_row(p):
        def row(h):
            d = p.dist(h)
            out = np.zeros(len(d))
            out[int(np.argmax(d))] = 1.0
            return out

        return row

    return PolicySet(
        [TabularPolicy(model.n_actions[i], default_row=make_row(policies[i]))
         for i in range(model.agents)]
    )


# ---------------------------------------------------------------------------
# episode sampling and TD errors
# ---------------------------------------------------------------------------


def sample_episode(
    model: DecPomdpModel,
    policies,
    seed,
    *,
    max_len: int | None = None,
    snapshot=None,
) -> Episode:
    """Simulate one on-policy episode, deterministic in ``seed``.

    Works for product policy sets and centralized joint-action policies
    alike (actions are drawn from the joint distribution).  The episode ends
    at a terminal state, at the declared horizon, or at ``max_len``; ending
    at ``max_len`` before the model's own end sets the truncation flag.
    """
    rng = np.random.default_rng(seed)
    depth = max_depth_for(model) if max_len is None else max_len
    JO = len(model.joint_observations)
    JA = len(model.joint_actions)
    s = int(rng.choice(model.n_states, p=model.start))
    init_obs = None
    h: tuple = ()
    if model.has_initial_observation:
        init_obs = int(rng.choice(JO, p=model.initial_observation[s]))
        h = (init_obs,)
    states = [s]
    joint_actions: list = []
    joint_observations: list = []
    rewards: list = []
    for _t in range(depth):
        if model.terminal[s]:
            break
        ja = int(rng.choice(JA, p=joint_action_probs(model, policies, h)))
        joint_actions.append(ja)
        rewards.append(float(model.reward[s, ja]))
        s2 = int(rng.choice(model.n_states, p=model.transition[s, ja]))
        states.append(s2)
        s = s2
        if model.terminal[s2]:
            break
        jo = int(rng.choice(JO, p=model.observation[ja, s2]))
        joint_observations.append(jo)
        h = h + (ja, jo)
    truncated = (
        not model.terminal[s]
        and len(joint_actions) == depth
        and model.horizon is not None
        and len(joint_actions) < model.horizon
    )
    return Episode(
        states,
        joint_actions,
        joint_observations,
        rewards,
        init_obs,
        seed=seed,
        truncated=truncated,
        snapshot=snapshot,
    )


def episode_joint_histories(model: DecPomdpModel, episode: Episode) -> list:
    """Joint-history tuples h_0 .. h_{T-1} visited at each decision point."""
    h: tuple = () if episode.initial_observation is None else (
        episode.initial_observation,
    )
    out = [h]
    for t in range(episode.length - 1):
        h = h + (episode.joint_actions[t], episode.joint_observations[t])
        out.append(h)
    return out[: episode.length]


def _step_keys(model: DecPomdpModel, episode: Episode, variant: str, agent: int):
    """Critic keys at each decision point of the episode."""
    histories = episode_joint_histories(model, episode)
    if variant == INDIVIDUAL:
        return [project_history(model, h, agent) for h in histories]
    if variant == JOINT_HISTORY:
        return histories
    if variant == STATE:
        return episode.states[: episode.length]
    if variant == HISTORY_STATE:
        return [(h, episode.states[t]) for t, h in enumerate(histories)]
    raise ValueError(f"unknown critic variant {variant!r}")


def td_advantages(
    model: DecPomdpModel,
    episode: Episode,
    critic: CriticModel,
    *,
    discount: float | None = None,
    agent: int = 0,
) -> list:
    """One-step TD errors delta_t under the critic's conditioning key.

    The bootstrap value beyond the last recorded decision point is 0: that
    covers terminal continuations exactly and treats a horizon or truncation
    stop as value-free.  For an individual critic the errors are per-agent
    (pass ``agent``); shared critics ignore it.
    """
    gamma = model.discount if discount is None else discount
    keys = _step_keys(model, episode, critic.variant, agent)
    out = []
    for t in range(episode.length):
        v_now = critic.value(keys[t], agent)
        v_next = critic.value(keys[t + 1], agent) if t + 1 < episode.length else 0.0
        out.append(episode.rewards[t] + gamma * v_next - v_now)
    return out


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Hyperparameters for one training run.  ``eval_every = 0`` evaluates
    only at the start and end.  ``critic_decay`` anneals the critic step as
    critic_lr / (1 + critic_decay * episode), which with the actor frozen
    makes the tabular critic a Robbins-Monro average."""

    actor_lr: float = 0.05
    critic_lr: float = 0.1
    episodes: int = 1000
    seed: int = 0
    eval_every: int = 0
    max_len: int | None = None
    eval_episodes: int = 1000
    critic_decay: float = 0.0
    record_trace: bool = False  # keep per-step (episode, t, agent, action, delta)


@dataclass
class EvalPoint:
    episode: int  # number of training episodes completed at this evaluation
    value: float
    method: str  # "exact" or "mean-return"


@dataclass
class TrainCurve:
    variant: str
    config: TrainConfig
    eval_points: list
    policies: object  # final actor(s): PolicySet or JointSoftmaxPolicy
    critic: CriticModel
    aborted_at: int | None = None
    final_greedy_return: float | None = None
    final_greedy_method: str | None = None
    #: optional per-step update log: (episode, t, agent, action, delta) rows,
    #: populated when the config asked for record_trace
    trace: list | None = None

    @property
    def returns(self) -> list:
        return [p.value for p in self.eval_points]

    @property
    def final_return(self) -> float:
        return self.eval_points[-1].value


def _mc_return(model, policies, config: TrainConfig, tag: int) -> float:
    total = 0.0
    for k in range(config.eval_episodes):
        ep = sample_episode(
            model, policies, (config.seed, 0x5EED, tag, k), max_len=config.max_len
        )
        total += ep.total_return(model.discount)
    return total / config.eval_episodes


def evaluate_policies(model, policies, config: TrainConfig, tag: int = 0):
    """Exact expected return when the joint policy is enumerable within the
    node budget, otherwise the mean return over seeded evaluation episodes;
    returns (value, method) with the method recorded, never guessed."""
    try:
        vis = compute_visitation(model, policies)
        return expected_return(model, vis), "exact"
    except BudgetExceededError:
        return _mc_return(model, policies, config, tag), "mean-return"


def make_actors(model: DecPomdpModel, variant: str):
    """Fresh uniform softmax actor(s) for the given algorithm variant."""
    if variant == "jac":
        return JointSoftmaxPolicy(len(model.joint_actions))
    return PolicySet(
        [SoftmaxPolicy(model.n_actions[i], default_row="uniform")
         for i in range(model.agents)]
    )


def train(
    model: DecPomdpModel,
    variant: str,
    config: TrainConfig,
    *,
    policies=None,
    critic: CriticModel | None = None,
) -> TrainCurve:
    """Run one actor-critic training loop and return its learning curve.

    Per episode: sample on-policy, compute every TD error and every agent's
    actor step from the same pre-update critic and policy snapshot, then
    apply the actor steps and the critic step together (synchronous
    updates).  The critic moves by critic_lr * (1/T) * delta_t at each
    visited key; each actor by actor_lr * discount^t * delta_t * score.

    Deterministic in the config seed.  Non-finite parameters abort the run,
    recording the episode index.
    """
    if variant not in ALGORITHM_VARIANTS:
        raise ValueError(
            f"unknown variant {variant!r}; expected one of {ALGORITHM_VARIANTS}"
        )
    if policies is None:
        policies = make_actors(model, variant)
    joint_actor = hasattr(policies, "joint_dist")
    if variant == "jac" and not joint_actor:
        raise UnsupportedParameterizationError(
            "jac trains a centralized joint-action policy"
        )
    if not joint_actor:
        for p in policies.policies:
            if p.kind != "softmax":
                raise UnsupportedParameterizationError(
                    "actor-critic training requires softmax actors"
                )
    if critic is None:
        critic = CriticModel(CRITIC_OF_VARIANT[variant], model.agents)

    gamma = model.discount
    eval_points: list = []
    aborted_at = None
    trace: list | None = [] if config.record_trace else None

    def record(episodes_done: int, tag: int):
        value, method = evaluate_policies(model, policies, config, tag)
        eval_points.append(EvalPoint(episodes_done, value, method))

    record(0, 0)
    for e in range(config.episodes):
        episode = sample_episode(
            model, policies, (config.seed, e), max_len=config.max_len, snapshot=e
        )
        T = episode.length
        critic_lr = config.critic_lr / (1.0 + config.critic_decay * e)

        # every delta and every actor step below reads the pre-update critic
        # and policy snapshot; nothing is applied until all are computed
        actor_steps: dict = {}
        critic_steps: list = []
        trace_rows: list = []
        if T > 0:
            if variant == "jac":
                deltas = td_advantages(model, episode, critic)
                histories = episode_joint_histories(model, episode)
                if trace is not None:
                    vkeys = _step_keys(model, episode, critic.variant, 0)
                    for t in range(T):
                        trace_rows.append((
                            e, t, 0, episode.joint_actions[t], deltas[t],
                            critic.value(vkeys[t]),
                        ))
                for t in range(T):
                    base = config.actor_lr * gamma**t * deltas[t]
                    for (hh, b), sc in policies.score_coords(
                        histories[t], episode.joint_actions[t]
                    ):
                        key = (0, hh, b)
                        actor_steps[key] = actor_steps.get(key, 0.0) + base * sc
                keys = _step_keys(model, episode, critic.variant, 0)
                for t in range(T):
                    critic_steps.append((keys[t], critic_lr * deltas[t] / T, 0))
            else:
                per_agent_deltas = {}
                if critic.variant == INDIVIDUAL:
                    for i in range(model.agents):
                        per_agent_deltas[i] = td_advantages(
                            model, episode, critic, agent=i
                        )
                else:
                    shared = td_advantages(model, episode, critic)
                    for i in range(model.agents):
                        per_agent_deltas[i] = shared
                histories = episode_joint_histories(model, episode)
                if trace is not None:
                    for i in range(model.agents):
                        per_key = critic.variant == INDIVIDUAL
                        vkeys = _step_keys(
                            model, episode, critic.variant, i if per_key else 0
                        )
                        for t in range(T):
                            trace_rows.append((
                                e, t, i,
                                model.joint_actions[episode.joint_actions[t]][i],
                                per_agent_deltas[i][t],
                                critic.value(vkeys[t], i if per_key else 0),
                            ))
                for i in range(model.agents):
                    deltas = per_agent_deltas[i]
                    for t in range(T):
                        a_i = model.joint_actions[episode.joint_actions[t]][i]
                        h_i = project_history(model, histories[t], i)
                        base = config.actor_lr * gamma**t * deltas[t]
                        for (hh, b), sc in policies[i].score_coords(h_i, a_i):
                            key = (i, hh, b)
                            actor_steps[key] = actor_steps.get(key, 0.0) + base * sc
                if critic.variant == INDIVIDUAL:
                    for i in range(model.agents):
                        keys = _step_keys(model, episode, critic.variant, i)
                        deltas = per_agent_deltas[i]
                        for t in range(T):
                            critic_steps.append(
                                (keys[t], critic_lr * deltas[t] / T, i)
                            )
                else:
                    keys = _step_keys(model, episode, critic.variant, 0)
                    deltas = per_agent_deltas[0]
                    for t in range(T):
                        critic_steps.append((keys[t], critic_lr * deltas[t] / T, 0))

        finite = all(math.isfinite(v) for v in actor_steps.values()) and all(
            math.isfinite(amount) for _, amount, _ in critic_steps
        )
        if not finite:
            aborted_at = e
            break
        if trace is not None:
            trace.extend(trace_rows)
        if variant == "jac":
            for (_i, hh, b), v in actor_steps.items():
                policies._logits(hh)[b] += v
        else:
            for (i, hh, b), v in actor_steps.items():
                policies[i].dist(hh)  # materialize the row before writing
                policies[i].rows[hh][b] += v
        for key, amount, agent in critic_steps:
            critic.bump(key, amount, agent)

        done = e + 1
        if config.eval_every > 0 and done % config.eval_every == 0:
            record(done, done)
    if not eval_points or eval_points[-1].episode != (
        config.episodes if aborted_at is None else aborted_at
    ):
        record(config.episodes if aborted_at is None else aborted_at, -1)

    greedy_value = greedy_method = None
    if aborted_at is None:
        greedy = greedy_policies(model, policies)
        greedy_value, greedy_method = evaluate_policies(model, greedy, config, -2)
    return TrainCurve(
        variant=variant,
        config=config,
        eval_points=eval_points,
        policies=policies,
        critic=critic,
        aborted_at=aborted_at,
        final_greedy_return=greedy_value,
        final_greedy_method=greedy_method,
        trace=trace,
    )


# ---------------------------------------------------------------------------
# frozen per-domain defaults
# ---------------------------------------------------------------------------

#: Tuned once and frozen.  The tuning note lives in the package README; the
#: values are data, loaded from the packaged defaults file so external runs
#: and the command-line tool agree on them.


def default_config(domain: str, variant: str | None = None) -> TrainConfig:
    """Frozen default hyperparameters for a bundled domain (and optionally a
    specific algorithm variant).  Unknown domains get the dataclass
    defaults."""
    import json
    from importlib import resources

    try:
        raw = json.loads(
            resources.files("decpg").joinpath("data/train_defaults.json").read_text()
        )
    except FileNotFoundError:
        raw = {}
    spec = dict(raw.get(domain, {}).get("default", {}))
    if variant is not None:
        spec.update(raw.get(domain, {}).get(variant, {}))
    spec.pop("note", None)
    return replace(TrainConfig(), **spec)
