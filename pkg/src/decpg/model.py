"""Core data model: finite Dec-POMDPs, histories, policies, and scores.

A model is the tuple (agents, states, per-agent actions, per-agent
observations, transition, observation, reward, discount, terminal states),
with an optional initial-observation channel and an optional episode horizon.

History convention
------------------
An individual history is a flat tuple of integer indices alternating between
actions and observations and always ending in an observation (or empty).
Models without an initial-observation channel start at the empty history and
interleave (a_0, o_1, a_1, o_2, ...); models with one start at (o_0,) and
interleave (o_0, a_0, o_1, ...).  In both cases the number of completed
timesteps of a history ``h`` is ``len(h) // 2`` and decisions are taken at
histories ending in an observation (or at the root).

A joint history is a tuple with one individual history per agent, all of the
same timestep.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

PROB_TOL = 1e-9


class ModelError(Exception):
    """Malformed model or query against it."""


class MissingHistoryError(KeyError):
    """A parameterized policy was queried at a history it has no row for."""


class UnsupportedParameterizationError(TypeError):
    """Score/gradient requested from a policy kind that has no parameters."""


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecPomdpModel:
    """Finite Dec-POMDP with dense transition/observation/reward tensors.

    Tensor layout (all float64):
      transition[s, ja, s']           P(s' | s, joint-action ja)
      observation[ja, s', jo]         P(joint-obs jo | ja, s'), rows required
                                      only for live (non-terminal) s'
      initial_observation[s, jo]      optional; P(jo | s_0) before any action
      reward[s, ja]                   immediate reward
      start[s]                        initial state distribution
      terminal[s]                     bool; absorbing, zero reward

    ``horizon`` declares forced termination after that many actions; it is
    required when discount == 1.  Joint actions and joint observations are
    indexed by ``ravel`` order of the per-agent indices (itertools.product).
    """

    name: str
    agents: int
    state_names: tuple[str, ...]
    action_names: tuple[tuple[str, ...], ...]
    observation_names: tuple[tuple[str, ...], ...]
    start: np.ndarray
    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    discount: float
    terminal: np.ndarray
    initial_observation: np.ndarray | None = None
    horizon: int | None = None
    # Rewards exactly as given by the constructor (ints/Fractions preserved),
    # keyed (state index, joint action index); computations use the float64
    # tensor, these are kept for exact display/serialization round-trips.
    reward_exact: dict = field(default_factory=dict, compare=False)

    # -- index helpers ------------------------------------------------------

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    # The structural products below are cached: the model is treated as
    # immutable after construction (rescaling goes through dataclasses.replace,
    # which builds a fresh instance and thus a fresh cache).

    @cached_property
    def n_actions(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.action_names)

    @cached_property
    def n_observations(self) -> tuple[int, ...]:
        return tuple(len(o) for o in self.observation_names)

    @cached_property
    def joint_actions(self) -> tuple[tuple[int, ...], ...]:
        return tuple(itertools.product(*[range(n) for n in self.n_actions]))

    @cached_property
    def joint_observations(self) -> tuple[tuple[int, ...], ...]:
        return tuple(itertools.product(*[range(n) for n in self.n_observations]))

    def joint_action_index(self, a: Sequence[int]) -> int:
        idx = 0
        for ai, n in zip(a, self.n_actions):
            idx = idx * n + ai
        return idx

    def joint_observation_index(self, o: Sequence[int]) -> int:
        idx = 0
        for oi, n in zip(o, self.n_observations):
            idx = idx * n + oi
        return idx

    @property
    def has_initial_observation(self) -> bool:
        return self.initial_observation is not None

    @cached_property
    def live_states(self) -> np.ndarray:
        return np.flatnonzero(~self.terminal)

    def state_index(self, name: str) -> int:
        return self.state_names.index(name)

    def action_index(self, agent: int, name: str) -> int:
        return self.action_names[agent].index(name)

    def joint_action_by_names(self, names: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.action_index(i, n) for i, n in enumerate(names))

    def format_history(self, agent: int, h: tuple[int, ...]) -> str:
        """Human-readable rendering of an individual history tuple."""
        parts = []
        pos = 0
        if self.has_initial_observation and h:
            parts.append(self.observation_names[agent][h[0]])
            pos = 1
        while pos < len(h):
            parts.append(self.action_names[agent][h[pos]])
            if pos + 1 < len(h):
                parts.append(self.observation_names[agent][h[pos + 1]])
            pos += 2
        return "(" + ",".join(parts) + ")" if parts else "()"


def history_timestep(h: tuple[int, ...]) -> int:
    """Number of completed actions in an individual/joint-component history."""
    return len(h) // 2


def root_histories(model: DecPomdpModel) -> tuple[tuple[int, ...], ...]:
    """Per-agent history tuples at timestep 0 (before any action)."""
    if model.has_initial_observation:
        raise ModelError(
            "models with an initial observation have one root per joint "
            "observation; enumerate via the visitation engine"
        )
    return tuple(() for _ in range(model.agents))


def extend_history(h: tuple[int, ...], a: int, o: int) -> tuple[int, ...]:
    return h + (a, o)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate(model: DecPomdpModel) -> list[str]:
    """Return a list of violated invariants (empty list = valid model)."""
    problems: list[str] = []
    S, JA = model.n_states, len(model.joint_actions)
    JO = len(model.joint_observations)

    if model.agents < 1:
        problems.append("agent count must be >= 1")
    if model.start.shape != (S,):
        problems.append("start distribution has wrong shape")
    elif abs(model.start.sum() - 1.0) > PROB_TOL or (model.start < -PROB_TOL).any():
        problems.append("start distribution does not sum to 1")
    if model.transition.shape != (S, JA, S):
        problems.append("transition tensor has wrong shape")
    if model.observation.shape != (JA, S, JO):
        problems.append("observation tensor has wrong shape")
    if model.reward.shape != (S, JA):
        problems.append("reward tensor has wrong shape")

    if not problems:
        rowsum = model.transition.sum(axis=2)
        bad = np.argwhere(np.abs(rowsum - 1.0) > PROB_TOL)
        for s, ja in bad[:5]:
            problems.append(
                f"transition row (s={model.state_names[s]}, ja={ja}) sums to "
                f"{rowsum[s, ja]:.6g}, expected 1"
            )
        if (model.transition < -PROB_TOL).any():
            problems.append("negative transition probability")

        # observation rows are required only where a live state is actually
        # a possible successor of the joint action (other rows may be omitted,
        # i.e. all-zero, or present and normalized)
        live = model.live_states
        orow = model.observation.sum(axis=2)
        succ_mass = model.transition.sum(axis=0)  # [ja, s']
        for ja in range(JA):
            for s in live:
                needed = succ_mass[ja, s] > PROB_TOL
                ok = abs(orow[ja, s] - 1.0) <= PROB_TOL or (
                    not needed and abs(orow[ja, s]) <= PROB_TOL
                )
                if not ok:
                    problems.append(
                        f"observation row (ja={ja}, s'={model.state_names[s]}) "
                        f"sums to {orow[ja, s]:.6g}, expected 1"
                    )
        if (model.observation < -PROB_TOL).any():
            problems.append("negative observation probability")

        for s in np.flatnonzero(model.terminal):
            for ja in range(JA):
                if abs(model.transition[s, ja, s] - 1.0) > PROB_TOL:
                    problems.append(
                        f"terminal state {model.state_names[s]} not absorbing "
                        f"under joint action {ja}"
                    )
                if abs(model.reward[s, ja]) > PROB_TOL:
                    problems.append(
                        f"terminal state {model.state_names[s]} has nonzero "
                        f"reward under joint action {ja}"
                    )

        if model.initial_observation is not None:
            io = model.initial_observation
            if io.shape != (S, JO):
                problems.append("initial_observation tensor has wrong shape")
            else:
                for s in np.flatnonzero(model.start > PROB_TOL):
                    if abs(io[s].sum() - 1.0) > PROB_TOL:
                        problems.append(
                            f"initial_observation row for start state "
                            f"{model.state_names[s]} does not sum to 1"
                        )

    if not (0.0 <= model.discount <= 1.0):
        problems.append(f"discount {model.discount} outside [0, 1]")
    if model.discount == 1.0 and model.horizon is None:
        problems.append("discount 1 requires a declared episodic horizon")
    if model.horizon is not None and model.horizon < 1:
        problems.append("horizon must be >= 1")
    return problems


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


class TabularPolicy:
    """Direct per-history action distributions: params are the probabilities.

    The parameter-gradient of log pi at (h, a) is the indicator at that
    coordinate scaled by 1/pi(a; h).
    """

    kind = "tabular"

    def __init__(self, n_actions: int, default_row=None):
        """default_row: None (unknown histories raise MissingHistoryError),
        "uniform", or a callable h -> probability row used to seed rows on
        first access (rows are stored, so the parameter layout is the access
        order, which is deterministic under the exact enumeration engines)."""
        self.n_actions = n_actions
        self.default_row = default_row
        self.rows: dict[tuple[int, ...], np.ndarray] = {}
        self._row_order: list[tuple[int, ...]] = []

    def ensure_row(self, h: tuple[int, ...], probs=None) -> None:
        if h not in self.rows:
            if probs is None:
                probs = np.full(self.n_actions, 1.0 / self.n_actions)
            row = np.asarray(probs, dtype=float)
            if row.shape != (self.n_actions,) or abs(row.sum() - 1.0) > PROB_TOL:
                raise ModelError(f"tabular row for {h} does not sum to 1")
            if (row < -PROB_TOL).any():
                raise ModelError(f"tabular row for {h} has negative entries")
            self.rows[h] = row
            self._row_order.append(h)

    def set_row(self, h: tuple[int, ...], probs) -> None:
        if h in self.rows:
            del self.rows[h]
            self._row_order.remove(h)
        self.ensure_row(h, probs)

    def dist(self, h: tuple[int, ...]) -> np.ndarray:
        if h not in self.rows:
            if self.default_row is None:
                raise MissingHistoryError(f"no tabular row for history {h}")
            self.ensure_row(
                h, None if self.default_row == "uniform" else self.default_row(h)
            )
        return self.rows[h]

    def score_coords(self, h, a):
        p = self.dist(h)[a]
        if p <= 0.0:
            raise ZeroDivisionError(
                f"tabular score undefined at probability-0 coordinate {h},{a}"
            )
        return [((h, a), 1.0 / p)]

    # parameter vector layout: rows in insertion order, actions contiguous
    def param_order(self) -> list[tuple[tuple[int, ...], int]]:
        return [(h, a) for h in self._row_order for a in range(self.n_actions)]

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.rows[h] for h in self._row_order]) if self._row_order else np.zeros(0)

    def set_params(self, vec: np.ndarray) -> None:
        for k, h in enumerate(self._row_order):
            row = np.asarray(vec[k * self.n_actions : (k + 1) * self.n_actions], dtype=float)
            self.rows[h] = row


class SoftmaxPolicy:
    """Per-history logit rows; the action distribution is softmax of the row."""

    kind = "softmax"

    def __init__(self, n_actions: int, default_row=None):
        """default_row: None, "uniform" (zero logits), or callable h -> logits."""
        self.n_actions = n_actions
        self.default_row = default_row
        self.rows: dict[tuple[int, ...], np.ndarray] = {}
        self._row_order: list[tuple[int, ...]] = []

    def ensure_row(self, h: tuple[int, ...], logits=None) -> None:
        if h not in self.rows:
            if logits is None:
                logits = np.zeros(self.n_actions)
            self.rows[h] = np.asarray(logits, dtype=float).copy()
            self._row_order.append(h)

    def dist(self, h: tuple[int, ...]) -> np.ndarray:
        if h not in self.rows:
            if self.default_row is None:
                raise MissingHistoryError(f"no softmax row for history {h}")
            self.ensure_row(
                h, None if self.default_row == "uniform" else self.default_row(h)
            )
        z = self.rows[h]
        e = np.exp(z - z.max())
        return e / e.sum()

    def score_coords(self, h, a):
        p = self.dist(h)
        out = []
        for b in range(self.n_actions):
            out.append(((h, b), (1.0 if b == a else 0.0) - p[b]))
        return out

    def param_order(self) -> list[tuple[tuple[int, ...], int]]:
        return [(h, a) for h in self._row_order for a in range(self.n_actions)]

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.rows[h] for h in self._row_order]) if self._row_order else np.zeros(0)

    def set_params(self, vec: np.ndarray) -> None:
        for k, h in enumerate(self._row_order):
            self.rows[h] = np.asarray(
                vec[k * self.n_actions : (k + 1) * self.n_actions], dtype=float
            ).copy()


class TimedPolicy:
    """Deterministic decision rule history -> action; carries no parameters.

    ``rule(h)`` may return either a single action index or a distribution
    (so reference policies can name explicit tie-breaking like a uniform
    choice between two actions).
    """

    kind = "timed"

    def __init__(self, n_actions: int, rule: Callable[[tuple[int, ...]], object]):
        self.n_actions = n_actions
        self.rule = rule

    def dist(self, h: tuple[int, ...]) -> np.ndarray:
        out = self.rule(h)
        if isinstance(out, (int, np.integer)):
            d = np.zeros(self.n_actions)
            d[out] = 1.0
            return d
        d = np.asarray(out, dtype=float)
        if d.shape != (self.n_actions,) or abs(d.sum() - 1.0) > PROB_TOL:
            raise ModelError("timed policy rule returned a malformed distribution")
        return d

    def score_coords(self, h, a):
        raise UnsupportedParameterizationError(
            "timed-deterministic policies have no parameters to differentiate"
        )


Policy = TabularPolicy | SoftmaxPolicy | TimedPolicy


class PolicySet:
    """One policy per agent; the joint policy is the product of the agents'."""

    def __init__(self, policies: Sequence[Policy]):
        self.policies = list(policies)

    def __getitem__(self, i: int) -> Policy:
        return self.policies[i]

    def __len__(self) -> int:
        return len(self.policies)

    @property
    def gradient_bearing(self) -> bool:
        return all(p.kind in ("tabular", "softmax") for p in self.policies)

    def dist(self, agent: int, h: tuple[int, ...]) -> np.ndarray:
        return self.policies[agent].dist(h)

    def prob(self, agent: int, h: tuple[int, ...], a: int) -> float:
        return float(self.policies[agent].dist(h)[a])

    def joint_prob(self, joint_h: Sequence[tuple[int, ...]], joint_a: Sequence[int]) -> float:
        p = 1.0
        for i, (h, a) in enumerate(zip(joint_h, joint_a)):
            p *= self.policies[i].dist(h)[a]
        return p

    def joint_dists(self, joint_h: Sequence[tuple[int, ...]]) -> list[np.ndarray]:
        return [self.policies[i].dist(h) for i, h in enumerate(joint_h)]

    def copy(self) -> "PolicySet":
        out = []
        for p in self.policies:
            if p.kind == "timed":
                out.append(TimedPolicy(p.n_actions, p.rule))
            else:
                q = type(p)(p.n_actions, default_row=p.default_row)
                for h in p._row_order:
                    q.ensure_row(h, p.rows[h].copy())
                out.append(q)
        return PolicySet(out)


def joint_policy_prob(policies: PolicySet, joint_h, joint_a) -> float:
    """Probability the factored joint policy takes joint_a at joint_h."""
    return policies.joint_prob(joint_h, joint_a)


def score(policies: PolicySet, agent: int, h: tuple[int, ...], a: int):
    """Parameter-gradient of log pi_agent(a; h) as sparse ((h, b), value) pairs."""
    return policies[agent].score_coords(h, a)


def uniform_policies(model: DecPomdpModel, kind: str = "tabular") -> PolicySet:
    """Uniform policies whose rows are seeded on first access (uniform rows
    for tabular, zero logits for softmax both give the uniform distribution)."""
    cls = {"tabular": TabularPolicy, "softmax": SoftmaxPolicy}[kind]
    return PolicySet([cls(n, default_row="uniform") for n in model.n_actions])


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------


def _num(x):
    if isinstance(x, Fraction):
        return float(x)
    return x


def model_to_json(model: DecPomdpModel) -> dict:
    """Serialize to the documented JSON schema (sparse triplet lists)."""
    S = model.n_states
    ja_names = [
        [model.action_names[i][a] for i, a in enumerate(ja)]
        for ja in model.joint_actions
    ]
    jo_names = [
        [model.observation_names[i][o] for i, o in enumerate(jo)]
        for jo in model.joint_observations
    ]
    transition = []
    reward = []
    observation = []
    for s in range(S):
        for j, ja in enumerate(model.joint_actions):
            for s2 in range(S):
                p = model.transition[s, j, s2]
                if p > 0.0:
                    transition.append(
                        [model.state_names[s], ja_names[j], model.state_names[s2], p]
                    )
            r = model.reward_exact.get((s, j), model.reward[s, j])
            if r != 0:
                reward.append([model.state_names[s], ja_names[j], _num(r)])
    for j in range(len(model.joint_actions)):
        for s2 in model.live_states:
            for k, jo in enumerate(model.joint_observations):
                p = model.observation[j, s2, k]
                if p > 0.0:
                    observation.append(
                        [ja_names[j], model.state_names[s2], jo_names[k], p]
                    )
    doc = {
        "name": model.name,
        "agents": model.agents,
        "states": list(model.state_names),
        "actions": [list(a) for a in model.action_names],
        "observations": [list(o) for o in model.observation_names],
        "start": [float(x) for x in model.start],
        "transition": transition,
        "observation": observation,
        "reward": reward,
        "discount": model.discount,
        "terminal": [model.state_names[s] for s in np.flatnonzero(model.terminal)],
    }
    if model.horizon is not None:
        doc["horizon"] = model.horizon
    if model.initial_observation is not None:
        init = []
        for s in range(S):
            for k, jo in enumerate(model.joint_observations):
                p = model.initial_observation[s, k]
                if p > 0.0:
                    init.append([model.state_names[s], jo_names[k], p])
        doc["initial_observation"] = init
    return doc


def model_from_json(doc: dict) -> DecPomdpModel:
    """Load a model from the documented JSON schema and validate it."""
    agents = doc["agents"]
    state_names = tuple(doc["states"])
    action_names = tuple(tuple(a) for a in doc["actions"])
    observation_names = tuple(tuple(o) for o in doc["observations"])
    if len(action_names) != agents or len(observation_names) != agents:
        raise ModelError("per-agent action/observation lists do not match agent count")
    s_idx = {n: i for i, n in enumerate(state_names)}
    S = len(state_names)
    n_act = [len(a) for a in action_names]

    def ja_of(names):
        idx = 0
        for i, nm in enumerate(names):
            idx = idx * n_act[i] + action_names[i].index(nm)
        return idx

    n_obs = [len(o) for o in observation_names]

    def jo_of(names):
        idx = 0
        for i, nm in enumerate(names):
            idx = idx * n_obs[i] + observation_names[i].index(nm)
        return idx

    JA = int(np.prod(n_act))
    JO = int(np.prod(n_obs))
    transition = np.zeros((S, JA, S))
    for s, ja, s2, p in doc["transition"]:
        transition[s_idx[s], ja_of(ja), s_idx[s2]] += p
    observation = np.zeros((JA, S, JO))
    for ja, s2, jo, p in doc["observation"]:
        observation[ja_of(ja), s_idx[s2], jo_of(jo)] += p
    reward = np.zeros((S, JA))
    for s, ja, r in doc["reward"]:
        reward[s_idx[s], ja_of(ja)] = r
    terminal = np.zeros(S, dtype=bool)
    for s in doc.get("terminal", []):
        terminal[s_idx[s]] = True
    initial_observation = None
    if "initial_observation" in doc:
        initial_observation = np.zeros((S, JO))
        for s, jo, p in doc["initial_observation"]:
            initial_observation[s_idx[s], jo_of(jo)] += p
    model = DecPomdpModel(
        name=doc.get("name", "loaded"),
        agents=agents,
        state_names=state_names,
        action_names=action_names,
        observation_names=observation_names,
        start=np.asarray(doc["start"], dtype=float),
        transition=transition,
        observation=observation,
        reward=reward,
        discount=float(doc["discount"]),
        terminal=terminal,
        initial_observation=initial_observation,
        horizon=doc.get("horizon"),
    )
    problems = validate(model)
    if problems:
        raise ModelError("invalid model JSON: " + "; ".join(problems))
    return model


def save_model(model: DecPomdpModel, path) -> None:
    with open(path, "w") as f:
        json.dump(model_to_json(model), f, indent=1, sort_keys=True)
        f.write("\n")


def load_model(path) -> DecPomdpModel:
    with open(path) as f:
        return model_from_json(json.load(f))


# ---------------------------------------------------------------------------
# model construction helper
# ---------------------------------------------------------------------------


def build_model(
    *,
    name: str,
    agents: int,
    states: Sequence[str],
    actions: Sequence[Sequence[str]],
    observations: Sequence[Sequence[str]],
    start: dict[str, float],
    transitions: dict,
    rewards: dict,
    observations_fn: dict,
    discount: float,
    terminal: Sequence[str] = (),
    initial_observation: dict | None = None,
    horizon: int | None = None,
) -> DecPomdpModel:
    """Assemble a model from name-keyed sparse dicts.

    transitions:      {(s, a_names): {s': p}}         (terminal rows auto self-loop)
    rewards:          {(s, a_names): r}               (missing = 0)
    observations_fn:  {(a_names, s'): {o_names: p}}   (rows needed for live s')
    initial_observation: {s: {o_names: p}}
    """
    state_names = tuple(states)
    action_names = tuple(tuple(a) for a in actions)
    observation_names = tuple(tuple(o) for o in observations)
    s_idx = {n: i for i, n in enumerate(state_names)}
    S = len(state_names)
    n_act = [len(a) for a in action_names]
    n_obs = [len(o) for o in observation_names]
    joint_acts = list(itertools.product(*[range(n) for n in n_act]))
    joint_obs = list(itertools.product(*[range(n) for n in n_obs]))
    JA, JO = len(joint_acts), len(joint_obs)

    def ja_of(names):
        return joint_acts.index(
            tuple(action_names[i].index(nm) for i, nm in enumerate(names))
        )

    def jo_of(names):
        return joint_obs.index(
            tuple(observation_names[i].index(nm) for i, nm in enumerate(names))
        )

    term = np.zeros(S, dtype=bool)
    for s in terminal:
        term[s_idx[s]] = True

    T = np.zeros((S, JA, S))
    for (s, anames), row in transitions.items():
        j = ja_of(tuple(anames))
        for s2, p in row.items():
            T[s_idx[s], j, s_idx[s2]] += p
    for s in np.flatnonzero(term):
        T[s, :, :] = 0.0
        T[s, :, s] = 1.0

    R = np.zeros((S, JA))
    reward_exact: dict = {}
    for (s, anames), r in rewards.items():
        j = ja_of(tuple(anames))
        R[s_idx[s], j] = float(r)
        if isinstance(r, (int, Fraction)):
            reward_exact[(s_idx[s], j)] = Fraction(r)

    O = np.zeros((JA, S, JO))
    for (anames, s2), row in observations_fn.items():
        j = ja_of(tuple(anames))
        for onames, p in row.items():
            O[j, s_idx[s2], jo_of(tuple(onames))] += p

    IO = None
    if initial_observation is not None:
        IO = np.zeros((S, JO))
        for s, row in initial_observation.items():
            for onames, p in row.items():
                IO[s_idx[s], jo_of(tuple(onames))] += p

    startv = np.zeros(S)
    for s, p in start.items():
        startv[s_idx[s]] = p

    model = DecPomdpModel(
        name=name,
        agents=agents,
        state_names=state_names,
        action_names=action_names,
        observation_names=observation_names,
        start=startv,
        transition=T,
        observation=O,
        reward=R,
        discount=float(discount),
        terminal=term,
        initial_observation=IO,
        horizon=horizon,
        reward_exact=reward_exact,
    )
    problems = validate(model)
    if problems:
        raise ModelError(f"build_model({name}): " + "; ".join(problems))
    return model
