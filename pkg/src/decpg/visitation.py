"""Exact discounted visitation weights over states, joint histories, and both.

The engine enumerates the reachable joint-history tree layer by layer
(breadth-first over timesteps), carrying for every joint history the exact
undiscounted probability mass over live states.  Discounted weights are
accumulated per state, per joint history, per (joint history, state), and
per (state, joint action); everything else (beliefs, conditionals,
normalized distributions) is derived from those four tables.

Termination mass is dropped the moment it appears: a terminal successor
contributes nothing to any weight, and a declared horizon ends every episode
by force, so all identities hold exactly under the truncated measure.

Joint histories are flat int tuples that alternate joint-action ids and
joint-observation ids.  For models without an initial observation they read
(a0, o1, a1, o2, ...) with the empty tuple as root; for models with one they
read (o0, a0, o1, ...) with one root per initial joint observation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from math import ceil, log

import numpy as np

from .model import DecPomdpModel, MissingHistoryError, ModelError, PolicySet

WEIGHT_TOL = 1e-12
DEFAULT_DEPTH_TOL = 1e-10
DEFAULT_NODE_BUDGET = 200_000


class BudgetExceededError(RuntimeError):
    """Raised when the reachable joint-history tree outgrows the node budget."""


class _EmptyDistribution:
    """Sentinel for a conditional whose conditioning event has zero weight."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "EMPTY"

    def __bool__(self):
        return False


EMPTY = _EmptyDistribution()


def is_empty(x) -> bool:
    return x is EMPTY


class HistoryInterner:
    """Append-only joint-history <-> id map shared by the exact engines, so
    value tables and gradient tables computed from one visitation pass key
    rows by the same small integers (including histories added later by
    deviate-once closures)."""

    def __init__(self):
        self._ids: dict[tuple, int] = {}
        self._histories: list[tuple] = []

    def id_of(self, h: tuple) -> int:
        hid = self._ids.get(h)
        if hid is None:
            hid = len(self._histories)
            self._ids[h] = hid
            self._histories.append(h)
        return hid

    def lookup(self, h: tuple) -> int:
        try:
            return self._ids[h]
        except KeyError:
            raise MissingHistoryError(f"history {h} was never interned") from None

    def history(self, hid: int) -> tuple:
        return self._histories[hid]

    def __contains__(self, h: tuple) -> bool:
        return h in self._ids

    def __len__(self) -> int:
        return len(self._histories)


def project_history(model: DecPomdpModel, h: tuple, agent: int) -> tuple:
    """Agent's private view of a joint history: each joint-action id maps to
    the agent's action index, each joint-observation id to its observation."""
    obs_parity = 0 if model.has_initial_observation else 1
    out = []
    for k, x in enumerate(h):
        if k % 2 == obs_parity:
            out.append(model.joint_observations[x][agent])
        else:
            out.append(model.joint_actions[x][agent])
    return tuple(out)


def joint_action_probs(model: DecPomdpModel, policies, h: tuple) -> np.ndarray:
    """Probabilities over joint actions at a joint history, in joint-action
    id order.

    Product policy sets are the common case; any object exposing its own
    ``joint_action_probs(model, h)`` (e.g. a centralized joint-action policy)
    is dispatched to directly, so every engine built on this function works
    unchanged for centralized controllers.
    """
    direct = getattr(policies, "joint_action_probs", None)
    if callable(direct):
        return np.asarray(direct(model, h), dtype=float)
    dists = [
        policies.dist(i, project_history(model, h, i)) for i in range(model.agents)
    ]
    return reduce(np.multiply.outer, dists).ravel()


def max_depth_for(model: DecPomdpModel, tol: float = DEFAULT_DEPTH_TOL) -> int:
    """Number of decision layers worth expanding: the declared horizon if any,
    further capped (for discount < 1) at the depth where the discount factor
    alone drops below ``tol``."""
    g = model.discount
    cap = None
    if g < 1.0:
        cap = 1 if g == 0.0 else ceil(log(tol) / log(g))
    if model.horizon is not None:
        cap = model.horizon if cap is None else min(cap, model.horizon)
    if cap is None:
        raise ModelError(
            f"model {model.name}: discount 1 requires a declared horizon"
        )
    return cap


@dataclass
class VisitationTable:
    """Exact discounted visitation weights for one (model, policy) pair.

    Weights are raw discounted sums (a never-terminating model accumulates
    total weight 1/(1-discount)); ``total_weight`` is the normalizer that
    turns them into the visitation *distribution*.  At discount 1 the total
    weight equals the expected episode length.
    """

    model: DecPomdpModel
    policies: PolicySet
    interner: HistoryInterner
    depth: int
    # undiscounted live state mass per joint history, one dict per timestep
    layers: list[dict[int, np.ndarray]]
    state_weight: np.ndarray
    history_weight: dict[int, float]
    history_state_weight: dict[int, np.ndarray]
    state_action_weight: np.ndarray
    total_weight: float
    history_timestep: dict[int, int] = field(default_factory=dict)

    # -- raw weights ---------------------------------------------------------

    def history_action_weight(self, h: tuple, joint_action: int) -> float:
        """Derived identity: weight(h, a) = weight(h) * joint policy prob."""
        hid = self.interner.lookup(h)
        w = self.history_weight.get(hid, 0.0)
        if w <= 0.0:
            return 0.0
        return w * float(joint_action_probs(self.model, self.policies, h)[joint_action])

    def history_state_action_weight(self, h: tuple, s: int, joint_action: int) -> float:
        hid = self.interner.lookup(h)
        v = self.history_state_weight.get(hid)
        if v is None or v[s] <= 0.0:
            return 0.0
        return float(
            v[s] * joint_action_probs(self.model, self.policies, h)[joint_action]
        )

    def histories(self):
        """(id, history) pairs for every reachable joint history, in layer order."""
        for layer in self.layers:
            for hid in layer:
                yield hid, self.interner.history(hid)

    # -- normalized distributions ---------------------------------------------

    def state_distribution(self) -> np.ndarray:
        return self.state_weight / self.total_weight

    def history_distribution(self) -> dict[int, float]:
        return {hid: w / self.total_weight for hid, w in self.history_weight.items()}

    def state_action_distribution(self) -> np.ndarray:
        return self.state_action_weight / self.total_weight

    # -- conditionals (EMPTY when the conditioning event has zero weight) -----

    def belief_over_states(self, h: tuple):
        """Distribution over states given the joint history."""
        hid = self.interner.lookup(h)
        v = self.history_state_weight.get(hid)
        if v is None:
            return EMPTY
        tot = v.sum()
        if tot <= WEIGHT_TOL * max(1.0, self.total_weight):
            return EMPTY
        return v / tot

    def histories_given_state(self, s: int):
        """Distribution over joint-history ids given the state."""
        den = self.state_weight[s]
        if den <= WEIGHT_TOL * max(1.0, self.total_weight):
            return EMPTY
        return {
            hid: float(v[s] / den)
            for hid, v in self.history_state_weight.items()
            if v[s] > 0.0
        }

    def actions_given_state(self, s: int):
        """Visitation-weighted joint-action distribution at a state."""
        den = self.state_weight[s]
        if den <= WEIGHT_TOL * max(1.0, self.total_weight):
            return EMPTY
        return self.state_action_weight[s] / den

    def actions_given_history(self, h: tuple) -> np.ndarray:
        """Identity: conditioning on the joint history recovers the joint policy."""
        return joint_action_probs(self.model, self.policies, h)

    def actions_given_state_at_time(self, t: int, s: int):
        """Pr(joint action | state, timestep) from the undiscounted layer mass."""
        if t >= len(self.layers):
            return EMPTY
        num = np.zeros(len(self.model.joint_actions))
        den = 0.0
        for hid, mass in self.layers[t].items():
            m = mass[s]
            if m <= 0.0:
                continue
            den += m
            num += m * joint_action_probs(
                self.model, self.policies, self.interner.history(hid)
            )
        if den <= WEIGHT_TOL:
            return EMPTY
        return num / den

    # -- per-agent marginals ---------------------------------------------------

    def agent_history_weight(self, agent: int) -> dict[tuple, float]:
        """Weights of the agent's private histories (joint histories summed
        over everything the agent cannot see)."""
        out: dict[tuple, float] = {}
        for hid, w in self.history_weight.items():
            if w <= 0.0:
                continue
            hi = project_history(self.model, self.interner.history(hid), agent)
            out[hi] = out.get(hi, 0.0) + w
        return out

    def agent_history_action_weight(self, agent: int) -> dict[tuple, float]:
        """weight(h_i, a_i) = weight(h_i) * policy_i(a_i | h_i): the agent's
        action probability depends only on its own history, so the joint sum
        factorizes."""
        out: dict[tuple, float] = {}
        for hi, w in self.agent_history_weight(agent).items():
            dist = self.policies.dist(agent, hi)
            for a in range(len(dist)):
                out[(hi, a)] = w * float(dist[a])
        return out


def compute_visitation(
    model: DecPomdpModel,
    policies: PolicySet,
    *,
    depth_tol: float = DEFAULT_DEPTH_TOL,
    node_budget: int = DEFAULT_NODE_BUDGET,
    max_depth: int | None = None,
    interner: HistoryInterner | None = None,
) -> VisitationTable:
    """Enumerate the reachable joint-history tree and accumulate exact
    discounted visitation weights.

    ``max_depth`` overrides the discount-based depth cap (useful for studying
    per-timestep conditionals far into a never-terminating run); a declared
    horizon is always respected.
    """
    interner = interner if interner is not None else HistoryInterner()
    depth = max_depth_for(model, depth_tol) if max_depth is None else max_depth
    if model.horizon is not None:
        depth = min(depth, model.horizon)

    S = model.n_states
    JA = len(model.joint_actions)
    JO = len(model.joint_observations)
    live = ~model.terminal
    g = model.discount

    root_mass = model.start * live
    layer: dict[int, np.ndarray] = {}
    if model.has_initial_observation:
        # one root per initial joint observation with positive mass
        for jo in range(JO):
            mass = root_mass * model.initial_observation[:, jo]
            if mass.sum() > 0.0:
                layer[interner.id_of((jo,))] = mass
    else:
        layer[interner.id_of(())] = root_mass

    layers: list[dict[int, np.ndarray]] = []
    state_weight = np.zeros(S)
    history_weight: dict[int, float] = {}
    history_state_weight: dict[int, np.ndarray] = {}
    state_action_weight = np.zeros((S, JA))
    history_timestep: dict[int, int] = {}
    nodes = 0

    for t in range(depth):
        if not layer:
            break
        nodes += len(layer)
        if nodes > node_budget:
            raise BudgetExceededError(
                f"model {model.name}: joint-history tree exceeded "
                f"{node_budget} nodes at depth {t}"
            )
        layers.append(layer)
        disc = g**t
        next_layer: dict[int, np.ndarray] = {}
        for hid, mass in layer.items():
            h = interner.history(hid)
            history_timestep[hid] = t
            jp = joint_action_probs(model, policies, h)
            w = disc * mass
            history_state_weight[hid] = w
            history_weight[hid] = float(w.sum())
            state_weight += w
            state_action_weight += np.outer(w, jp)
            if t + 1 >= depth:
                continue
            for ja in range(JA):
                if jp[ja] <= 0.0:
                    continue
                succ = (mass * jp[ja]) @ model.transition[:, ja, :]
                succ = succ * live
                if succ.sum() <= 0.0:
                    continue
                # split surviving mass across joint observations
                contrib = succ[:, None] * model.observation[ja, :, :]
                col_mass = contrib.sum(axis=0)
                for jo in range(JO):
                    if col_mass[jo] <= 0.0:
                        continue
                    child = interner.id_of(h + (ja, jo))
                    if child in next_layer:
                        next_layer[child] += contrib[:, jo]
                    else:
                        next_layer[child] = contrib[:, jo].copy()
        layer = next_layer

    total = float(state_weight.sum())
    return VisitationTable(
        model=model,
        policies=policies,
        interner=interner,
        depth=len(layers),
        layers=layers,
        state_weight=state_weight,
        history_weight=history_weight,
        history_state_weight=history_state_weight,
        state_action_weight=state_action_weight,
        total_weight=total,
        history_timestep=history_timestep,
    )


# ---------------------------------------------------------------------------
# candidate state-conditioned action distributions
# ---------------------------------------------------------------------------


@dataclass
class CandidateDistributions:
    """Three ways to give 'the' action distribution at a state, with
    convergence diagnostics.  Non-convergence is reported, never raised:
    a limit that does not exist is exactly the phenomenon of interest."""

    state: int
    per_time: list  # Pr(joint action | state, t) per timestep, EMPTY where unvisited
    running_average: list  # Cesaro averages over the defined entries
    limiting: object  # last per-time entry (the limit candidate), or EMPTY
    limiting_converged: bool
    average: object  # last running average, or EMPTY
    average_converged: bool
    discounted: object  # visitation-weighted distribution, or EMPTY
    discounted_partial: list = None  # discounted candidate truncated at depth N, per N


def sequence_settled(seq: list, window: int = 10, tol: float = 1e-8) -> bool:
    """True when the last ``window`` successive differences are all below
    ``tol`` (a numerical 'has settled' check, not a proof of convergence)."""
    defined = [x for x in seq if not is_empty(x)]
    if len(defined) < 2:
        return False
    tail = defined[-(window + 1) :]
    return all(
        float(np.max(np.abs(b - a))) < tol for a, b in zip(tail, tail[1:])
    )


def candidate_action_distributions(
    model: DecPomdpModel,
    policies: PolicySet,
    s: int,
    *,
    n_times: int = 64,
    window: int = 10,
    tol: float = 1e-8,
    table: VisitationTable | None = None,
) -> CandidateDistributions:
    """Compute the limiting, running-average, and discounted-visitation
    candidates for Pr(joint action | state s)."""
    deep = compute_visitation(model, policies, max_depth=n_times)
    per_time = [deep.actions_given_state_at_time(t, s) for t in range(n_times)]
    averages: list = []
    acc = None
    count = 0
    for c in per_time:
        if is_empty(c):
            averages.append(acc / count if count else EMPTY)
            continue
        acc = c.copy() if acc is None else acc + c
        count += 1
        averages.append(acc / count)
    defined = [c for c in per_time if not is_empty(c)]
    limiting = defined[-1] if defined else EMPTY
    avg_defined = [a for a in averages if not is_empty(a)]
    average = avg_defined[-1] if avg_defined else EMPTY

    # Discounted candidate truncated at each depth N: the partial sums whose
    # limit (when the discount is < 1) is the full discounted distribution.
    partials: list = []
    numer = np.zeros(len(model.joint_actions))
    denom = 0.0
    for t in range(min(n_times, len(deep.layers))):
        disc = model.discount**t
        for hid, mass in deep.layers[t].items():
            m = float(mass[s])
            if m <= WEIGHT_TOL:
                continue
            jp = joint_action_probs(model, policies, deep.interner.history(hid))
            numer += disc * m * jp
            denom += disc * m
        partials.append(numer / denom if denom > WEIGHT_TOL else EMPTY)

    if table is None:
        table = compute_visitation(model, policies)
    return CandidateDistributions(
        state=s,
        per_time=per_time,
        running_average=averages,
        limiting=limiting,
        limiting_converged=sequence_settled(per_time, window, tol),
        average=average,
        average_converged=sequence_settled(averages, window, tol),
        discounted=table.actions_given_state(s),
        discounted_partial=partials,
    )
