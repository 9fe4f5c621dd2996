"""Closed-form value functions for every conditioning variant.

Four families of action-value tables, all exact under the (possibly
horizon-truncated) visitation measure:

- joint-history values  Q(joint history, joint action)
- individual values     Q_i(agent history, agent action)
- state values          Q(state, joint action), untimed (linear solve) and
                        timed (backward induction over visitation layers)
- history-state values  Q(joint history, state, joint action)

The joint-history and history-state tables come from one backward recursion
over the deviate-once closure of the reachable tree: every reachable joint
history is scored for *all* joint actions, and a successor created by an
off-policy action is continued on-policy.  The individual tables use an
independent forward filter over the joint contexts an agent cannot observe;
they never read the joint tables, so identities relating the two families
are genuine cross-checks rather than restatements.

Untimed state values condition the continuation on the visitation-weighted
action distribution at the successor state.  At discount 1 that linear
system can be singular (the weights need not contract anything); this is
reported as NoUniqueSolutionError, not papered over.  A live successor state
with zero visitation weight makes the conditional continuation undefined and
raises ValueComputationError.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DecPomdpModel, PolicySet
from .visitation import (
    EMPTY,
    BudgetExceededError,
    DEFAULT_NODE_BUDGET,
    VisitationTable,
    is_empty,
    joint_action_probs,
    max_depth_for,
    project_history,
)

JOINT_HISTORY = "joint-history"
INDIVIDUAL = "individual"
STATE = "state"
TIMED_STATE = "timed-state"
HISTORY_STATE = "history-state"


class ValueComputationError(RuntimeError):
    """A value is undefined under the visitation measure (for example a live
    successor state that is never visited)."""


class NoUniqueSolutionError(ValueComputationError):
    """The untimed state-value linear system is singular or inconsistent."""


class VariantMismatchError(TypeError):
    """Q and V tables from different conditioning variants were combined."""


@dataclass
class ValueTable:
    """Uniform container for one variant's Q and V tables.

    ``q`` maps (prefix, action index) to a value; ``v`` maps prefix to the
    weighted action average of ``q`` under ``weights`` (the joint policy for
    history prefixes, the visitation action conditional for state prefixes).
    Prefix conventions per variant:

    - joint-history: interned joint-history id, action = joint-action id
    - individual:    agent's private history tuple, action = agent action
    - state:         state index, action = joint-action id
    - timed-state:   (timestep, state index), action = joint-action id
    - history-state: (history id, state index), action = joint-action id
    """

    variant: str
    q: dict
    v: dict
    weights: dict
    agent: int | None = None
    extra: dict = field(default_factory=dict)

    def n_action_space(self) -> int:
        for prefix, w in self.weights.items():
            return len(w)
        return 0


def advantage_table(
    q_table: ValueTable,
    v_table: ValueTable | None = None,
    *,
    zero_mean_tol: float = 1e-9,
) -> dict:
    """Advantages A(prefix, a) = Q(prefix, a) - V(prefix).

    When Q and V come from the same variant the weighted action average of A
    is zero by construction; that identity is asserted to ``zero_mean_tol``
    and a violation raises (it can only mean an internal inconsistency).
    """
    if v_table is None:
        v_table = q_table
    if v_table.variant != q_table.variant or v_table.agent != q_table.agent:
        raise VariantMismatchError(
            f"cannot combine {q_table.variant!r} Q-values with "
            f"{v_table.variant!r} V-values"
        )
    out = {}
    for (prefix, a), qv in q_table.q.items():
        out[(prefix, a)] = qv - v_table.v[prefix]
    worst = 0.0
    for prefix, w in q_table.weights.items():
        mean = sum(
            w[a] * out[(prefix, a)] for a in range(len(w)) if (prefix, a) in out
        )
        worst = max(worst, abs(mean))
    if worst > zero_mean_tol:
        raise ValueComputationError(
            f"advantage zero-mean identity violated: max deviation {worst:.3e}"
        )
    return out


def expected_return(model: DecPomdpModel, vis: VisitationTable) -> float:
    """Exact discounted return: the reward tensor integrated against the
    state-action visitation weights."""
    return float((vis.state_action_weight * model.reward).sum())


# ---------------------------------------------------------------------------
# generic linear Bellman system
# ---------------------------------------------------------------------------


class GenericBellmanSystem:
    """Finite linear fixed-point system q = r + discount * P q.

    ``P`` rows are the conditional one-step distributions over keys (they may
    be substochastic when continuation mass terminates).  ``solve`` requires
    a unique solution: a singular matrix, a non-finite result, or a residual
    above tolerance raises NoUniqueSolutionError.
    """

    def __init__(self, keys: list, r: np.ndarray, P: np.ndarray, discount: float):
        self.keys = list(keys)
        self.r = np.asarray(r, dtype=float)
        self.P = np.asarray(P, dtype=float)
        self.discount = float(discount)
        n = len(self.keys)
        if self.r.shape != (n,) or self.P.shape != (n, n):
            raise ValueError("GenericBellmanSystem shapes do not match keys")

    def residual(self, q: np.ndarray) -> float:
        return float(
            np.max(np.abs(q - (self.r + self.discount * self.P @ q)), initial=0.0)
        )

    def solve(self, residual_tol: float = 1e-10) -> np.ndarray:
        n = len(self.keys)
        A = np.eye(n) - self.discount * self.P
        try:
            q = np.linalg.solve(A, self.r)
        except np.linalg.LinAlgError as e:
            raise NoUniqueSolutionError(
                f"Bellman system is singular ({e}); no unique fixed point"
            ) from None
        scale = max(1.0, float(np.max(np.abs(self.r), initial=0.0)))
        if not np.all(np.isfinite(q)) or self.residual(q) > residual_tol * scale:
            raise NoUniqueSolutionError(
                "Bellman system solve failed the residual check; the system "
                "is numerically singular"
            )
        return q


# ---------------------------------------------------------------------------
# joint-history and history-state values (one shared backward recursion)
# ---------------------------------------------------------------------------


class _HistoryRecursion:
    """Backward induction over the deviate-once closure.

    For each joint history the per-state continuation vector
    ``w(h)[s] = E[discounted future return | state s, history h, on-policy]``
    and the per-state action values ``qsa(h)[s, ja]`` are memoized; both are
    defined for every live state, visited or not.
    """

    def __init__(self, model, policies, *, node_budget=DEFAULT_NODE_BUDGET):
        self.model = model
        self.policies = policies
        self.depth = max_depth_for(model)
        self.node_budget = node_budget
        self.live = (~model.terminal).astype(float)
        self.w_memo: dict[tuple, np.ndarray] = {}
        self.step_memo: dict[tuple, np.ndarray] = {}

    def step_vector(self, h: tuple, ja: int) -> np.ndarray:
        """Per-state value of playing joint action ``ja`` at history ``h``
        now and the joint policy afterwards."""
        got = self.step_memo.get((h, ja))
        if got is not None:
            return got
        m = self.model
        t = len(h) // 2
        out = m.reward[:, ja] * self.live
        if t + 1 < self.depth:
            future = np.zeros(m.n_states)
            for jo in range(len(m.joint_observations)):
                obs_col = m.observation[ja, :, jo] * self.live
                if not obs_col.any():
                    continue
                w_next = self.w(h + (ja, jo))
                future += m.transition[:, ja, :] @ (obs_col * w_next)
            out = out + m.discount * future
        self.step_memo[(h, ja)] = out
        if len(self.step_memo) > self.node_budget:
            raise BudgetExceededError(
                f"model {self.model.name}: value recursion exceeded "
                f"{self.node_budget} nodes at depth {t}"
            )
        return out

    def qsa(self, h: tuple) -> np.ndarray:
        """Per-state values for *all* joint actions at ``h`` (S x JA); the
        off-policy columns are the deviate-once part of the closure."""
        return np.stack(
            [self.step_vector(h, ja) for ja in range(len(self.model.joint_actions))],
            axis=1,
        )

    def w(self, h: tuple) -> np.ndarray:
        """On-policy continuation vector: only positive-probability actions
        are expanded, so the recursion stays on the deviate-once closure
        instead of the full action tree."""
        got = self.w_memo.get(h)
        if got is not None:
            return got
        jp = joint_action_probs(self.model, self.policies, h)
        out = np.zeros(self.model.n_states)
        for ja in range(len(self.model.joint_actions)):
            if jp[ja] > 0.0:
                out = out + jp[ja] * self.step_vector(h, ja)
        self.w_memo[h] = out
        return out


def history_value_tables(
    model: DecPomdpModel,
    policies: PolicySet,
    vis: VisitationTable,
    *,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> tuple[ValueTable, ValueTable]:
    """Joint-history and history-state value tables for every reachable joint
    history and every joint action (including zero-probability ones).

    Joint-history values are the belief average of the history-state values;
    both come out of the same recursion, which is what makes the pair usable
    as a consistency check against the independently computed state tables.
    """
    rec = _HistoryRecursion(model, policies, node_budget=node_budget)
    ja_count = len(model.joint_actions)
    q_joint: dict = {}
    v_joint: dict = {}
    weights_joint: dict = {}
    q_hs: dict = {}
    v_hs: dict = {}
    weights_hs: dict = {}
    for hid, h in vis.histories():
        qsa = rec.qsa(h)
        jp = joint_action_probs(model, policies, h)
        belief = vis.belief_over_states(h)
        w_vec = rec.w(h)
        for s in model.live_states:
            for ja in range(ja_count):
                q_hs[((hid, s), ja)] = float(qsa[s, ja])
            v_hs[(hid, s)] = float(w_vec[s])
            weights_hs[(hid, s)] = jp
        if is_empty(belief):
            continue
        q_row = belief @ qsa
        for ja in range(ja_count):
            q_joint[(hid, ja)] = float(q_row[ja])
        v_joint[hid] = float(q_row @ jp)
        weights_joint[hid] = jp
    joint = ValueTable(JOINT_HISTORY, q_joint, v_joint, weights_joint)
    hist_state = ValueTable(HISTORY_STATE, q_hs, v_hs, weights_hs)
    return joint, hist_state


# ---------------------------------------------------------------------------
# individual (agent-history) values via an independent joint-context filter
# ---------------------------------------------------------------------------


def individual_value_table(
    model: DecPomdpModel,
    policies: PolicySet,
    vis: VisitationTable,
    agent: int,
) -> ValueTable:
    """Q_i(agent history, agent action): the expected return when agent i,
    at one of its reachable private histories, plays the given action now and
    its policy afterwards, while the other agents follow theirs throughout.

    The computation carries an unnormalized filter over (joint history,
    state) contexts compatible with the private history and pushes it through
    the other agents' policies and the dynamics.  Discount factors up to the
    conditioning time cancel inside the conditional, so the filter starts
    from the undiscounted layer mass.
    """
    m = model
    depth = max_depth_for(m)
    live = (~m.terminal).astype(float)
    n_a = m.n_actions[agent]
    JA = len(m.joint_actions)
    JO = len(m.joint_observations)
    others_action = [  # joint actions grouped by this agent's action index
        [ja for ja in range(JA) if m.joint_actions[ja][agent] == a]
        for a in range(n_a)
    ]
    obs_of = [m.joint_observations[jo][agent] for jo in range(JO)]

    def other_probs(h: tuple, ja: int) -> float:
        p = 1.0
        for j in range(m.agents):
            if j == agent:
                continue
            p *= float(
                policies.dist(j, project_history(m, h, j))[m.joint_actions[ja][j]]
            )
        return p

    def step(h_i: tuple, a: int, filt: dict, t: int) -> float:
        """Unnormalized E[mass * return] of playing ``a`` at ``h_i`` now."""
        total = 0.0
        branches: dict[int, dict] = {}  # agent observation -> next filter
        for h, mass in filt.items():
            for ja in others_action[a]:
                p_others = other_probs(h, ja)
                if p_others <= 0.0:
                    continue
                scaled = mass * p_others
                total += float(scaled @ m.reward[:, ja])
                if t + 1 >= depth:
                    continue
                succ = (scaled @ m.transition[:, ja, :]) * live
                if succ.sum() <= 0.0:
                    continue
                contrib = succ[:, None] * m.observation[ja, :, :]
                for jo in range(JO):
                    col = contrib[:, jo]
                    if col.sum() <= 0.0:
                        continue
                    nxt = branches.setdefault(obs_of[jo], {})
                    key = h + (ja, jo)
                    if key in nxt:
                        nxt[key] = nxt[key] + col
                    else:
                        nxt[key] = col.copy()
        for o_i, nxt_filter in branches.items():
            total += m.discount * on_policy(h_i + (a, o_i), nxt_filter, t + 1)
        return total

    def on_policy(h_i: tuple, filt: dict, t: int) -> float:
        dist = policies.dist(agent, h_i)
        return sum(
            float(dist[a]) * step(h_i, a, filt, t)
            for a in range(n_a)
            if dist[a] > 0.0
        )

    # group reachable joint histories by the agent's private view, per layer
    q: dict = {}
    v: dict = {}
    weights: dict = {}
    for t, layer in enumerate(vis.layers):
        groups: dict[tuple, dict] = {}
        for hid, mass in layer.items():
            if mass.sum() <= 0.0:
                continue
            h = vis.interner.history(hid)
            h_i = project_history(m, h, agent)
            groups.setdefault(h_i, {})[h] = mass
        for h_i, filt in groups.items():
            norm = sum(float(mass.sum()) for mass in filt.values())
            dist = policies.dist(agent, h_i)
            vals = np.array([step(h_i, a, filt, t) / norm for a in range(n_a)])
            for a in range(n_a):
                q[(h_i, a)] = float(vals[a])
            v[h_i] = float(vals @ dist)
            weights[h_i] = np.asarray(dist, dtype=float).copy()
    return ValueTable(INDIVIDUAL, q, v, weights, agent=agent)


# ---------------------------------------------------------------------------
# state values: untimed (linear solve) and timed (backward over layers)
# ---------------------------------------------------------------------------


def state_value_table(
    model: DecPomdpModel,
    policies: PolicySet,
    vis: VisitationTable,
    *,
    residual_tol: float = 1e-10,
) -> ValueTable:
    """Untimed Q(state, joint action) for every visited live state and every
    joint action, defined by conditioning the continuation on the
    visitation-weighted action distribution at the successor state and
    solving the resulting linear system."""
    m = model
    JA = len(m.joint_actions)
    visited = [
        s
        for s in m.live_states
        if vis.state_weight[s] > 1e-12 * max(1.0, vis.total_weight)
    ]
    vset = set(visited)
    action_dists = {}
    for s in visited:
        d = vis.actions_given_state(s)
        if is_empty(d):  # pragma: no cover - visited implies weight > 0
            raise ValueComputationError(f"state {m.state_names[s]} has no actions")
        action_dists[s] = d
    keys = [(s, ja) for s in visited for ja in range(JA)]
    idx = {k: n for n, k in enumerate(keys)}
    r = np.array([m.reward[s, ja] for s, ja in keys])
    P = np.zeros((len(keys), len(keys)))
    for (s, ja), row in zip(keys, range(len(keys))):
        for s2 in m.live_states:
            p = m.transition[s, ja, s2]
            if p <= 0.0:
                continue
            if s2 not in vset:
                raise ValueComputationError(
                    f"live state {m.state_names[s2]!r} is reachable from "
                    f"({m.state_names[s]!r}, {m.joint_actions[ja]}) "
                    "but has zero visitation weight; its conditional "
                    "continuation is undefined"
                )
            for ja2 in range(JA):
                P[row, idx[(s2, ja2)]] += p * action_dists[s2][ja2]
    system = GenericBellmanSystem(keys, r, P, m.discount)
    sol = system.solve(residual_tol)
    q = {(s, ja): float(sol[idx[(s, ja)]]) for s, ja in keys}
    v = {s: float(action_dists[s] @ sol[idx[(s, 0)] : idx[(s, 0)] + JA]) for s in visited}
    weights = {s: action_dists[s] for s in visited}
    return ValueTable(STATE, q, v, weights, extra={"system": system})


def timed_state_value_table(
    model: DecPomdpModel,
    policies: PolicySet,
    vis: VisitationTable,
) -> ValueTable:
    """Timestep-indexed Q_t(state, joint action) by backward induction over
    the visitation layers, conditioning the continuation on Pr(joint action
    | state, t+1).

    A key is included only where its continuation is defined: every live
    successor of (state, action) is either visited at t+1 or cut off by the
    truncation depth.  Zero-probability actions whose successors were never
    visited are left out of the table (their conditional continuation is a
    0/0); an action the policy actually plays always has visited successors,
    so a gap there raises as an internal inconsistency.  Undefined keys are
    listed in ``extra['undefined']``.
    """
    m = model
    JA = len(m.joint_actions)
    full_depth = max_depth_for(m)
    q: dict = {}
    v: dict = {}
    weights: dict = {}
    undefined: list = []
    next_v: dict = {}  # state -> V_{t+1}(state) for visited states at t+1
    for t in range(vis.depth - 1, -1, -1):
        layer_state_mass = np.zeros(m.n_states)
        for mass in vis.layers[t].values():
            layer_state_mass += mass
        cur_v = {}
        for s in m.live_states:
            if layer_state_mass[s] <= 1e-12:
                continue
            dist = vis.actions_given_state_at_time(t, s)
            row = np.zeros(JA)
            defined = np.ones(JA, dtype=bool)
            for ja in range(JA):
                val = float(m.reward[s, ja])
                if t + 1 < full_depth:
                    for s2 in m.live_states:
                        p = m.transition[s, ja, s2]
                        if p <= 0.0:
                            continue
                        if t + 1 >= vis.depth or s2 not in next_v:
                            defined[ja] = False
                            break
                        val += m.discount * p * next_v[s2]
                if not defined[ja]:
                    if dist[ja] > 1e-12:
                        raise ValueComputationError(
                            f"action {m.joint_actions[ja]} is played at "
                            f"({m.state_names[s]!r}, t={t}) but a live "
                            f"successor is unvisited at t={t + 1}"
                        )
                    undefined.append(((t, s), ja))
                    continue
                row[ja] = val
                q[((t, s), ja)] = val
            v[(t, s)] = float(row[defined] @ dist[defined])
            weights[(t, s)] = dist
            cur_v[s] = v[(t, s)]
        next_v = cur_v
    return ValueTable(TIMED_STATE, q, v, weights, extra={"undefined": undefined})
