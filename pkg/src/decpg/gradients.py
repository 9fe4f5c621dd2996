"""Exact policy-gradient quantities for the four critic variants.

The score-function estimator pairs each agent's score with a critic value:

- individual:     Q_i(agent history, agent action)
- joint-history:  Q(joint history, joint action)
- state:          Q(state, joint action)
- history-state:  Q(joint history, state, joint action)

Everything here is computed in closed form by enumerating the support of the
visitation distribution; no sampling is involved except in the episode
sampler and the stochastic trainer at the bottom.

Two scalings are used and named explicitly.  ``weights`` scale integrates
against the raw visitation weights (at discount 1 this is the gradient of
the expected episode return; for discount < 1 it is 1/(1-discount) times
the normalized form on never-terminating models).  ``distribution`` scale
divides by the total visitation weight, matching the single-sample
estimator ``g = Q(key) * score(key)`` with the key drawn from the
normalized visitation distribution; its moments are what the variance
analysis is about.

Expected gradients for tabular policies are computed in cancelled form
(visitation weight times the *other* agents' action probabilities), so
coordinates the policy currently puts zero probability on still get their
true partial derivative instead of a 0/0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DecPomdpModel, PolicySet, UnsupportedParameterizationError
from .values import (
    HISTORY_STATE,
    INDIVIDUAL,
    JOINT_HISTORY,
    STATE,
    TIMED_STATE,
    ValueComputationError,
    ValueTable,
    VariantMismatchError,
    expected_return,
    history_value_tables,
    individual_value_table,
    state_value_table,
    timed_state_value_table,
)
from .visitation import (
    VisitationTable,
    compute_visitation,
    joint_action_probs,
    max_depth_for,
    project_history,
)

ESTIMATOR_VARIANTS = (INDIVIDUAL, JOINT_HISTORY, STATE, HISTORY_STATE)


# ---------------------------------------------------------------------------
# coordinates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradientCoordinates:
    """Deterministic enumeration of the differentiable coordinates: for each
    agent, each reachable private history in first-visit order, each action
    index."""

    entries: tuple  # ((agent, history, action), ...)
    index: dict = field(hash=False, compare=False, default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def of(self, agent: int, h: tuple, a: int) -> int:
        return self.index[(agent, h, a)]


def gradient_coordinates(
    model: DecPomdpModel, policies: PolicySet, vis: VisitationTable
) -> GradientCoordinates:
    entries = []
    for i in range(model.agents):
        seen = set()
        histories = []
        for hid, w in vis.history_weight.items():
            if w <= 0.0:
                continue
            hi = project_history(model, vis.interner.history(hid), i)
            if hi not in seen:
                seen.add(hi)
                histories.append(hi)
        for hi in histories:
            for a in range(model.n_actions[i]):
                entries.append((i, hi, a))
    coords = GradientCoordinates(tuple(entries))
    for n, e in enumerate(coords.entries):
        coords.index[e] = n
    return coords


# ---------------------------------------------------------------------------
# critic lookup per variant
# ---------------------------------------------------------------------------


def _critic_lookup(tables, variant: str, vis: VisitationTable):
    """Returns value(hid, s, ja, agent) reading the right key per variant."""
    if variant == INDIVIDUAL:
        per_agent = list(tables)
        model = vis.model

        def value(hid, s, ja, agent):
            hi = project_history(model, vis.interner.history(hid), agent)
            return per_agent[agent].q[(hi, model.joint_actions[ja][agent])]

        return value
    table = tables

    if variant == JOINT_HISTORY:
        return lambda hid, s, ja, agent: table.q[(hid, ja)]
    if variant == STATE:
        return lambda hid, s, ja, agent: table.q[(s, ja)]
    if variant == TIMED_STATE:
        timestep = vis.history_timestep
        return lambda hid, s, ja, agent: table.q[((timestep[hid], s), ja)]
    if variant == HISTORY_STATE:
        return lambda hid, s, ja, agent: table.q[((hid, s), ja)]
    raise VariantMismatchError(f"unknown critic variant {variant!r}")


def _table_variant(tables) -> str:
    if isinstance(tables, ValueTable):
        return tables.variant
    variants = {t.variant for t in tables}
    if variants != {INDIVIDUAL}:
        raise VariantMismatchError(
            "a list of tables must be the per-agent individual tables"
        )
    return INDIVIDUAL


def estimator_tables(
    model: DecPomdpModel, policies: PolicySet, vis: VisitationTable, variant: str
):
    """Build the critic table(s) an estimator variant needs."""
    if variant == INDIVIDUAL:
        return [
            individual_value_table(model, policies, vis, i)
            for i in range(model.agents)
        ]
    if variant == JOINT_HISTORY:
        return history_value_tables(model, policies, vis)[0]
    if variant == HISTORY_STATE:
        return history_value_tables(model, policies, vis)[1]
    if variant == STATE:
        return state_value_table(model, policies, vis)
    if variant == TIMED_STATE:
        return timed_state_value_table(model, policies, vis)
    raise VariantMismatchError(f"unknown critic variant {variant!r}")


# ---------------------------------------------------------------------------
# exact expected gradients
# ---------------------------------------------------------------------------


def expected_gradient(
    model: DecPomdpModel,
    policies: PolicySet,
    vis: VisitationTable,
    tables,
    *,
    coords: GradientCoordinates | None = None,
    scale: str = "weights",
) -> tuple[GradientCoordinates, np.ndarray]:
    """Exact expectation of the score-function estimator with the given
    critic, coordinate by coordinate.

    With the joint-history critic (or any critic whose conditional
    expectation recovers it) this is the true policy gradient.  Tabular
    coordinates use the cancelled form, so zero-probability actions report
    their genuine partial derivative.
    """
    if not policies.gradient_bearing:
        raise UnsupportedParameterizationError(
            "expected gradients need tabular or softmax policies"
        )
    variant = _table_variant(tables)
    value = _critic_lookup(tables, variant, vis)
    if coords is None:
        coords = gradient_coordinates(model, policies, vis)
    g = np.zeros(len(coords))
    JA = len(model.joint_actions)
    for hid, h in vis.histories():
        mass = vis.history_state_weight.get(hid)
        if mass is None or mass.sum() <= 0.0:
            continue
        projections = [project_history(model, h, i) for i in range(model.agents)]
        dists = [policies.dist(i, projections[i]) for i in range(model.agents)]
        for ja in range(JA):
            acts = model.joint_actions[ja]
            probs = [float(dists[i][acts[i]]) for i in range(model.agents)]
            full = 1.0
            for p in probs:
                full *= p
            for i in range(model.agents):
                others = 1.0
                for j in range(model.agents):
                    if j != i:
                        others *= probs[j]
                if others <= 0.0:
                    continue
                # per-state critic average under the history-state weights
                q_mass = 0.0
                for s in model.live_states:
                    if mass[s] <= 0.0:
                        continue
                    q_mass += mass[s] * value(hid, s, ja, i)
                if policies[i].kind == "tabular":
                    g[coords.of(i, projections[i], acts[i])] += others * q_mass
                else:  # softmax: all coordinates of the row move
                    pi = dists[i]
                    base = others * probs[i] * q_mass
                    if base == 0.0:
                        continue
                    for b in range(model.n_actions[i]):
                        delta = 1.0 if b == acts[i] else 0.0
                        g[coords.of(i, projections[i], b)] += base * (
                            delta - float(pi[b])
                        )
    if scale == "distribution":
        g = g / vis.total_weight
    elif scale != "weights":
        raise ValueError(f"unknown scale {scale!r}")
    return coords, g


def policy_gradient(
    model: DecPomdpModel,
    policies: PolicySet,
    vis: VisitationTable | None = None,
    *,
    scale: str = "weights",
) -> tuple[GradientCoordinates, np.ndarray]:
    """Exact gradient of the expected discounted return with respect to the
    policy parameters (the joint-history-critic expectation)."""
    if vis is None:
        vis = compute_visitation(model, policies)
    q_joint, _ = history_value_tables(model, policies, vis)
    return expected_gradient(model, policies, vis, q_joint, scale=scale)


def finite_difference_gradient(
    model: DecPomdpModel,
    policies: PolicySet,
    *,
    eps: float = 1e-5,
) -> tuple[GradientCoordinates, np.ndarray]:
    """Central-difference gradient of the exact expected return, taken by
    re-running the whole visitation computation at perturbed parameters.
    Shares nothing with the analytic path beyond the forward model, which is
    what makes it a meaningful check.  Returned in ``weights`` scale.
    """
    if not policies.gradient_bearing:
        raise UnsupportedParameterizationError(
            "finite differences need tabular or softmax policies"
        )
    base_vis = compute_visitation(model, policies)
    coords = gradient_coordinates(model, policies, base_vis)
    # materialize every coordinate's row so perturbation can reach it
    for i, h, _a in coords.entries:
        policies.dist(i, h)
    g = np.zeros(len(coords))
    for n, (i, h, a) in enumerate(coords.entries):
        pol = policies[i]
        row = pol.rows[h]
        old = row[a]
        vals = []
        for sign in (+1.0, -1.0):
            row[a] = old + sign * eps
            vis = compute_visitation(model, policies)
            vals.append(expected_return(model, vis))
        row[a] = old
        g[n] = (vals[0] - vals[1]) / (2.0 * eps)
    return coords, g


# ---------------------------------------------------------------------------
# exact moments of the single-sample estimator
# ---------------------------------------------------------------------------


@dataclass
class GradientMoments:
    """Per-coordinate first and second moments (and their variance) of the
    single-sample estimator g = Q(key) * score under the normalized
    visitation distribution."""

    variant: str
    coords: GradientCoordinates
    mean: np.ndarray
    second_moment: np.ndarray
    variance: np.ndarray
    trace_covariance: float


def gradient_moments(
    model: DecPomdpModel,
    policies: PolicySet,
    vis: VisitationTable,
    tables,
    *,
    coords: GradientCoordinates | None = None,
) -> GradientMoments:
    """Exact mean, per-coordinate second moment, and total variance of the
    single-sample estimator.

    The estimator only ever lands on keys the policy can produce, so
    zero-probability coordinates have both moments zero here even though
    their cancelled-form expected gradient need not be; the two views agree
    wherever the policy has support.
    """
    if not policies.gradient_bearing:
        raise UnsupportedParameterizationError(
            "estimator moments need tabular or softmax policies"
        )
    variant = _table_variant(tables)
    value = _critic_lookup(tables, variant, vis)
    if coords is None:
        coords = gradient_coordinates(model, policies, vis)
    mean = np.zeros(len(coords))
    second = np.zeros(len(coords))
    Z = vis.total_weight
    JA = len(model.joint_actions)
    for hid, h in vis.histories():
        mass = vis.history_state_weight.get(hid)
        if mass is None or mass.sum() <= 0.0:
            continue
        projections = [project_history(model, h, i) for i in range(model.agents)]
        dists = [policies.dist(i, projections[i]) for i in range(model.agents)]
        jp = joint_action_probs(model, policies, h)
        for ja in range(JA):
            if jp[ja] <= 0.0:
                continue
            acts = model.joint_actions[ja]
            for s in model.live_states:
                if mass[s] <= 0.0:
                    continue
                w = (mass[s] * jp[ja]) / Z
                for i in range(model.agents):
                    qv = value(hid, s, ja, i)
                    for (hi, b), sc in policies[i].score_coords(
                        projections[i], acts[i]
                    ):
                        n = coords.of(i, hi, b)
                        est = qv * sc
                        mean[n] += w * est
                        second[n] += w * est * est
    variance = second - mean**2
    return GradientMoments(
        variant=variant,
        coords=coords,
        mean=mean,
        second_moment=second,
        variance=variance,
        trace_covariance=float(variance.sum()),
    )


def sample_gradient(
    model: DecPomdpModel,
    policies: PolicySet,
    vis: VisitationTable,
    tables,
    draw: tuple,
) -> dict:
    """Single-draw gradient estimate at one sampled key.

    ``draw`` is ``(h, s, ja)`` — a joint history (tuple or interned id), a
    state index, and a joint action index.  Returns the sparse estimate as a
    map from policy coordinate ``(agent, private history, action)`` to value:
    the critic value at the variant's key times each agent's score at the
    played action.  Its expectation over draws from the normalized visitation
    distribution is exactly ``gradient_moments(...).mean``.
    """
    h, s, ja = draw
    hid = h if isinstance(h, int) else vis.interner.id_of(h)
    history = vis.interner.history(hid)
    mass = vis.history_state_weight.get(hid)
    if mass is None or mass[s] <= 0.0 or joint_action_probs(
        model, policies, history
    )[ja] <= 0.0:
        raise ValueComputationError(
            f"draw (history {history}, state {model.state_names[s]}, "
            f"joint action {model.joint_actions[ja]}) is not reachable"
        )
    variant = _table_variant(tables)
    value = _critic_lookup(tables, variant, vis)
    acts = model.joint_actions[ja]
    out: dict = {}
    for i in range(model.agents):
        qv = value(hid, s, ja, i)
        proj = project_history(model, history, i)
        for (hi, b), sc in policies[i].score_coords(proj, acts[i]):
            key = (i, hi, b)
            out[key] = out.get(key, 0.0) + qv * sc
    return out


def score_coefficients(
    model: DecPomdpModel,
    policies: PolicySet,
    vis: VisitationTable,
    tables,
) -> dict:
    """Decompose the expected gradient in the score basis.

    Writing the estimator's expectation as a weighted sum of score functions,
    E[g] = sum over (agent i, private history, action) of
    coefficient * grad log pi_i(action; private history), the coefficient of
    each term is the visitation-weighted critic mass on the keys compatible
    with that (private history, action) pair:

        coeff(i, h_i, a_i) = sum over compatible (h, s, a)
                             of eta(h) * pi(a|h) * value(key).

    Returned as a map from ``(agent, private history, action)`` to the
    coefficient.  Unlike the gradient coordinates themselves, these carry no
    score factor, so they are well defined for any gradient-bearing policy
    and make the update's per-action pull directly comparable across
    parameterizations.
    """
    variant = _table_variant(tables)
    value = _critic_lookup(tables, variant, vis)
    JA = len(model.joint_actions)
    out: dict = {}
    for hid, h in vis.histories():
        mass = vis.history_state_weight.get(hid)
        if mass is None or mass.sum() <= 0.0:
            continue
        projections = [project_history(model, h, i) for i in range(model.agents)]
        jp = joint_action_probs(model, policies, h)
        for ja in range(JA):
            if jp[ja] <= 0.0:
                continue
            acts = model.joint_actions[ja]
            for i in range(model.agents):
                q_mass = sum(
                    float(mass[s]) * value(hid, s, ja, i)
                    for s in model.live_states
                    if mass[s] > 0.0
                )
                key = (i, projections[i], acts[i])
                out[key] = out.get(key, 0.0) + jp[ja] * q_mass
    return out


def value_variance(vis: VisitationTable, table: ValueTable) -> float:
    """Variance of the critic value under the visitation distribution over
    the table's own key space.  For an individual table this is the variance
    over that agent's (history, action) pairs; for the joint-history table
    over (joint history, joint action); and so on."""
    model = vis.model
    Z = vis.total_weight
    mean = 0.0
    second = 0.0

    def add(w: float, qv: float):
        nonlocal mean, second
        mean += w * qv
        second += w * qv * qv

    if table.variant == INDIVIDUAL:
        for (hi, a), w in vis.agent_history_action_weight(table.agent).items():
            if w > 0.0:
                add(w / Z, table.q[(hi, a)])
    elif table.variant == STATE:
        for (s, ja), qv in table.q.items():
            add(vis.state_action_weight[s, ja] / Z, qv)
    elif table.variant == TIMED_STATE:
        g = model.discount
        for t, layer in enumerate(vis.layers):
            for hid, mass in layer.items():
                jp = joint_action_probs(
                    model, vis.policies, vis.interner.history(hid)
                )
                for ja in range(len(model.joint_actions)):
                    if jp[ja] <= 0.0:
                        continue
                    for s in model.live_states:
                        if mass[s] > 0.0:
                            add(
                                g**t * mass[s] * jp[ja] / Z,
                                table.q[((t, s), ja)],
                            )
    else:
        value = _critic_lookup(table, table.variant, vis)
        for hid, h in vis.histories():
            mass = vis.history_state_weight[hid]
            jp = joint_action_probs(model, vis.policies, h)
            for ja in range(len(model.joint_actions)):
                if jp[ja] <= 0.0:
                    continue
                if table.variant == HISTORY_STATE:
                    for s in model.live_states:
                        if mass[s] > 0.0:
                            add(mass[s] * jp[ja] / Z, value(hid, s, ja, 0))
                else:
                    add(float(mass.sum()) * jp[ja] / Z, value(hid, 0, ja, 0))
    return float(second - mean * mean)


def mean_conditional_value_variance(
    vis: VisitationTable, tables, agent: int
) -> float:
    """Law-of-total-variance inner term: the variance of the critic value
    that remains after conditioning on what one agent sees and does,
    averaged over that agent's (history, action) pairs under visitation."""
    variant = _table_variant(tables)
    value = _critic_lookup(tables, variant, vis)
    model = vis.model
    groups: dict = {}  # (h_i, a_i) -> [total weight, sum, sum of squares]
    for hid, h in vis.histories():
        mass = vis.history_state_weight[hid]
        hi = project_history(model, h, agent)
        jp = joint_action_probs(model, vis.policies, h)
        for ja in range(len(model.joint_actions)):
            if jp[ja] <= 0.0:
                continue
            a_i = model.joint_actions[ja][agent]
            acc = groups.setdefault((hi, a_i), [0.0, 0.0, 0.0])
            if variant in (STATE, TIMED_STATE, HISTORY_STATE):
                for s in model.live_states:
                    if mass[s] <= 0.0:
                        continue
                    w = mass[s] * jp[ja]
                    qv = value(hid, s, ja, agent)
                    acc[0] += w
                    acc[1] += w * qv
                    acc[2] += w * qv * qv
            else:
                w = float(mass.sum()) * jp[ja]
                qv = value(hid, 0, ja, agent)
                acc[0] += w
                acc[1] += w * qv
                acc[2] += w * qv * qv
    total_w = sum(acc[0] for acc in groups.values())
    out = 0.0
    for acc in groups.values():
        if acc[0] <= 0.0:
            continue
        m = acc[1] / acc[0]
        out += acc[0] * (acc[2] / acc[0] - m * m)
    return float(out / total_w)


def conditional_state_value_variance(
    vis: VisitationTable, state_table: ValueTable, h: tuple, ja: int
) -> float:
    """Variance over the belief at a joint history of the state-critic value
    for a fixed joint action: how much the state critic disagrees with
    itself across states the history cannot distinguish."""
    if state_table.variant not in (STATE, TIMED_STATE):
        raise VariantMismatchError(
            "conditional state-value variance needs a state-keyed table"
        )
    belief = vis.belief_over_states(h)
    model = vis.model
    if belief is None or not hasattr(belief, "__len__"):
        raise ValueError("history has no defined belief")
    if state_table.variant == TIMED_STATE:
        t = vis.history_timestep[vis.interner.lookup(h)]
        key = lambda s: ((t, s), ja)
    else:
        key = lambda s: (s, ja)
    mean = 0.0
    second = 0.0
    for s in model.live_states:
        p = float(belief[s])
        if p <= 0.0:
            continue
        qv = state_table.q[key(s)]
        mean += p * qv
        second += p * qv * qv
    return float(second - mean * mean)


# ---------------------------------------------------------------------------
# bias report: state critic vs joint-history critic
# ---------------------------------------------------------------------------


@dataclass
class BiasReport:
    """Where and by how much the state critic disagrees with the unbiased
    joint-history critic, both at the gradient level (per differentiable
    coordinate) and at the value level (per reachable joint history and
    joint action, counterfactual actions included)."""

    gradient_rows: dict  # (agent, history, action) -> (g_history, g_state)
    value_rows: dict  # (history id, joint action) -> (q_history, avg q_state)
    max_gradient_gap: float
    max_gradient_coordinate: tuple | None
    max_value_gap: float
    max_value_key: tuple | None
    has_gradient_bias: bool
    has_value_bias: bool


def bias_report(
    model: DecPomdpModel,
    policies: PolicySet,
    vis: VisitationTable,
    *,
    state_variant: str = STATE,
    tol: float = 1e-9,
    joint_table: ValueTable | None = None,
    state_table: ValueTable | None = None,
) -> BiasReport:
    q_joint = joint_table
    if q_joint is None:
        q_joint, _ = history_value_tables(model, policies, vis)
    q_state = state_table
    if q_state is None:
        if state_variant == STATE:
            q_state = state_value_table(model, policies, vis)
        elif state_variant == TIMED_STATE:
            q_state = timed_state_value_table(model, policies, vis)
        else:
            raise VariantMismatchError(
                f"state_variant must be state-keyed, got {state_variant!r}"
            )
    elif q_state.variant not in (STATE, TIMED_STATE):
        raise VariantMismatchError(
            f"state_table must be state-keyed, got {q_state.variant!r}"
        )
    coords, g_h = expected_gradient(model, policies, vis, q_joint)
    _, g_s = expected_gradient(model, policies, vis, q_state, coords=coords)
    gradient_rows = {
        entry: (float(g_h[n]), float(g_s[n]))
        for n, entry in enumerate(coords.entries)
    }
    state_lookup = _critic_lookup(q_state, q_state.variant, vis)
    value_rows = {}
    max_v = 0.0
    max_v_key = None
    for hid, h in vis.histories():
        belief = vis.belief_over_states(h)
        if not hasattr(belief, "__len__"):
            continue
        for ja in range(len(model.joint_actions)):
            qh = q_joint.q[(hid, ja)]
            try:
                qs = sum(
                    float(belief[s]) * state_lookup(hid, s, ja, 0)
                    for s in model.live_states
                    if belief[s] > 0.0
                )
            except KeyError:
                continue  # undefined timed key for a counterfactual action
            value_rows[(hid, ja)] = (float(qh), float(qs))
            gap = abs(qh - qs)
            if gap > max_v:
                max_v, max_v_key = gap, (hid, ja)
    gaps = np.array([abs(a - b) for a, b in gradient_rows.values()])
    max_g = float(gaps.max(initial=0.0))
    max_g_coord = None
    if len(gaps) and max_g > 0.0:
        max_g_coord = coords.entries[int(gaps.argmax())]
    return BiasReport(
        gradient_rows=gradient_rows,
        value_rows=value_rows,
        max_gradient_gap=max_g,
        max_gradient_coordinate=max_g_coord,
        max_value_gap=max_v,
        max_value_key=max_v_key,
        has_gradient_bias=max_g > tol,
        has_value_bias=max_v > tol,
    )


# ---------------------------------------------------------------------------
# episode sampling
# ---------------------------------------------------------------------------


@dataclass
class Episode:
    """One sampled trajectory.  ``states`` has one more entry than
    ``joint_actions`` when the episode ended by entering a terminal state;
    ``joint_observations[t]`` is the observation received after
    ``joint_actions[t]`` (absent for the final transition into a terminal
    state).  ``initial_observation`` is set only for models with one."""

    states: list
    joint_actions: list
    joint_observations: list
    rewards: list
    initial_observation: int | None = None
    seed: object = None  # generating seed, when the caller sampled by seed
    truncated: bool = False  # cut by an external step cap before the model's own end
    snapshot: object = None  # id of the policy snapshot that generated it

    @property
    def length(self) -> int:
        return len(self.joint_actions)

    def total_return(self, discount: float) -> float:
        return float(sum(r * discount**t for t, r in enumerate(self.rewards)))


def sample_episode(
    model: DecPomdpModel,
    policies: PolicySet,
    rng: np.random.Generator,
    *,
    max_steps: int | None = None,
) -> Episode:
    """Simulate one episode under the joint policy.

    Episodes follow the undiscounted dynamics; a declared horizon forcibly
    ends the episode.  For never-terminating discounted models the sampler
    cuts off at the same depth the exact engines use; that truncation is a
    property of the sampler, deliberately left visible rather than
    corrected, because the exact tables are computed under the same measure.
    """
    depth = max_depth_for(model) if max_steps is None else max_steps
    JO = len(model.joint_observations)
    s = int(rng.choice(model.n_states, p=model.start))
    init_obs = None
    agent_histories = [() for _ in range(model.agents)]
    if model.has_initial_observation:
        init_obs = int(rng.choice(JO, p=model.initial_observation[s]))
        for i in range(model.agents):
            agent_histories[i] = (model.joint_observations[init_obs][i],)
    states = [s]
    joint_actions: list = []
    joint_observations: list = []
    rewards: list = []
    for _t in range(depth):
        if model.terminal[s]:
            break
        acts = tuple(
            int(rng.choice(model.n_actions[i], p=policies.dist(i, agent_histories[i])))
            for i in range(model.agents)
        )
        ja = model.joint_action_index(acts)
        joint_actions.append(ja)
        rewards.append(float(model.reward[s, ja]))
        s2 = int(rng.choice(model.n_states, p=model.transition[s, ja]))
        states.append(s2)
        s = s2
        if model.terminal[s2]:
            break
        jo = int(rng.choice(JO, p=model.observation[ja, s2]))
        joint_observations.append(jo)
        for i in range(model.agents):
            agent_histories[i] = agent_histories[i] + (
                acts[i],
                model.joint_observations[jo][i],
            )
    # The truncation flag marks episodes cut short of the model's own end: the
    # state was still live and the declared horizon (if any) not yet reached.
    # Never-terminating discounted models are cut at the engines' depth by
    # design, which is not flagged.
    truncated = (
        not model.terminal[s]
        and len(joint_actions) == depth
        and model.horizon is not None
        and len(joint_actions) < model.horizon
    )
    return Episode(
        states, joint_actions, joint_observations, rewards, init_obs,
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# exact-gradient and stochastic-gradient training loops
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    returns: list  # exact expected return per iterate (before the update)
    aborted_at: int | None = None  # iterate index of a non-finite update

    @property
    def final_return(self) -> float:
        return self.returns[-1]


def _apply_gradient(policies: PolicySet, coords: GradientCoordinates, step: np.ndarray):
    for n, (i, h, a) in enumerate(coords.entries):
        policies[i].rows[h][a] += step[n]


def joint_policy_gradient(model: DecPomdpModel, policies, vis, q_joint) -> dict:
    """Exact expected gradient for a centralized softmax controller over
    joint actions: the visitation-weighted score expectation against the
    joint-history critic, as a map (joint history, joint action) -> value."""
    grads: dict = {}
    for hid, h in vis.histories():
        hw = vis.history_weight.get(hid, 0.0)
        if hw <= 0.0:
            continue
        jp = policies.joint_action_probs(model, h)
        for ja in range(len(model.joint_actions)):
            if jp[ja] <= 0.0:
                continue
            q = q_joint.q[(hid, ja)]
            for (hh, b), sc in policies.score_coords(h, ja):
                key = (hh, b)
                grads[key] = grads.get(key, 0.0) + hw * float(jp[ja]) * q * sc
    return grads


def gd_train(
    model: DecPomdpModel,
    policies,
    *,
    variant: str = JOINT_HISTORY,
    iterations: int = 100,
    learning_rate: float = 0.1,
    maximize: bool = True,
) -> TrainResult:
    """Deterministic gradient ascent (or descent) on the exact expected
    return, recomputing the visitation and critic tables each iterate and
    updating all agents synchronously.  Softmax policies only: tabular rows
    would leave the simplex under an unconstrained step.

    Accepts either a per-agent PolicySet or a centralized joint-action
    softmax controller; the latter always trains against the joint-history
    critic (``variant`` is ignored because no other critic keys a joint
    controller's score coordinates).
    """
    joint_mode = not hasattr(policies, "policies")
    if joint_mode:
        if getattr(policies, "kind", None) != "softmax":
            raise UnsupportedParameterizationError(
                "gd_train requires softmax policies"
            )
    else:
        for p in policies.policies:
            if p.kind != "softmax":
                raise UnsupportedParameterizationError(
                    "gd_train requires softmax policies"
                )
    sign = 1.0 if maximize else -1.0
    returns = []
    for it in range(iterations):
        vis = compute_visitation(model, policies)
        returns.append(expected_return(model, vis))
        if joint_mode:
            q_joint, _ = history_value_tables(model, policies, vis)
            grads = joint_policy_gradient(model, policies, vis, q_joint)
            if not all(np.isfinite(v) for v in grads.values()):
                return TrainResult(returns, aborted_at=it)
            for (h, b), v in grads.items():
                policies.rows[h][b] += sign * learning_rate * v
            continue
        tables = estimator_tables(model, policies, vis, variant)
        coords, g = expected_gradient(model, policies, vis, tables)
        step = sign * learning_rate * g
        if not np.all(np.isfinite(step)):
            return TrainResult(returns, aborted_at=it)
        for i, h, _a in coords.entries:
            policies[i].dist(h)  # materialize the row before updating it
        _apply_gradient(policies, coords, step)
    vis = compute_visitation(model, policies)
    returns.append(expected_return(model, vis))
    return TrainResult(returns)


def sgd_train(
    model: DecPomdpModel,
    policies: PolicySet,
    *,
    variant: str = JOINT_HISTORY,
    iterations: int = 100,
    learning_rate: float = 0.1,
    seed: int = 0,
    episodes_per_iterate: int = 1,
    maximize: bool = True,
    critic_refresh_every: int = 1,
) -> TrainResult:
    """Stochastic policy-gradient training with an exact critic: episodes
    are sampled, but the critic values multiplying the scores are the exact
    tables recomputed at each iterate's policy.

    Deterministic in ``seed``: the same seed replays bit-identically.

    ``critic_refresh_every > 1`` is a stale-critic mode for experimentation
    only: the exact tables are refreshed every k iterates instead of every
    iterate, so between refreshes the critic lags the policy and none of the
    exactness guarantees apply.
    """
    for p in policies.policies:
        if p.kind != "softmax":
            raise UnsupportedParameterizationError(
                "sgd_train requires softmax policies"
            )
    if critic_refresh_every < 1:
        raise ValueError("critic_refresh_every must be a positive integer")
    rng = np.random.default_rng(seed)
    sign = 1.0 if maximize else -1.0
    returns = []
    value = None
    crit_vis = None
    for it in range(iterations):
        vis = compute_visitation(model, policies)
        returns.append(expected_return(model, vis))
        if value is None or it % critic_refresh_every == 0:
            crit_vis = vis
            tables = estimator_tables(model, policies, vis, variant)
            value = _critic_lookup(tables, _table_variant(tables), vis)
        grads: dict = {}
        for _e in range(episodes_per_iterate):
            ep = sample_episode(model, policies, rng)
            h: tuple = () if ep.initial_observation is None else (ep.initial_observation,)
            for t in range(ep.length):
                ja = ep.joint_actions[t]
                s = ep.states[t]
                hid = crit_vis.interner.lookup(h)
                disc = model.discount**t
                for i in range(model.agents):
                    hi = project_history(model, h, i)
                    qv = value(hid, s, ja, i)
                    for (hh, b), sc in policies[i].score_coords(
                        hi, model.joint_actions[ja][i]
                    ):
                        key = (i, hh, b)
                        grads[key] = grads.get(key, 0.0) + disc * qv * sc
                if t < len(ep.joint_observations):
                    h = h + (ja, ep.joint_observations[t])
        scale = sign * learning_rate / episodes_per_iterate
        finite = all(np.isfinite(v) for v in grads.values())
        if not finite:
            return TrainResult(returns, aborted_at=it)
        for (i, hh, b), v in grads.items():
            policies[i].dist(hh)
            policies[i].rows[hh][b] += scale * v
    vis = compute_visitation(model, policies)
    returns.append(expected_return(model, vis))
    return TrainResult(returns)
