"""Built-in toy domains, their reference policies, and a random-model source.

Each constructor returns a DomainBundle: a validated model, an optional
reference PolicySet, and a short behavioral note.  ``python -m decpg.domains
<outdir>`` writes every bundle's model as JSON (the checked-in golden files).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    DecPomdpModel,
    PolicySet,
    TabularPolicy,
    TimedPolicy,
    build_model,
    save_model,
)

DOMAIN_NAMES = (
    "climb",
    "morning",
    "guess",
    "dectiger",
    "beverage",
    "chain",
    "observable-climb",
)


@dataclass(frozen=True)
class DomainBundle:
    model: DecPomdpModel
    reference_policies: PolicySet | None
    notes: str


# ---------------------------------------------------------------------------
# one-step matrix games
# ---------------------------------------------------------------------------


def _matrix_game(name, actions1, actions2, payoff):
    """Two-agent one-shot game: single live state, any joint action ends the
    episode; payoff[(a1, a2)] in action-name space."""
    acts = [tuple(actions1), tuple(actions2)]
    transitions = {}
    rewards = {}
    observations_fn = {}
    for a1 in acts[0]:
        for a2 in acts[1]:
            transitions[("play", (a1, a2))] = {"done": 1.0}
            r = payoff.get((a1, a2), 0)
            if r != 0:
                rewards[("play", (a1, a2))] = r
    return build_model(
        name=name,
        agents=2,
        states=["play", "done"],
        actions=acts,
        observations=[("end",), ("end",)],
        start={"play": 1.0},
        transitions=transitions,
        rewards=rewards,
        observations_fn=observations_fn,
        discount=1.0,
        terminal=["done"],
        horizon=1,
    )


def _climb_payoff() -> dict:
    """Payoff layout (rows = agent 2's action, columns = agent 1's action):
        u1:  11  -30    0
        u2: -30    7    6
        u3:   0    0    5
    """
    rows = {
        "u1": (11, -30, 0),
        "u2": (-30, 7, 6),
        "u3": (0, 0, 5),
    }
    payoff = {}
    for a2, vals in rows.items():
        for a1, r in zip(("u1", "u2", "u3"), vals):
            payoff[(a1, a2)] = r
    return payoff


def climb_game() -> DomainBundle:
    """3x3 coordination game with a high-payoff/high-risk joint action."""
    model = _matrix_game("climb", ("u1", "u2", "u3"), ("u1", "u2", "u3"), _climb_payoff())
    return DomainBundle(
        model,
        None,
        "one-shot 3x3 game; greedy-against-uniform play drifts to (u3,u3)=5 "
        "even though (u1,u1)=11 is optimal",
    )


def morning_game() -> DomainBundle:
    """2x2 breakfast game: (cereal,milk)=3, (pickles,vodka)=1, mismatches 0."""
    payoff = {("cereal", "milk"): 3, ("pickles", "vodka"): 1}
    model = _matrix_game(
        "morning", ("cereal", "pickles"), ("milk", "vodka"), payoff
    )
    return DomainBundle(
        model,
        None,
        "one-shot 2x2 game used for the value-variance comparison of "
        "individual vs joint critics",
    )


# ---------------------------------------------------------------------------
# guess game (initial observations carry the other agent's target)
# ---------------------------------------------------------------------------


def guess_game() -> DomainBundle:
    """One-step game of mutual guessing under private random bits.

    The state is a pair of independent fair bits; each agent observes its own
    bit before acting (initial observation).  Reward: +10 if both actions
    match the *other* agent's bit, -10 if neither does, 0 otherwise.  The
    expected return is 0 for every product policy, so no decentralized
    learner can do better than 0 here.
    """
    bits = ("0", "1")
    states = [b1 + b2 for b1 in bits for b2 in bits]
    transitions = {}
    rewards = {}
    initial_observation = {}
    for s in states:
        b1, b2 = s[0], s[1]
        initial_observation[s] = {(b1, b2): 1.0}
        for a1 in bits:
            for a2 in bits:
                transitions[(s, (a1, a2))] = {"done": 1.0}
                m1 = a1 == b2
                m2 = a2 == b1
                if m1 and m2:
                    rewards[(s, (a1, a2))] = 10
                elif not m1 and not m2:
                    rewards[(s, (a1, a2))] = -10
    model = build_model(
        name="guess",
        agents=2,
        states=states + ["done"],
        actions=[bits, bits],
        observations=[bits, bits],
        start={s: 0.25 for s in states},
        transitions=transitions,
        rewards=rewards,
        observations_fn={},
        discount=1.0,
        terminal=["done"],
        initial_observation=initial_observation,
        horizon=1,
    )
    return DomainBundle(
        model,
        None,
        "one-step mutual-guessing game; joint-information critics see the "
        "+10/-10/0 split (variance 50) that individual critics average to 0",
    )


# ---------------------------------------------------------------------------
# dec-tiger
# ---------------------------------------------------------------------------

LISTEN_ACCURACY = 0.85


def dec_tiger(horizon: int = 25) -> DomainBundle:
    """Two agents in front of two doors hiding a tiger on one side.

    Joint listening keeps the state, costs -2, and gives each agent an
    independent observation naming the correct side with probability 0.85.
    Any door opening ends the episode: both open the tiger door -50, both
    open the safe door +20, opposite doors -100, a lone opener -101 on the
    tiger door / +9 on the safe door.

    The bundled reference policy listens twice, then opens the door opposite
    the majority-heard side, choosing uniformly between the doors on a tie.
    """
    acts = ("listen", "open-left", "open-right")
    obs = ("hear-left", "hear-right")
    states = ["tiger-left", "tiger-right", "done"]
    transitions = {}
    rewards = {}
    observations_fn = {}

    def door_reward(tiger_side, a1, a2):
        openers = [a for a in (a1, a2) if a != "listen"]
        tiger_door = "open-left" if tiger_side == "tiger-left" else "open-right"
        if len(openers) == 2:
            if a1 != a2:
                return -100
            return -50 if a1 == tiger_door else 20
        opener = openers[0]
        return -101 if opener == tiger_door else 9

    for s in ("tiger-left", "tiger-right"):
        correct = "hear-left" if s == "tiger-left" else "hear-right"
        p = {
            o1o2: (LISTEN_ACCURACY if o1o2[0] == correct else 1 - LISTEN_ACCURACY)
            * (LISTEN_ACCURACY if o1o2[1] == correct else 1 - LISTEN_ACCURACY)
            for o1o2 in ((a, b) for a in obs for b in obs)
        }
        transitions[(s, ("listen", "listen"))] = {s: 1.0}
        rewards[(s, ("listen", "listen"))] = -2
        observations_fn[(("listen", "listen"), s)] = p
        for a1 in acts:
            for a2 in acts:
                if a1 == a2 == "listen":
                    continue
                transitions[(s, (a1, a2))] = {"done": 1.0}
                rewards[(s, (a1, a2))] = door_reward(s, a1, a2)

    model = build_model(
        name="dectiger",
        agents=2,
        states=states,
        actions=[acts, acts],
        observations=[obs, obs],
        start={"tiger-left": 0.5, "tiger-right": 0.5},
        transitions=transitions,
        rewards=rewards,
        observations_fn=observations_fn,
        discount=1.0,
        terminal=["done"],
        horizon=horizon,
    )

    def reference_rule(h):
        # h = (a0, o1, a1, o2, ...): observations at odd positions
        t = len(h) // 2
        if t < 2:
            return 0  # listen
        hears = h[1::2]
        left = sum(1 for o in hears if o == 0)
        right = len(hears) - left
        if left > right:
            return 2  # open-right (tiger heard on the left)
        if right > left:
            return 1  # open-left
        return np.array([0.0, 0.5, 0.5])  # tie: uniform over the two doors

    reference = PolicySet(
        [TimedPolicy(len(acts), reference_rule) for _ in range(2)]
    )
    return DomainBundle(
        model,
        reference,
        "classic two-agent tiger problem; reference policy listens twice then "
        "opens opposite the majority-heard side (uniform on ties)",
    )


def soften_reference(bundle: DomainBundle, epsilon: float, kind: str = "tabular") -> PolicySet:
    """Full-support version of a bundle's reference policy: each row is
    (1-epsilon) * reference distribution + epsilon * uniform.  Rows materialize
    on first access, so the policy works on any history the engines reach."""
    from .model import SoftmaxPolicy

    if bundle.reference_policies is None:
        raise ValueError(f"domain {bundle.model.name} has no reference policy")
    out = []
    for agent_policy in bundle.reference_policies.policies:
        n = agent_policy.n_actions

        def make_default(p=agent_policy, n=n):
            def default(h):
                row = (1.0 - epsilon) * p.dist(h) + epsilon / n
                return np.log(row) if kind == "softmax" else row

            return default

        cls = SoftmaxPolicy if kind == "softmax" else TabularPolicy
        out.append(cls(n, default_row=make_default()))
    return PolicySet(out)


# ---------------------------------------------------------------------------
# beverage (single agent)
# ---------------------------------------------------------------------------


def beverage() -> DomainBundle:
    """Single-agent one-step serving task with an unobserved preference.

    The customer wants coffee or tea with equal probability; the server acts
    blind.  Correct serve +1, wrong serve -1.  Every history value is 0 while
    the state values are +/-1, giving conditional variance 1.
    """
    transitions = {}
    rewards = {}
    for s, want in (("want-coffee", "serve-coffee"), ("want-tea", "serve-tea")):
        for a in ("serve-coffee", "serve-tea"):
            transitions[(s, (a,))] = {"done": 1.0}
            rewards[(s, (a,))] = 1 if a == want else -1
    model = build_model(
        name="beverage",
        agents=1,
        states=["want-coffee", "want-tea", "done"],
        actions=[("serve-coffee", "serve-tea")],
        observations=[("none",)],
        start={"want-coffee": 0.5, "want-tea": 0.5},
        transitions=transitions,
        rewards=rewards,
        observations_fn={},
        discount=1.0,
        terminal=["done"],
        horizon=1,
    )
    return DomainBundle(
        model,
        None,
        "blind single-agent serving task: state critics disagree with the "
        "(correct) history critic pointwise but not in expectation",
    )


# ---------------------------------------------------------------------------
# oscillating chain (visitation-definition counterexample)
# ---------------------------------------------------------------------------


def doubling_sequence(t: int) -> int:
    """Deterministic 0/1 sequence in blocks 01 0011 00001111 ... : block j >= 1
    spans timesteps [2^j, 2^(j+1)) with 2^(j-1) zeros then 2^(j-1) ones; block
    0 is (0, 1).  Its running average oscillates between 1/3 and 1/2 forever."""
    if t < 2:
        return t
    j = t.bit_length() - 1
    return 0 if (t - (1 << j)) < (1 << (j - 1)) else 1


def oscillating_chain(discount: float = 0.9) -> DomainBundle:
    """Single-state never-terminating chain with a time-indexed deterministic
    policy whose empirical action frequencies never settle.  Used to compare
    the three candidate state-conditioned action distributions (limiting,
    running-average, discounted-visitation)."""
    transitions = {}
    observations_fn = {}
    for a1 in ("0", "1"):
        for a2 in ("0", "1"):
            transitions[("loop", (a1, a2))] = {"loop": 1.0}
            observations_fn[((a1, a2), "loop")] = {("tick", "tick"): 1.0}
    model = build_model(
        name="chain",
        agents=2,
        states=["loop"],
        actions=[("0", "1"), ("0", "1")],
        observations=[("tick",), ("tick",)],
        start={"loop": 1.0},
        transitions=transitions,
        rewards={},
        observations_fn=observations_fn,
        discount=discount,
        terminal=[],
    )

    def rule(h):
        return doubling_sequence(len(h) // 2)

    reference = PolicySet([TimedPolicy(2, rule) for _ in range(2)])
    return DomainBundle(
        model,
        reference,
        "single-state chain driven by the doubling 0/1 block sequence; "
        "running action frequencies oscillate between 1/3 and 1/2",
    )


# ---------------------------------------------------------------------------
# observable climb (zero-bias control)
# ---------------------------------------------------------------------------


def observable_climb() -> DomainBundle:
    """Climb game where each agent's initial observation names the state, so
    history carries exactly the state information and state-based critics are
    unbiased (the control case for the bias report)."""
    payoff = _climb_payoff()
    acts = ("u1", "u2", "u3")
    model = build_model(
        name="observable-climb",
        agents=2,
        states=["play", "done"],
        actions=[acts, acts],
        observations=[("play",), ("play",)],
        start={"play": 1.0},
        transitions={
            ("play", (a1, a2)): {"done": 1.0} for a1 in acts for a2 in acts
        },
        rewards={
            ("play", (a1, a2)): payoff[(a1, a2)]
            for a1 in acts
            for a2 in acts
            if payoff[(a1, a2)] != 0
        },
        observations_fn={},
        discount=1.0,
        terminal=["done"],
        initial_observation={"play": {("play", "play"): 1.0}},
        horizon=1,
    )
    return DomainBundle(
        model,
        None,
        "climb game with the state revealed by the initial observation; "
        "state and history values coincide on every key",
    )


# ---------------------------------------------------------------------------
# random models for the theorem suites
# ---------------------------------------------------------------------------


def make_random_model(
    seed: int,
    max_states: int = 4,
    max_actions: int = 3,
    max_observations: int = 3,
    max_horizon: int = 4,
) -> DecPomdpModel:
    """Small random 2-agent episodic model (dense dynamics, discount 1, forced
    termination at a random horizon).  Deterministic in the seed."""
    rng = np.random.default_rng(seed)
    n_live = int(rng.integers(2, max_states + 1))
    n_act = [int(rng.integers(2, max_actions + 1)) for _ in range(2)]
    n_obs = [int(rng.integers(2, max_observations + 1)) for _ in range(2)]
    horizon = int(rng.integers(2, max_horizon + 1))
    # Keep the joint-history tree enumerable: shrink the horizon until the
    # total node count (branching = joint actions x joint observations per
    # decision layer) stays small enough for the exact engines to stay fast.
    branching = n_act[0] * n_act[1] * n_obs[0] * n_obs[1]
    while horizon > 2 and sum(branching**t for t in range(horizon)) > 5000:
        horizon -= 1
    states = [f"s{k}" for k in range(n_live)] + ["done"]
    actions = [tuple(f"a{k}" for k in range(n)) for n in n_act]
    observations = [tuple(f"o{k}" for k in range(n)) for n in n_obs]
    joint_acts = [(a1, a2) for a1 in actions[0] for a2 in actions[1]]
    joint_obs = [(o1, o2) for o1 in observations[0] for o2 in observations[1]]

    def rand_dist(n):
        v = rng.random(n) + 0.05
        return v / v.sum()

    transitions = {}
    rewards = {}
    observations_fn = {}
    term_prob = 0.3 if rng.random() < 0.5 else 0.0
    for s in states[:-1]:
        for ja in joint_acts:
            p_done = term_prob * rng.random()
            d = rand_dist(n_live) * (1.0 - p_done)
            row = {states[k]: float(d[k]) for k in range(n_live)}
            if p_done > 0:
                row["done"] = float(p_done)
            transitions[(s, ja)] = row
            r = float(np.round(rng.uniform(-5, 5), 2))
            if r != 0.0:
                rewards[(s, ja)] = r
    for ja in joint_acts:
        for s2 in states[:-1]:
            d = rand_dist(len(joint_obs))
            observations_fn[(ja, s2)] = {
                jo: float(d[k]) for k, jo in enumerate(joint_obs)
            }
    start = rand_dist(n_live)
    return build_model(
        name=f"random-{seed}",
        agents=2,
        states=states,
        actions=actions,
        observations=observations,
        start={states[k]: float(start[k]) for k in range(n_live)},
        transitions=transitions,
        rewards=rewards,
        observations_fn=observations_fn,
        discount=1.0,
        terminal=["done"],
        horizon=horizon,
    )


def make_random_policies(model: DecPomdpModel, seed: int, kind: str = "softmax") -> PolicySet:
    """Full-support random policies; rows materialize per history on first
    access, deterministically in (seed, history)."""
    from .model import SoftmaxPolicy

    out = []
    for i in range(model.agents):
        n = model.n_actions[i]

        def make_default(i=i, n=n):
            def default(h):
                rng = np.random.default_rng(
                    (seed * 1_000_003 + i * 7919 + (hash(h) % 1_000_000_007)) % (2**63)
                )
                if kind == "softmax":
                    return rng.normal(0.0, 1.0, size=n)
                v = rng.random(n) + 0.2
                return v / v.sum()

            return default

        if kind == "softmax":
            out.append(SoftmaxPolicy(n, default_row=make_default()))
        else:
            out.append(TabularPolicy(n, default_row=make_default()))
    return PolicySet(out)


def get_domain(name: str) -> DomainBundle:
    table = {
        "climb": climb_game,
        "morning": morning_game,
        "guess": guess_game,
        "dectiger": dec_tiger,
        "beverage": beverage,
        "chain": oscillating_chain,
        "observable-climb": observable_climb,
    }
    try:
        return table[name]()
    except KeyError:
        raise ValueError(
            f"unknown domain {name!r}; choose from {', '.join(DOMAIN_NAMES)}"
        ) from None


def write_golden_models(outdir) -> list[str]:
    import pathlib

    outdir = pathlib.Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in DOMAIN_NAMES:
        bundle = get_domain(name)
        path = outdir / f"{name}.json"
        save_model(bundle.model, path)
        written.append(str(path))
    return written


if __name__ == "__main__":  # pragma: no cover
    import sys

    for p in write_golden_models(sys.argv[1] if len(sys.argv) > 1 else "."):
        print(p)
