"""Exact tables on the two-agent tiger benchmark.

Two agents stand before two doors; a tiger waits behind one. Each round
both agents either listen (cost, noisy private hint) or open a door
(ends the episode; terrible if it's the tiger's door, good otherwise,
catastrophic if the two agents disagree). The bundled reference policy
listens twice and then opens based on what each agent heard.

This script computes — exactly, by enumeration and linear solves — the
filtered beliefs, the state- and history-conditioned action values, and
the full final-decision value grid.
"""

from decpg import (
    compute_visitation,
    get_domain,
    history_value_tables,
    state_value_table,
)

bundle = get_domain("dectiger")
model = bundle.model
ref = bundle.reference_policies
vis = compute_visitation(model, ref)

listen = model.joint_action_index(model.joint_action_by_names(("listen", "listen")))
doors = {
    names: model.joint_action_index(model.joint_action_by_names(names))
    for names in (
        ("open-left", "open-left"),
        ("open-left", "open-right"),
        ("open-right", "open-left"),
        ("open-right", "open-right"),
    )
}
obs = {
    (o1, o2): model.joint_observation_index(
        (model.observation_names[0].index(o1), model.observation_names[1].index(o2))
    )
    for o1 in ("hear-left", "hear-right")
    for o2 in ("hear-left", "hear-right")
}
s_left = model.state_index("tiger-left")


def history(first, second):
    return (listen, obs[first], listen, obs[second])


print("=== filtered beliefs after two rounds of listening ===")
print("Pr(tiger-left | what the four ears heard), by count of hear-left:")
hl, hr = "hear-left", "hear-right"
for first, second in [
    ((hl, hl), (hl, hl)),
    ((hl, hl), (hl, hr)),
    ((hl, hr), (hl, hr)),
    ((hl, hr), (hr, hr)),
    ((hr, hr), (hr, hr)),
]:
    n = [first[0], first[1], second[0], second[1]].count(hl)
    b = vis.belief_over_states(history(first, second))
    print(f"  {n} of 4 heard left -> {b[s_left]:.3f}")

print()
print("=== state-conditioned action values (tiger on the left) ===")
q_state = state_value_table(model, ref, vis)
for names, ja in doors.items():
    print(f"  Q(left, {'+'.join(names)}) = {q_state.q[(s_left, ja)]:8.3f}")
print(f"  Q(left, listen+listen)       = {q_state.q[(s_left, listen)]:8.3f}")

q_joint, _ = history_value_tables(model, ref, vis)
root = vis.interner.lookup(())
print()
print(f"root value of listening: Q(empty history, listen+listen) = "
      f"{q_joint.q[(root, listen)]:.3f}")

print()
print("=== final-decision door values by joint history ===")
print("(rows: what the two agents heard; columns: the four door pairs)")
pairs = [(a, b) for a in (hl, hr) for b in (hl, hr)]
col_names = ["+".join(n) for n in doors]
print(f"  {'history (4 ears)':34s}" + "".join(f"{c:>22s}" for c in col_names))
for first in pairs:
    for second in pairs:
        hid = vis.interner.lookup(history(first, second))
        row = [q_joint.q[(hid, ja)] for ja in doors.values()]
        label = ",".join(o.removeprefix("hear-") for o in (*first, *second))
        print(f"  {label:34s}" + "".join(f"{v:22.2f}" for v in row))

print()
print("Agreeing on two hear-lefts makes open-right+open-right worth "
      f"{q_joint.q[(vis.interner.lookup(history((hl, hl), (hl, hl))), doors[('open-right', 'open-right')])]:.2f}; "
      "mixed-door columns are always -100 (the agents must agree).")
