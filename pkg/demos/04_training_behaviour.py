"""Actor-critic training on the climb matrix game, all five variants.

The climb game hides its best joint action (reward 11) behind a severe
miscoordination penalty (-30), so decentralized learners — whatever their
critic sees — reliably settle on the safe corner worth 5. Only the joint
learner, which explores joint actions coherently, finds the 11.

Runs the frozen default configuration for each variant over a handful of
seeds and prints the exact value of the learned policy (computable in
closed form for these small models) plus its greedy argmax.
"""

from collections import Counter

import numpy as np

from decpg import (
    ALGORITHM_VARIANTS,
    default_config,
    get_domain,
    greedy_policies,
    joint_action_probs,
    train,
)

bundle = get_domain("climb")
model = bundle.model
SEEDS = range(10)

print(f"{'variant':8s} {'mean J':>8s} {'greedy=11':>10s}   modal greedy joint action")
for variant in ALGORITHM_VARIANTS:
    finals, greedy_hits, pairs = [], 0, []
    for seed in SEEDS:
        config = default_config("climb", variant)
        config.seed = seed
        curve = train(model, variant, config)
        finals.append(curve.final_return)
        if abs(curve.final_greedy_return - 11.0) < 1e-9:
            greedy_hits += 1
        frozen = greedy_policies(model, curve.policies)
        ja = int(np.argmax(joint_action_probs(model, frozen, ())))
        pairs.append(
            "+".join(model.action_names[i][a] for i, a in enumerate(model.joint_actions[ja]))
        )
    modal, count = Counter(pairs).most_common(1)[0]
    print(f"{variant:8s} {np.mean(finals):8.3f} {greedy_hits:7d}/10   {modal} ({count}/10)")

print()
print("The decentralized rows cluster near 5 (the shadowed safe corner);")
print("the joint learner's greedy policy is worth 11 on almost every seed.")
print()
print("The same loops on the private-bit guess game cannot beat zero for")
print("any decentralized critic — the other agent's bit is unguessable:")
guess = get_domain("guess")
for variant in ("iac", "iacc-hs"):
    finals = []
    for seed in SEEDS:
        config = default_config("guess", variant)
        config.seed = seed
        finals.append(train(guess.model, variant, config).final_return)
    print(f"  guess/{variant:8s} mean final J over 10 seeds = {np.mean(finals):+.4f}")
