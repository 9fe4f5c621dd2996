"""A policy whose time-averaged action frequencies never converge.

The chain domain has a single live state and a deterministic, clock-driven
joint policy that plays action pattern 0,1 and then doubles each run
length: 0,1,0,0,1,1,0,0,0,0,... The fraction of 1s among the first N steps
therefore oscillates forever between 1/3 and 1/2 — so "the probability of
an action given the state", read as a long-run frequency, does not exist.

The discounted visitation average, by contrast, converges for any
discount below one, which is exactly why the analysis pipeline is built
on discounted weights.
"""

from decpg import candidate_action_distributions, get_domain

bundle = get_domain("chain")
model = bundle.model
loop = model.state_index("loop")
both_one = model.joint_action_index(model.joint_action_by_names(("1", "1")))

cand = candidate_action_distributions(model, bundle.reference_policies, loop, n_times=330)

print("fraction of '1' joint actions among the first N steps:")
for n in (2, 3, 4, 6, 8, 12, 16, 24, 32, 48):
    avg = cand.running_average[n - 1][both_one]
    print(f"  N = {n:3d}: {avg:.6f}" + ("   <- exactly 1/2" if avg == 0.5 else
                                         "   <- exactly 1/3" if avg == 1 / 3 else ""))
print()
print(f"time-average converged within the settling window? {cand.average_converged}")
print(f"per-step (limiting) sequence settled?              {cand.limiting_converged}")
print()

partial = cand.discounted_partial
tail = max(
    max(abs(a - b) for a, b in zip(p, partial[-1])) for p in partial[299:]
)
print("the discounted candidate does converge:")
print(f"  discounted Pr(1,1 | loop) = {cand.discounted[both_one]:.6f}")
print(f"  partial-sum spread from depth 300 on: {tail:.1e}")
