"""
The roller task and a hand-written controller
=============================================

A point mass starts at the centre of a 10 x 10 plane and has to touch a
randomly placed target.  Pushing too hard sends it off the edge.

"""

import numpy as np

from mdppo.environment import HIT_TARGET, RollerEnv

env = RollerEnv()
rng = np.random.default_rng(0)

# the observation is [target - agent, velocity]
obs = env.reset(rng)
print("first observation:", obs)

# steer toward the target with a proportional controller
outcomes = {}
lengths = []
for episode in range(200):
    obs = env.reset(rng)
    steps = 0
    while not env.done:
        result = env.step(0.2 * obs[:2])
        obs = result.observation
        steps += 1
    outcomes[result.termination_kind] = outcomes.get(result.termination_kind, 0) + 1
    lengths.append(steps)

print("outcomes:", outcomes)
print("hit rate: %.3f" % (outcomes.get(HIT_TARGET, 0) / 200))
print("mean episode length: %.1f" % np.mean(lengths))

# a random policy rarely finds the target, which is what makes learning non-trivial
hits = 0
for episode in range(200):
    env.reset(rng)
    while not env.done:
        result = env.step(rng.normal(size=2))
    hits += result.termination_kind == HIT_TARGET
print("random policy hit rate: %.3f" % (hits / 200))
