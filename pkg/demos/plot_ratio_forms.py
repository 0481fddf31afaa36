"""
Importance ratios when the behaviour density collapses
======================================================

The clipped surrogate divides by the behaviour policy's density.  When that
density underflows to zero the plain quotient is undefined, so five ratio
forms are available.  This script evaluates each of them on a batch whose
behaviour densities range from 1 down to exactly 0.

"""

import numpy as np

from mdppo.approximator import NetSpec, gradient, init_params
from mdppo.estimation import ProcessedBatch
from mdppo.objectives import RATIO_FORMS, LossConfig, policy_loss_fn, surrogate_variant

rng = np.random.default_rng(1)
spec = NetSpec(4, (16,))
params = init_params(spec, rng)

n = 6
with np.errstate(divide="ignore"):
    behavior = np.log(np.array([1.0, 1e-3, 1e-10, 1e-300, 0.0, 0.5]))

batch = ProcessedBatch(
    states=rng.normal(size=(n, 4)),
    actions=rng.normal(size=(n, 2)),
    rewards=np.zeros(n),
    behavior_log_density=behavior,
    values=np.zeros(n),
    advantages=np.array([1.0, -1.0, 2.0, -2.0, 1.0, 0.0]),
    value_targets=np.zeros(n),
    td_errors=np.zeros(n),
    policy_id=np.zeros(n, dtype=np.int64),
    agent_id=np.zeros(n, dtype=np.int64),
)

for form in RATIO_FORMS:
    cfg = LossConfig(form)
    loss, grads = gradient(params, policy_loss_fn(spec, batch, cfg))
    gnorm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    print("%-22s eps=%.2f  loss=% .4f  |grad|=%.4f" % (form, cfg.clip_epsilon, loss, gnorm))

# per-sample view: the same new log-density against shrinking behaviour densities
new = np.full(n, np.log(0.2))
for form in RATIO_FORMS:
    obj = surrogate_variant(form, new, behavior, np.ones(n), LossConfig(form))
    print("%-22s" % form, np.round(obj, 4))
