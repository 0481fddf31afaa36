"""Shared test fixtures and independent oracles."""

import numpy as np

from mdppo.environment import FELL_OFF, HIT_TARGET, RUNNING, TIMEOUT, StepResult
from mdppo.estimation import ProcessedBatch
from mdppo.rollout import Trajectory


class ScriptedEnv:
    """Deterministic 4-d observation env that ends after ``episode_len`` steps.

    Reward at step k (1-based) is k; the observation encodes the step count.
    """

    def __init__(self, episode_len=3, kind=HIT_TARGET):
        self.episode_len = episode_len
        self.kind = kind
        self.t = 0
        self.done = True

    def _obs(self):
        return np.array([float(self.t), 1.0, 0.0, 0.0])

    def reset(self, rng):
        self.t = 0
        self.done = False
        return self._obs()

    def step(self, action):
        self.t += 1
        end = self.t >= self.episode_len
        self.done = end
        kind = self.kind if end else RUNNING
        return StepResult(self._obs(), float(self.t), end, kind)


def make_trajectory(rng, length, policy_id=0, agent_id=0, order=0, kind=FELL_OFF,
                    rewards=None, bootstrap=None, obs_dim=4, action_dim=2):
    rewards = rng.normal(size=length) if rewards is None else np.asarray(rewards, dtype=float)
    terminal = kind in (HIT_TARGET, FELL_OFF, TIMEOUT)
    terminals = np.zeros(length, dtype=bool)
    terminals[-1] = terminal
    return Trajectory(
        policy_id=policy_id,
        agent_id=agent_id,
        order=order,
        states=rng.normal(size=(length, obs_dim)),
        actions=rng.normal(size=(length, action_dim)),
        rewards=rewards,
        next_states=rng.normal(size=(length, obs_dim)),
        terminals=terminals,
        behavior_log_density=rng.normal(-3.0, 1.0, size=length),
        behavior_value=rng.normal(size=length),
        t=np.arange(length),
        termination_kind=kind,
        bootstrap_value=float(rng.normal()) if bootstrap is None else bootstrap,
    )


def random_batch(rng, n, obs_dim=4, action_dim=2, behavior_log_density=None):
    return ProcessedBatch(
        states=rng.normal(size=(n, obs_dim)),
        actions=rng.normal(size=(n, action_dim)),
        rewards=rng.normal(size=n),
        behavior_log_density=(rng.normal(-3, 1, size=n) if behavior_log_density is None
                              else np.asarray(behavior_log_density, dtype=float)),
        values=rng.normal(size=n),
        advantages=rng.normal(size=n),
        value_targets=rng.normal(size=n),
        td_errors=rng.normal(size=n),
        policy_id=np.zeros(n, dtype=np.int64),
        agent_id=np.zeros(n, dtype=np.int64),
    )


def dense_forward_oracle(tensors, spec, x):
    """Per-layer forward pass written with explicit loops over units."""
    act = np.tanh if spec.activation == "tanh" else (lambda v: max(v, 0.0))
    h = list(map(float, x))
    for k in range(len(spec.hidden_layers)):
        W, b = tensors[f"hidden{k}.weight"], tensors[f"hidden{k}.bias"]
        h = [act(sum(h[r] * W[r, c] for r in range(len(h))) + b[c]) for c in range(W.shape[1])]
    out = {}
    if spec.has_policy:
        W, b = tensors["mean.weight"], tensors["mean.bias"]
        out["mean"] = np.array([sum(h[r] * W[r, c] for r in range(len(h))) + b[c]
                                for c in range(W.shape[1])])
        out["log_std"] = np.clip(tensors["log_std"], spec.log_std_min, spec.log_std_max)
    if spec.has_value:
        W, b = tensors["value.weight"], tensors["value.bias"]
        out["value"] = sum(h[r] * W[r, 0] for r in range(len(h))) + b[0]
    return out


def central_difference(f, x, h=1e-5):
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def gradcheck_error(analytic, numeric, floor=1e-6):
    """Largest elementwise relative error over coordinates with |grad| > floor."""
    mask = np.maximum(np.abs(analytic), np.abs(numeric)) > floor
    if not mask.any():
        return 0.0
    rel = np.abs(analytic - numeric)[mask] / np.maximum(np.abs(analytic), np.abs(numeric))[mask]
    return float(rel.max())


def _ratio(form, new_lp, old_lp, cfg):
    from mdppo.objectives import DENOM_EPS, EXPONENTIAL, FILTERED, FRACTIONAL

    p, q = np.exp(new_lp), np.exp(old_lp)
    if form in (FRACTIONAL, FILTERED):
        return np.exp(new_lp - old_lp)
    if form == DENOM_EPS:
        return p / (q + cfg.denom_eps)
    if form == EXPONENTIAL:
        return np.exp(p - q)
    return p - q


def kink_free_behavior(rng, form, new_lp, cfg, margin=1e-3):
    """Behaviour log-densities whose ratios sit at least ``margin`` from every clip corner."""
    from mdppo.objectives import SUBTRACTION

    eps = cfg.clip_epsilon
    kinks = np.array([-eps, eps] if form == SUBTRACTION else [1 - eps, 1 + eps])
    old = np.empty_like(new_lp)
    for k in range(len(new_lp)):
        while True:
            cand = new_lp[k] + rng.normal(0.0, 0.7)
            r = _ratio(form, new_lp[k], cand, cfg)
            if np.min(np.abs(r - kinks)) > margin:
                old[k] = cand
                break
    return old


def gradcheck_case(seed, regime, form, hidden=(6, 5), batch_size=12):
    """Max relative error between tape gradients and central differences for one random draw."""
    from mdppo.approximator import NetSpec, ParamSet, forward_policy, gradient, init_params, log_density
    from mdppo.objectives import FILTERED, LossConfig, critic_loss_fn, policy_loss_fn, shared_loss_fn

    rng = np.random.default_rng(seed)
    cfg = LossConfig(ratio_form=form, entropy_coef=0.01)
    head = "shared" if regime == "shared" else "gaussian_policy"
    pspec = NetSpec(4, hidden, head=head, log_std_init=-0.3)
    policy = init_params(pspec, rng)
    for k in policy:
        policy.tensors[k] = policy[k] + 0.3 * rng.normal(size=policy[k].shape)
    batch = random_batch(rng, batch_size)
    new_lp = log_density(forward_policy(policy, batch.states), batch.actions)
    batch.behavior_log_density = kink_free_behavior(rng, form, new_lp, cfg)
    if form == FILTERED:
        batch.behavior_log_density[:2] = -30.0  # masked by the filter

    if regime == "shared":
        arrays = dict(policy.tensors)
        fn = shared_loss_fn(pspec, batch, cfg)
    else:
        vspec = NetSpec(4, hidden, head="scalar_value")
        critic = init_params(vspec, rng)
        arrays = {"p." + k: v for k, v in policy.items()}
        arrays.update({"v." + k: v for k, v in critic.items()})
        pfn, vfn = policy_loss_fn(pspec, batch, cfg), critic_loss_fn(vspec, batch)

        def split(d, pre):
            return {k[len(pre):]: v for k, v in d.items() if k.startswith(pre)}

        def fn(p):
            return pfn(split(p, "p.")) + vfn(split(p, "v."))

    names = list(arrays)
    shapes = [arrays[n].shape for n in names]
    flat = np.concatenate([arrays[n].ravel() for n in names])

    def unflat(x):
        out, pos = {}, 0
        for n, s in zip(names, shapes):
            size = int(np.prod(s))
            out[n] = x[pos:pos + size].reshape(s)
            pos += size
        return out

    _, grads = gradient(arrays, fn)
    analytic = np.concatenate([grads[n].ravel() for n in names])
    numeric = central_difference(lambda x: float(fn(unflat(x))), flat)
    return gradcheck_error(analytic, numeric)
