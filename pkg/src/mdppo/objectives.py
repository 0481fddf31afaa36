"""Clipped surrogate objectives, value loss and the combined actor-critic loss.

Five importance-ratio forms are supported:

``fractional``
    r = pi / pi_old, evaluated as exp(log pi - log pi_old), clipped to [1-eps, 1+eps].
``fractional_filtered``
    same ratio; transitions with pi_old < filter_eps are removed before training.
``fractional_denom_eps``
    r = pi / (pi_old + denom_eps).
``exponential``
    r = exp(pi - pi_old) with the usual [1-eps, 1+eps] clip.
``subtraction``
    r = pi - pi_old, clipped to [-eps, eps]; no denominator at all.

Every per-sample objective is min(r * A, clip(r, lo, hi) * A).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .approximator import NetSpec, autodiff as ad
from .approximator import entropy, forward_both, forward_policy, forward_value, log_density
from .errors import ConfigError

log = logging.getLogger(__name__)

FRACTIONAL = "fractional"
FILTERED = "fractional_filtered"
DENOM_EPS = "fractional_denom_eps"
EXPONENTIAL = "exponential"
SUBTRACTION = "subtraction"
RATIO_FORMS = (FRACTIONAL, FILTERED, DENOM_EPS, EXPONENTIAL, SUBTRACTION)

# CLI spellings
RATIO_ALIASES = {
    "clip": FRACTIONAL,
    "filter": FILTERED,
    "denom-eps": DENOM_EPS,
    "exp": EXPONENTIAL,
    "sub": SUBTRACTION,
}


@dataclass(frozen=True)
class LossConfig:
    ratio_form: str = FRACTIONAL
    clip_epsilon: float | None = None  # None: 0.2 for ratio forms, 0.1 for subtraction
    value_coef: float = 0.5
    entropy_coef: float = 0.001
    denom_eps: float = 1e-8
    filter_eps: float = 1e-10
    log_ratio_cap: float = 20.0
    density_space: bool = True  # False: subtraction/exponential act on log-densities

    def __post_init__(self):
        form = RATIO_ALIASES.get(self.ratio_form, self.ratio_form)
        if form not in RATIO_FORMS:
            raise ConfigError(f"unknown ratio form {self.ratio_form!r}")
        object.__setattr__(self, "ratio_form", form)
        if self.clip_epsilon is None:
            object.__setattr__(self, "clip_epsilon", 0.1 if form == SUBTRACTION else 0.2)
        if self.clip_epsilon <= 0:
            raise ConfigError("clip_epsilon must be positive")
        if form != SUBTRACTION and self.clip_epsilon > 1:
            raise ConfigError("clip_epsilon must lie in (0, 1] for ratio forms")
        if self.value_coef < 0 or self.entropy_coef < 0:
            raise ConfigError("loss coefficients must be non-negative")
        if self.denom_eps <= 0 or self.filter_eps < 0:
            raise ConfigError("denom_eps must be positive and filter_eps non-negative")


def _minimum(a, b):
    if ad.any_tensor((a, b)):
        return ad.minimum(a, b)
    return np.minimum(a, b)


def _where(mask, a, b):
    if ad.any_tensor((a, b)):
        return ad.where(mask, a, b)
    return np.where(mask, a, b)


def clipped_objective(ratio, advantage, lo: float, hi: float):
    """min(r * A, clip(r, lo, hi) * A), elementwise."""
    return _minimum(ratio * advantage, ad.op_clip(ratio, lo, hi) * advantage)


def surrogate_clip(new_log_density, behavior_log_density, advantage, clip_epsilon: float,
                   log_ratio_cap: float = 20.0):
    """Fractional ratio in log space.

    The log-ratio is clamped to +-``log_ratio_cap`` so that a behaviour
    density of exactly zero still gives a finite (if large) objective.
    """
    old = np.maximum(np.asarray(behavior_log_density, dtype=np.float64), -np.finfo(float).max)
    log_ratio = ad.op_clip(new_log_density - old, -log_ratio_cap, log_ratio_cap)
    ratio = ad.op_exp(log_ratio)
    return clipped_objective(ratio, advantage, 1.0 - clip_epsilon, 1.0 + clip_epsilon)


def surrogate_subtraction(new_density, behavior_density, advantage, clip_epsilon: float,
                          ratio_bound: float | None = None):
    """Difference ratio r = pi - pi_old clipped to [-eps, eps].

    ``|r|`` is first clamped to ``ratio_bound`` (default 10/eps) because a
    density, unlike a probability, is unbounded above.
    """
    bound = 10.0 / clip_epsilon if ratio_bound is None else ratio_bound
    ratio = new_density - np.asarray(behavior_density, dtype=np.float64)
    n_clamped = int(np.sum(np.abs(ad.value_of(ratio)) >= bound))
    if n_clamped:
        log.debug("density-difference clamp hit on %d samples", n_clamped)
    ratio = ad.op_clip(ratio, -bound, bound)
    return clipped_objective(ratio, advantage, -clip_epsilon, clip_epsilon)


def surrogate_variant(form: str, new_log_density, behavior_log_density, advantage,
                      config: LossConfig):
    """Per-sample surrogate for any ratio form, from log-densities."""
    form = RATIO_ALIASES.get(form, form)
    eps = config.clip_epsilon
    old_logp = np.asarray(behavior_log_density, dtype=np.float64)
    with np.errstate(under="ignore"):
        old_density = np.exp(old_logp)
    if form == FRACTIONAL:
        return surrogate_clip(new_log_density, old_logp, advantage, eps, config.log_ratio_cap)
    if form == FILTERED:
        keep = old_density >= config.filter_eps
        safe_old = np.where(keep, old_logp, 0.0)
        obj = surrogate_clip(new_log_density, safe_old, advantage, eps, config.log_ratio_cap)
        return _where(keep, obj, 0.0)
    if form == DENOM_EPS:
        ratio = ad.op_exp(new_log_density) / (old_density + config.denom_eps)
        return clipped_objective(ratio, advantage, 1.0 - eps, 1.0 + eps)
    if form == EXPONENTIAL:
        if config.density_space:
            diff = ad.op_exp(new_log_density) - old_density
        else:
            diff = new_log_density - np.maximum(old_logp, -np.finfo(float).max)
        ratio = ad.op_exp(ad.op_clip(diff, -config.log_ratio_cap, config.log_ratio_cap))
        return clipped_objective(ratio, advantage, 1.0 - eps, 1.0 + eps)
    if form == SUBTRACTION:
        if config.density_space:
            return surrogate_subtraction(ad.op_exp(new_log_density), old_density, advantage, eps)
        old = np.maximum(old_logp, -np.finfo(float).max)
        return surrogate_subtraction(new_log_density, old, advantage, eps,
                                     ratio_bound=config.log_ratio_cap)
    raise ConfigError(f"unknown ratio form {form!r}")


def value_loss(value_prediction, value_target):
    diff = value_target - value_prediction
    return diff * diff


def combined_objective(surrogate, v_loss, ent, config: LossConfig):
    """Scalar to maximise: mean surrogate - c_v * mean value loss + c_e * mean entropy."""
    return surrogate.mean() - config.value_coef * v_loss.mean() + config.entropy_coef * ent


def _mean(x):
    return x.mean() if isinstance(x, ad.Tensor) else np.mean(x)


# -- differentiable loss closures ---------------------------------------------------
#
# Each factory returns ``fn(tensors) -> Tensor`` suitable for
# ``approximator.gradient``; ``stats`` is filled with detached diagnostics.


def policy_loss_fn(spec: NetSpec, batch, config: LossConfig, stats: dict | None = None):
    """Negated clipped surrogate plus entropy bonus, for a policy-only network."""

    def fn(p):
        dist = forward_policy(p, batch.states, spec)
        logp = log_density(dist, batch.actions)
        surr = surrogate_variant(config.ratio_form, logp, batch.behavior_log_density,
                                 batch.advantages, config)
        ent = entropy(dist)
        if stats is not None:
            stats["surrogate"] = float(np.mean(ad.value_of(surr)))
            stats["entropy"] = float(ad.value_of(ent))
        return -(_mean(surr) + config.entropy_coef * ent)

    return fn


def critic_loss_fn(spec: NetSpec, batch, stats: dict | None = None):
    def fn(p):
        pred = forward_value(p, batch.states, spec)
        loss = _mean(value_loss(pred, batch.value_targets))
        if stats is not None:
            stats["value_loss"] = float(ad.value_of(loss))
        return loss

    return fn


def shared_loss_fn(spec: NetSpec, batch, config: LossConfig, stats: dict | None = None):
    """Negated combined objective for a network whose trunk feeds both heads."""

    def fn(p):
        dist, pred = forward_both(p, batch.states, spec)
        logp = log_density(dist, batch.actions)
        surr = surrogate_variant(config.ratio_form, logp, batch.behavior_log_density,
                                 batch.advantages, config)
        vl = value_loss(pred, batch.value_targets)
        ent = entropy(dist)
        if stats is not None:
            stats["surrogate"] = float(np.mean(ad.value_of(surr)))
            stats["value_loss"] = float(np.mean(ad.value_of(vl)))
            stats["entropy"] = float(ad.value_of(ent))
        return -combined_objective(surr, vl, ent, config)

    return fn
