"""Diagonal Gaussian action distributions.

The functions here accept plain numpy arrays or autodiff tensors, so the same
code evaluates densities during rollouts and inside differentiated losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GaussianDist:
    mean: np.ndarray
    log_std: np.ndarray

    @property
    def std(self):
        return ad.op_exp(self.log_std)

    @property
    def action_dim(self) -> int:
        return ad.value_of(self.log_std).shape[-1]


def log_density(dist: GaussianDist, action):
    """ln N(action; mean, diag(std^2)), summed over the last axis."""
    d = dist.action_dim
    if np.shape(ad.value_of(action))[-1] != d:
        raise ValueError(f"action has dimension {np.shape(ad.value_of(action))[-1]}, expected {d}")
    z = (action - dist.mean) * ad.op_exp(-dist.log_std)
    quad = ad.op_sum(z * z, axis=-1)
    return -0.5 * quad - ad.op_sum(dist.log_std, axis=-1) - 0.5 * d * LOG_2PI


def density(dist: GaussianDist, action):
    return ad.op_exp(log_density(dist, action))


def entropy(dist: GaussianDist):
    d = dist.action_dim
    return 0.5 * d * (1.0 + LOG_2PI) + ad.op_sum(dist.log_std, axis=-1)


def sample(dist: GaussianDist, rng: np.random.Generator) -> np.ndarray:
    mean = ad.value_of(dist.mean)
    std = np.exp(ad.value_of(dist.log_std))
    return mean + std * rng.standard_normal(mean.shape)
