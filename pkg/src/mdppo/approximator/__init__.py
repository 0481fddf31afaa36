"""Differentiable policy/value approximators built on a small numpy autodiff tape."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import TrainingError
from . import autodiff
from .checkpoint import load_checkpoint, save_checkpoint
from .distributions import GaussianDist, density, entropy, log_density, sample
from .network import NetSpec, ParamSet, forward_both, forward_policy, forward_value, init_params
from .optim import Adam, AdamState


def gradient(
    params: ParamSet | dict[str, np.ndarray], loss_fn: Callable[[dict], autodiff.Tensor], batch_id=None
) -> tuple[float, dict[str, np.ndarray]]:
    """Return ``(loss, d loss / d params)``.

    ``loss_fn`` receives a dict of tape tensors keyed like ``params`` and must
    build a scalar from the supported primitives.  A plain dict of arrays
    may stand in for ``params`` when differentiating several networks at once.
    """
    arrays = params.tensors if isinstance(params, ParamSet) else params
    loss, grads = autodiff.grad_of(loss_fn, arrays)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}", batch_id)
    return loss, grads


__all__ = [
    "Adam",
    "AdamState",
    "GaussianDist",
    "NetSpec",
    "ParamSet",
    "autodiff",
    "density",
    "entropy",
    "forward_both",
    "forward_policy",
    "forward_value",
    "gradient",
    "init_params",
    "load_checkpoint",
    "log_density",
    "sample",
    "save_checkpoint",
]
