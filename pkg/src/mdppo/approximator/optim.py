"""Adam with optional global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError
from .network import ParamSet


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> AdamState:
        return AdamState(
            self.step,
            {k: a.copy() for k, a in self.m.items()},
            {k: a.copy() for k, a in self.v.items()},
        )


class Adam:
    def __init__(
        self,
        lr: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        max_grad_norm: float | None = None,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.state = AdamState()

    def step(self, params: ParamSet, grads: dict[str, np.ndarray], batch_id=None) -> None:
        """Update ``params`` in place.  A non-finite gradient leaves everything untouched."""
        for name, g in grads.items():
            if not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient for {name}", batch_id)
        if self.max_grad_norm is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > self.max_grad_norm:
                scale = self.max_grad_norm / (norm + 1e-12)
                grads = {k: g * scale for k, g in grads.items()}

        st = self.state
        st.step += 1
        bc1 = 1.0 - self.beta1**st.step
        bc2 = 1.0 - self.beta2**st.step
        for name, g in grads.items():
            if name not in st.m:
                st.m[name] = np.zeros_like(g)
                st.v[name] = np.zeros_like(g)
            m, v = st.m[name], st.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params.tensors[name] = params.tensors[name] - self.lr * (m / bc1) / (
                np.sqrt(v / bc2) + self.eps
            )
        if not params.all_finite():
            raise TrainingError("parameters became non-finite after update", batch_id)
