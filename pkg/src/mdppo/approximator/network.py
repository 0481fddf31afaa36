"""Small fully-connected actor/critic networks with a diagonal-Gaussian policy head."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..errors import ConfigError
from . import autodiff as ad
from .distributions import GaussianDist

HEADS = ("gaussian_policy", "scalar_value", "shared")
ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class NetSpec:
    input_dim: int
    hidden_layers: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    head: str = "gaussian_policy"
    action_dim: int = 2
    log_std_min: float = -20.0
    log_std_max: float = 2.0
    log_std_init: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.head not in HEADS:
            raise ConfigError(f"unknown head {self.head!r}; expected one of {HEADS}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.head != "scalar_value" and self.action_dim < 1:
            raise ConfigError(f"action_dim must be >= 1, got {self.action_dim}")
        if any(h < 1 for h in self.hidden_layers):
            raise ConfigError("hidden layer sizes must be positive")
        if not self.log_std_min < self.log_std_max:
            raise ConfigError("log_std_min must be below log_std_max")

    @property
    def has_policy(self) -> bool:
        return self.head in ("gaussian_policy", "shared")

    @property
    def has_value(self) -> bool:
        return self.head in ("scalar_value", "shared")

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        """Ordered (name, shape) list; the flat parameter vector follows this order."""
        out = []
        width = self.input_dim
        for k, h in enumerate(self.hidden_layers):
            out += [(f"hidden{k}.weight", (width, h)), (f"hidden{k}.bias", (h,))]
            width = h
        if self.has_policy:
            out += [
                ("mean.weight", (width, self.action_dim)),
                ("mean.bias", (self.action_dim,)),
                ("log_std", (self.action_dim,)),
            ]
        if self.has_value:
            out += [("value.weight", (width, 1)), ("value.bias", (1,))]
        return out

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden_layers"] = list(self.hidden_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> NetSpec:
        return cls(**d)


@dataclass
class ParamSet:
    """Named float64 tensors for one network, laid out by its :class:`NetSpec`."""

    spec: NetSpec
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        expected = self.spec.layout()
        if [n for n, _ in expected] != list(self.tensors):
            raise ConfigError("tensor names do not match the network layout")
        for name, shape in expected:
            arr = np.asarray(self.tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise ConfigError(f"{name}: expected shape {shape}, got {arr.shape}")
            self.tensors[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    @property
    def size(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def copy(self) -> ParamSet:
        return ParamSet(self.spec, {k: v.copy() for k, v in self.tensors.items()})

    def flatten(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.tensors.values()])

    @classmethod
    def unflatten(cls, spec: NetSpec, flat: np.ndarray) -> ParamSet:
        flat = np.asarray(flat, dtype=np.float64)
        layout = spec.layout()
        need = sum(int(np.prod(shape)) for _, shape in layout)
        if need != flat.size:
            raise ConfigError(f"flat vector has {flat.size} entries, layout needs {need}")
        tensors, pos = {}, 0
        for name, shape in layout:
            n = int(np.prod(shape))
            tensors[name] = flat[pos : pos + n].reshape(shape).copy()
            pos += n
        return cls(spec, tensors)

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.tensors.values())


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(spec: NetSpec, rng: np.random.Generator) -> ParamSet:
    """Orthogonal hidden layers (gain sqrt 2), policy-mean layer scaled by 0.01."""
    tensors = {}
    for name, shape in spec.layout():
        if name == "log_std":
            tensors[name] = np.full(shape, spec.log_std_init)
        elif name.endswith(".bias"):
            tensors[name] = np.zeros(shape)
        elif name == "mean.weight":
            tensors[name] = _orthogonal(rng, shape, 0.01)
        elif name == "value.weight":
            tensors[name] = _orthogonal(rng, shape, 1.0)
        else:
            tensors[name] = _orthogonal(rng, shape, np.sqrt(2.0))
    return ParamSet(spec, tensors)


def _trunk(spec: NetSpec, p, x):
    act = ad.op_tanh if spec.activation == "tanh" else ad.op_relu
    for k in range(len(spec.hidden_layers)):
        x = act(x @ p[f"hidden{k}.weight"] + p[f"hidden{k}.bias"])
    return x


def _check_state(spec: NetSpec, state) -> None:
    dim = ad.value_of(state).shape[-1] if ad.value_of(state).ndim else 0
    if dim != spec.input_dim:
        raise ConfigError(f"state has dimension {dim}, network expects {spec.input_dim}")


def _tensors(params) -> dict:
    return params.tensors if isinstance(params, ParamSet) else params


def forward_policy(params: ParamSet, state, spec: NetSpec | None = None) -> GaussianDist:
    """Gaussian action distribution for a state (or a batch of states).

    ``params`` may also be a dict of :class:`~.autodiff.Tensor` leaves, in which
    case ``spec`` must be given and the result is differentiable.
    """
    spec = spec or params.spec
    if not spec.has_policy:
        raise ConfigError(f"head {spec.head!r} has no policy output")
    _check_state(spec, state)
    p = _tensors(params)
    h = _trunk(spec, p, state)
    mean = h @ p["mean.weight"] + p["mean.bias"]
    log_std = ad.op_clip(p["log_std"], spec.log_std_min, spec.log_std_max)
    return GaussianDist(mean, log_std)


def forward_value(params: ParamSet, state, spec: NetSpec | None = None):
    """Scalar state value; a batch of states gives a vector."""
    spec = spec or params.spec
    if not spec.has_value:
        raise ConfigError(f"head {spec.head!r} has no value output")
    _check_state(spec, state)
    p = _tensors(params)
    h = _trunk(spec, p, state)
    v = h @ p["value.weight"] + p["value.bias"]
    return v[..., 0]


def forward_both(params, state, spec: NetSpec | None = None):
    """Policy and value from one trunk pass (shared head only)."""
    spec = spec or params.spec
    if spec.head != "shared":
        raise ConfigError("forward_both needs a shared head")
    _check_state(spec, state)
    p = _tensors(params)
    h = _trunk(spec, p, state)
    mean = h @ p["mean.weight"] + p["mean.bias"]
    log_std = ad.op_clip(p["log_std"], spec.log_std_min, spec.log_std_max)
    v = h @ p["value.weight"] + p["value.bias"]
    return GaussianDist(mean, log_std), v[..., 0]
