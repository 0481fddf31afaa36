"""JSON checkpoints: network spec, named tensors and optional Adam moments.

Layout (version 1)::

    {
      "format": "mdppo-checkpoint",
      "version": 1,
      "networks": {
        "<name>": {
          "spec": {...NetSpec fields...},
          "tensors": {"<tensor>": {"shape": [...], "values": [...]}},
          "optimizer": {"step": int, "m": {...}, "v": {...}} | null
        }
      },
      "meta": {...}
    }

Floats are written with ``repr`` precision, so a load reproduces every value
bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .network import NetSpec, ParamSet
from .optim import AdamState

FORMAT = "mdppo-checkpoint"
VERSION = 1


def _pack(arrays: dict[str, np.ndarray]) -> dict:
    return {k: {"shape": list(a.shape), "values": a.ravel().tolist()} for k, a in arrays.items()}


def _unpack(d: dict) -> dict[str, np.ndarray]:
    return {
        k: np.asarray(v["values"], dtype=np.float64).reshape(v["shape"]) for k, v in d.items()
    }


def save_checkpoint(
    path: str | Path,
    networks: dict[str, tuple[ParamSet, AdamState | None]],
    meta: dict | None = None,
) -> None:
    doc = {"format": FORMAT, "version": VERSION, "networks": {}, "meta": meta or {}}
    for name, (params, opt) in networks.items():
        doc["networks"][name] = {
            "spec": params.spec.to_dict(),
            "tensors": _pack(params.tensors),
            "optimizer": None
            if opt is None
            else {"step": opt.step, "m": _pack(opt.m), "v": _pack(opt.v)},
        }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> tuple[dict[str, tuple[ParamSet, AdamState | None]], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT:
        raise ConfigError(f"{path}: not an {FORMAT} file")
    if doc.get("version") != VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    out = {}
    for name, net in doc["networks"].items():
        params = ParamSet(NetSpec.from_dict(net["spec"]), _unpack(net["tensors"]))
        opt = net["optimizer"]
        state = None if opt is None else AdamState(opt["step"], _unpack(opt["m"]), _unpack(opt["v"]))
        out[name] = (params, state)
    return out, doc.get("meta", {})
