"""JSON persistence for trained models (``flownovel-model-v1`` envelope)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import lof, made
from .cnf import CnfModel, SolverConfig
from .errors import ContractError, DataError
from .maf import MafStack

VERSION = "flownovel-model-v1"


def _normalizer_out(norm):
    if norm is None:
        return None
    return {"mean": np.asarray(norm["mean"]).tolist(), "std": np.asarray(norm["std"]).tolist()}


def _normalizer_in(norm):
    if norm is None:
        return None
    return {"mean": np.asarray(norm["mean"], dtype=np.float64), "std": np.asarray(norm["std"], dtype=np.float64)}


def _made_out(net: made.MadeNetwork) -> dict:
    d = made.to_dict(net)
    if net.skip_weight is not None:
        d["skip_weight"] = net.skip_weight.data.tolist()
    return d


def _made_in(d: dict) -> made.MadeNetwork:
    net = made.from_dict(d)
    if "skip_weight" in d:
        net.skip_mask = made.skip_mask(net.input_dim, net.output_multiplier)
        net.skip_weight = made.Tensor(np.asarray(d["skip_weight"], dtype=np.float64), requires_grad=True)
    return net


def model_to_dict(model) -> dict:
    env = {"version": VERSION, "normalizer": _normalizer_out(getattr(model, "normalizer", None))}
    if isinstance(model, MafStack):
        if not all(isinstance(layer, made.MadeNetwork) for layer in model.layers):
            raise ContractError("only MADE-conditioned MAF layers can be serialized")
        env.update(type="maf", D=model.input_dim, flip=model.flip,
                   log_scale_bound=model.log_scale_bound,
                   layers=[_made_out(layer) for layer in model.layers])
    elif isinstance(model, CnfModel):
        env.update(type="cnf", D=model.input_dim, diagonal=model.diagonal, t0=model.t0, t1=model.t1,
                   blowup=model.blowup, solver=model.solver.to_dict(), drift=_made_out(model.drift))
    elif isinstance(model, lof.LofModel):
        env.update(type="lof", D=model.input_dim, **lof.to_dict(model))
    else:
        raise ContractError(f"cannot serialize {type(model).__name__}")
    return env


def model_from_dict(d: dict):
    if d.get("version") != VERSION:
        raise DataError(f"unsupported model version {d.get('version')!r}")
    kind = d.get("type")
    norm = _normalizer_in(d.get("normalizer"))
    if kind == "maf":
        model = MafStack([_made_in(layer) for layer in d["layers"]], d["D"], d["flip"],
                         d.get("log_scale_bound"))
    elif kind == "cnf":
        model = CnfModel(_made_in(d["drift"]), d["D"], d["diagonal"], d["t0"], d["t1"],
                         SolverConfig(**d["solver"]), d.get("blowup", 1e8))
    elif kind == "lof":
        model = lof.from_dict(d)
    else:
        raise DataError(f"unknown model type {kind!r}")
    model.normalizer = norm
    return model


def save_model(model, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model)))
    return path


def load_model(path):
    try:
        return model_from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load model {path}: {exc}") from exc
