"""On-disk formats: JSON documents, npz arrays and raw state dumps."""

import json
from pathlib import Path

import numpy as np

from .family import Cell, ReducedFamily
from .measurement import Observation, measurements_from_layout
from .model import ParameterBox, model_from_spec
from .reduced_basis import RBHierarchy

__all__ = [
    "FORMAT_VERSION",
    "ArtifactVersionError",
    "write_json",
    "read_json",
    "save_family",
    "load_family",
    "save_observation",
    "load_observation",
    "dump_states",
    "load_states",
]

FORMAT_VERSION = 1


class ArtifactVersionError(ValueError):
    pass


def _check_version(doc, path):
    v = doc.get("format_version")
    if v != FORMAT_VERSION:
        raise ArtifactVersionError(f"{path}: format version {v!r}, this build reads {FORMAT_VERSION}")


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def _float_or_str(x):
    return x if np.isfinite(x) else str(x)


def save_family(path, family, model, mspace):
    """Write ``<path>.json`` (model, layout, cells, split log) and ``<path>.npz`` (bases)."""
    path = Path(path)
    arrays = {}
    cells = []
    for c in family.cells:
        h = c.hierarchy
        key = f"cell{c.id}"
        arrays[f"{key}_offset"] = h.offset
        arrays[f"{key}_basis"] = h.basis
        arrays[f"{key}_eps"] = h.eps
        arrays[f"{key}_mu"] = h.mu
        arrays[f"{key}_indices"] = np.asarray(c.indices, dtype=np.int64)
        cells.append({
            "id": c.id, "box": c.box.to_dict(), "level": c.level, "n_star": int(c.n_star),
            "tau": _float_or_str(c.tau), "parent": c.parent, "created": c.created,
            "split_at": c.split_at, "split_dim": c.split_dim, "data_starved": bool(c.data_starved),
            "inherited": bool(c.inherited), "model_index": c.model_index,
            "picks": [int(p) for p in h.picks], "n_train": int(h.n_train),
        })
    models = model if isinstance(model, (list, tuple)) else [model]
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "family",
        "models": [m.spec() for m in models],
        "measurements": mspace.layout(),
        "mode": family.mode, "sigma": family.sigma, "eps_target": family.eps_target,
        "mu_target": family.mu_target, "rule": family.rule, "K_max": family.K_max,
        "converged": family.converged,
        "history": [{k: (_float_or_str(v) if isinstance(v, float) else v) for k, v in h.items()}
                    for h in family.history],
        "cells": cells,
    }
    write_json(path.with_suffix(".json"), doc)
    np.savez(path.with_suffix(".npz"), **arrays)


def load_family(path):
    """Inverse of :func:`save_family`; returns ``(family, models, mspace)``."""
    path = Path(path)
    doc = read_json(path.with_suffix(".json"))
    _check_version(doc, path)
    if doc.get("kind") != "family":
        raise ArtifactVersionError(f"{path} is not a family artifact")
    models = []
    for spec in doc["models"]:
        models.append(model_from_spec(spec, models[0].space if models else None))
    mspace = measurements_from_layout(models[0].space, doc["measurements"])
    cells = []
    with np.load(path.with_suffix(".npz")) as z:
        for meta in doc["cells"]:
            key = f"cell{meta['id']}"
            h = RBHierarchy(z[f"{key}_offset"], z[f"{key}_basis"], z[f"{key}_eps"], z[f"{key}_mu"],
                            meta["picks"], meta["n_train"])
            cells.append(Cell(meta["id"], ParameterBox.from_dict(meta["box"]), meta["level"],
                              z[f"{key}_indices"], h, meta["n_star"], float(meta["tau"]),
                              parent=meta["parent"], created=meta["created"],
                              split_at=meta["split_at"], split_dim=meta["split_dim"],
                              data_starved=meta["data_starved"], inherited=meta["inherited"],
                              model_index=meta["model_index"]))
    history = [{k: (float(v) if k in ("sigma_K", "max_tau") else v) for k, v in h.items()}
               for h in doc["history"]]
    family = ReducedFamily(cells, doc["mode"], doc["sigma"], doc["eps_target"], doc["mu_target"],
                           doc["rule"], doc["K_max"], doc["converged"], history)
    return family, models, mspace


def save_observation(path, obs, **extra):
    doc = {"format_version": FORMAT_VERSION, "kind": "observation", **obs.to_dict(), **extra}
    write_json(path, doc)


def load_observation(path):
    doc = read_json(path)
    _check_version(doc, path)
    if doc.get("kind") != "observation":
        raise ArtifactVersionError(f"{path} is not an observation artifact")
    opt = {k: np.asarray(doc[k], dtype=float) for k in ("z", "noise") if k in doc}
    return Observation(np.asarray(doc["w"], dtype=float), eps_noise=doc.get("eps_noise", 0.0), **opt)


def dump_states(path, states, **meta):
    """Raw little-endian float64 dump ``<path>.bin`` with header ``<path>.json``.

    States are stored column-major: state ``j`` occupies a contiguous block.
    """
    path = Path(path)
    states = np.atleast_2d(np.asarray(states, dtype="<f8").T).T
    header = {"format_version": FORMAT_VERSION, "kind": "states", "dtype": "float64",
              "byte_order": "little", "n_dof": int(states.shape[0]),
              "n_states": int(states.shape[1]), "order": "state-major", **meta}
    write_json(path.with_suffix(".json"), header)
    np.ascontiguousarray(states.T).tofile(path.with_suffix(".bin"))


def load_states(path):
    path = Path(path)
    header = read_json(path.with_suffix(".json"))
    _check_version(header, path)
    raw = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    return raw.reshape(header["n_states"], header["n_dof"]).T.copy(), header
