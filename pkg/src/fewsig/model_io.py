"""Model serialization: JSON of named float arrays plus the architecture flags.

The format is binary-free and diff-able; floats round-trip exactly through
Python's repr-based JSON encoding. ``schema_version`` guards future layout
changes, and the stored flags let loaders reject a model whose architecture
does not match the requesting configuration.
"""

from __future__ import annotations

import json

import numpy as np

from .meta import ModelSpec

SCHEMA_VERSION = 1


class ModelMismatchError(ValueError):
    pass


def save_model(path, params: dict, spec: ModelSpec):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "flags": spec.to_dict(),
        "params": {
            name: {"shape": list(arr.shape), "data": [float(v) for v in np.ravel(arr)]}
            for name, arr in sorted(params.items())
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    """Returns (params dict, ModelSpec). Raises ModelMismatchError on bad schema."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ModelMismatchError(f"model schema version {version!r}, expected {SCHEMA_VERSION}")
    try:
        spec = ModelSpec(**doc["flags"])
        params = {
            name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in doc["params"].items()
        }
    except (KeyError, TypeError, ValueError) as e:
        raise ModelMismatchError(f"malformed model file: {e}")
    return params, spec


def check_architecture(model_spec: ModelSpec, config_spec: ModelSpec):
    """The stored flags must equal the configured ones exactly."""
    if model_spec.to_dict() != config_spec.to_dict():
        raise ModelMismatchError(
            f"model flags {model_spec.to_dict()} do not match configuration "
            f"{config_spec.to_dict()}"
        )
