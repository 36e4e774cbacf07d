"""Named-array parameter containers.

A container is an ``.npz`` archive holding one float64 array per
parameter name plus a ``__manifest__`` entry: UTF-8 JSON bytes listing
metadata and every array's name, shape and dtype. Loading validates the
archive against its manifest and names any missing or mismatched array.
"""

from __future__ import annotations

import json

import numpy as np

MANIFEST_KEY = "__manifest__"


class ContainerError(ValueError):
    pass


def save_container(path, arrays: dict[str, np.ndarray], meta: dict | None = None):
    manifest = {
        "meta": meta or {},
        "arrays": {name: {"shape": list(a.shape), "dtype": str(a.dtype)} for name, a in arrays.items()},
    }
    payload = {name: np.ascontiguousarray(a) for name, a in arrays.items()}
    payload[MANIFEST_KEY] = np.frombuffer(json.dumps(manifest, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **payload)


def load_container(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path) as archive:
        if MANIFEST_KEY not in archive:
            raise ContainerError(f"{path}: missing {MANIFEST_KEY}")
        manifest = json.loads(bytes(archive[MANIFEST_KEY]).decode("utf-8"))
        arrays = {}
        for name, spec in manifest["arrays"].items():
            if name not in archive:
                raise ContainerError(f"{path}: container missing array {name!r}")
            a = archive[name]
            if list(a.shape) != spec["shape"]:
                raise ContainerError(
                    f"{path}: array {name!r} has shape {list(a.shape)}, manifest says {spec['shape']}"
                )
            if str(a.dtype) != spec["dtype"]:
                raise ContainerError(f"{path}: array {name!r} has dtype {a.dtype}, manifest says {spec['dtype']}")
            arrays[name] = a
    return arrays, manifest["meta"]
