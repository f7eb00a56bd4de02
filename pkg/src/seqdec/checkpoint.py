"""Checkpoint files: a JSON manifest plus a flat little-endian float32 payload.

``<stem>.json`` lists every tensor with its name, shape and byte offset into
``<stem>.bin``. Optimizer accumulators are stored as extra tensors under the
``opt/`` prefix.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .decoder import DecoderConfig, check_params

FORMAT_TAG = "seqdec-ckpt-v1"
_DTYPE = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


def _stem(path) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".json", ".bin") else p


def save_checkpoint(path, params: dict, cfg: DecoderConfig, optimizer=None,
                    iteration: int = 0) -> Path:
    """Write ``<path>.json`` and ``<path>.bin``; returns the manifest path."""
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    tensors = dict(params)
    opt_meta = None
    if optimizer is not None:
        opt_meta = {"kind": optimizer.kind, "lr": optimizer.lr, "step": optimizer.t}
        for name, arr in optimizer.state_arrays().items():
            tensors[f"opt/{name}"] = arr
    entries, offset = [], 0
    with open(stem.with_suffix(".bin"), "wb") as fh:
        for name, arr in tensors.items():
            data = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
            fh.write(data)
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset,
                            "nbytes": len(data)})
            offset += len(data)
    manifest = {
        "format": FORMAT_TAG,
        "dtype": "float32-le",
        "payload": stem.with_suffix(".bin").name,
        "iteration": iteration,
        "decoder": cfg.to_dict(),
        "optimizer": opt_meta,
        "tensors": entries,
    }
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=1) + "\n")
    return stem.with_suffix(".json")


def read_manifest(path) -> dict:
    stem = _stem(path)
    try:
        manifest = json.loads(stem.with_suffix(".json").read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint manifest {stem.with_suffix('.json')}: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT_TAG:
        raise CheckpointError(f"not a {FORMAT_TAG} manifest: {stem.with_suffix('.json')}")
    for key in ("payload", "tensors", "decoder"):
        if key not in manifest:
            raise CheckpointError(f"manifest is missing {key!r}")
    return manifest


def load_checkpoint(path, cfg: DecoderConfig | None = None):
    """Load ``(params, decoder_config, manifest)``.

    When ``cfg`` is given, the stored tensors must match its shapes.
    """
    stem = _stem(path)
    manifest = read_manifest(stem)
    payload = (stem.parent / manifest["payload"]).read_bytes()
    params, opt_state = {}, {}
    for entry in manifest["tensors"]:
        try:
            name, shape, offset, nbytes = entry["name"], tuple(entry["shape"]), entry["offset"], entry["nbytes"]
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"malformed tensor entry {entry!r}") from exc
        count = int(np.prod(shape, dtype=np.int64))
        if nbytes != count * _DTYPE.itemsize or offset < 0 or offset + nbytes > len(payload):
            raise CheckpointError(f"tensor {name!r} does not fit the payload")
        arr = np.frombuffer(payload, dtype=_DTYPE, count=count, offset=offset).reshape(shape)
        (opt_state if name.startswith("opt/") else params)[name] = arr.astype(np.float32)
    try:
        stored_cfg = DecoderConfig(**manifest["decoder"])
    except TypeError as exc:
        raise CheckpointError(f"bad decoder section: {exc}") from exc
    target = cfg or stored_cfg
    try:
        check_params(target, params)
    except ValueError as exc:
        raise CheckpointError(f"checkpoint does not match decoder config: {exc}") from exc
    manifest["optimizer_state"] = opt_state
    return params, stored_cfg, manifest
