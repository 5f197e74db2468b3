"""Versioned, checksummed binary checkpoints with byte-identical round-trips.

Layout: magic ``MNGC``, u32 format version, u64 header length, a JSON header
(sorted keys) listing metadata and array descriptors, the raw array payloads
in header order, and a trailing SHA-256 of everything before it. Writes go
to a temp file first and are renamed into place.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np
import torch

MAGIC = b"MNGC"
FORMAT_VERSION = 1

_DTYPES = {"float32": np.float32, "float64": np.float64, "uint8": np.uint8, "int64": np.int64}


class CheckpointError(RuntimeError):
    pass


def _collect_arrays(state) -> dict:
    arrays = {}
    for name, p in state.model.named_parameters():
        arrays[f"theta/{name}"] = p.detach()
    for name, buf in state.theta_buf.items():
        arrays[f"theta_buf/{name}"] = buf
    if state.gen is not None:
        for name, p in state.gen.named_parameters():
            arrays[f"phi/{name}"] = p.detach()
        for name, buf in state.phi_buf.items():
            arrays[f"phi_buf/{name}"] = buf
    if state.pset is not None:
        arrays["rng/attack"] = state.pset.rng.get_state()
    arrays["rng/noise"] = state.rng_noise.get_state()
    return arrays


def save_checkpoint(path, state, config_fingerprint: str = "") -> None:
    """Serialize a TrainState; atomic (write-temp-then-rename)."""
    arrays = _collect_arrays(state)
    descriptors = []
    payloads = []
    for name in sorted(arrays):
        array = arrays[name].cpu().contiguous().numpy()
        descriptors.append(
            {"name": name, "dtype": str(array.dtype), "shape": list(array.shape)}
        )
        payloads.append(array.tobytes())
    header = {
        "arrays": descriptors,
        "meta": {
            "attack_calls": state.attack_calls,
            "config_fingerprint": config_fingerprint,
            "epoch": state.epoch,
            "global_step": state.global_step,
        },
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()

    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    blob += struct.pack("<Q", len(header_bytes))
    blob += header_bytes
    for payload in payloads:
        blob += payload
    blob += hashlib.sha256(bytes(blob)).digest()

    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(bytes(blob))
    os.replace(tmp, path)


def read_checkpoint(path):
    """Parse a checkpoint file into (meta dict, name -> tensor dict)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 + 4 + 8 + 32:
        raise CheckpointError(f"{path}: truncated checkpoint")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    digest = blob[-32:]
    if hashlib.sha256(blob[:-32]).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version} not supported")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + header_len].decode())
    offset = 16 + header_len
    tensors = {}
    for desc in header["arrays"]:
        dtype = _DTYPES[desc["dtype"]]
        count = int(np.prod(desc["shape"])) if desc["shape"] else 1
        nbytes = count * np.dtype(dtype).itemsize
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: payload truncated at {desc['name']}")
        offset += nbytes
        array = np.frombuffer(chunk, dtype=dtype).reshape(desc["shape"]).copy()
        tensors[desc["name"]] = torch.from_numpy(array)
    if offset != len(blob) - 32:
        raise CheckpointError(f"{path}: trailing bytes after payload")
    return header["meta"], tensors


def load_checkpoint(path, state):
    """Restore a TrainState in place from a checkpoint; returns its metadata."""
    meta, tensors = read_checkpoint(path)

    def restore_params(module, prefix):
        for name, p in module.named_parameters():
            key = f"{prefix}/{name}"
            if key not in tensors:
                raise CheckpointError(f"{path}: missing array {key}")
            if tuple(tensors[key].shape) != tuple(p.shape):
                raise CheckpointError(f"{path}: shape mismatch for {key}")
            with torch.no_grad():
                p.copy_(tensors[key])

    restore_params(state.model, "theta")
    state.theta_buf.clear()
    for key, tensor in tensors.items():
        if key.startswith("theta_buf/"):
            state.theta_buf[key[len("theta_buf/"):]] = tensor.clone()
    if state.gen is not None:
        restore_params(state.gen, "phi")
        state.phi_buf.clear()
        for key, tensor in tensors.items():
            if key.startswith("phi_buf/"):
                state.phi_buf[key[len("phi_buf/"):]] = tensor.clone()
    if state.pset is not None and "rng/attack" in tensors:
        state.pset.rng.set_state(tensors["rng/attack"].to(torch.uint8))
    state.rng_noise.set_state(tensors["rng/noise"].to(torch.uint8))
    state.epoch = int(meta["epoch"])
    state.global_step = int(meta["global_step"])
    state.attack_calls = int(meta["attack_calls"])
    return meta
