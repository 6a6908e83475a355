"""Binary checkpoint format.

Layout (all integers little-endian):

    magic  b"LLNF"
    u32    format version (1)
    u64    training step
    records until EOF:
        u32    name length
        bytes  UTF-8 name
        u32    rank
        u64[]  dims (rank entries)
        f32[]  payload (product of dims entries, little-endian)

Network parameters use their plain names; optimizer state is appended under
names prefixed "adam.".  The training configuration is echoed to a JSON
sidecar next to the checkpoint file.  Writes are atomic (temp file + rename).
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"LLNF"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _write_record(fh, name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    arr = np.ascontiguousarray(array, dtype="<f4")
    fh.write(struct.pack("<I", arr.ndim))
    for dim in arr.shape:
        fh.write(struct.pack("<Q", dim))
    fh.write(arr.tobytes())


def _read_record(fh):
    head = fh.read(4)
    if not head:
        return None
    (name_len,) = struct.unpack("<I", head)
    name = fh.read(name_len).decode("utf-8")
    (rank,) = struct.unpack("<I", fh.read(4))
    dims = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(rank))
    count = int(np.prod(dims)) if rank else 1
    payload = fh.read(4 * count)
    if len(payload) != 4 * count:
        raise CheckpointError(f"truncated payload for record {name!r}")
    array = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return name, array


def save_checkpoint(path: str, step: int, params: dict[str, np.ndarray],
                    optimizer_state: dict[str, np.ndarray] | None = None,
                    config_echo: dict | None = None) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", step))
        for name, array in params.items():
            _write_record(fh, name, array)
        if optimizer_state:
            for name, array in optimizer_state.items():
                _write_record(fh, f"adam.{name}", array)
    os.replace(tmp, path)
    if config_echo is not None:
        tmp_json = path + ".json.tmp"
        with open(tmp_json, "w", encoding="utf-8") as fh:
            json.dump(config_echo, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp_json, path + ".json")


def load_checkpoint(path: str):
    """Returns (step, params, optimizer_state, config_echo or None)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r} in {path}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (step,) = struct.unpack("<Q", fh.read(8))
        params: dict[str, np.ndarray] = {}
        optimizer_state: dict[str, np.ndarray] = {}
        while True:
            record = _read_record(fh)
            if record is None:
                break
            name, array = record
            if name.startswith("adam."):
                optimizer_state[name[len("adam."):]] = array
            else:
                params[name] = array
    config_echo = None
    sidecar = path + ".json"
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            config_echo = json.load(fh)
    return step, params, optimizer_state, config_echo
