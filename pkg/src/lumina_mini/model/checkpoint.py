"""Checkpoint files.

Layout, little-endian throughout: magic "LMCK", u16 version, u32 JSON header
length, UTF-8 JSON header (config, step, master_seed, free-form meta), u32
entry count, then per entry a u32 name length, the UTF-8 name, and an LMT1
tensor blob. Optimizer state rides along under the reserved "opt." prefix.
"""

from __future__ import annotations

import json
import struct

from ..errors import CheckpointError
from ..numerics import Tensor, read_tensor, write_tensor
from .config import ModelConfig
from .params import ParamStore

MAGIC = b"LMCK"
VERSION = 1
OPT_PREFIX = "opt."


def save_checkpoint(
    path,
    store: ParamStore,
    extra: dict | None = None,
    meta: dict | None = None,
) -> None:
    """Write params (and optional extra tensors, e.g. optimizer moments)."""
    entries = list(store.items()) + list((extra or {}).items())
    header = {
        "config": store.config.to_dict(),
        "step": store.step,
        "master_seed": store.master_seed,
        "meta": meta or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(entries)))
        for name, tensor in entries:
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            write_tensor(f, tensor)


def load_checkpoint(path):
    """Returns (ParamStore, extra tensors dict, meta dict)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<H", f.read(2))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        cfg = ModelConfig.from_dict(header["config"])
        store = ParamStore(cfg, step=header["step"], master_seed=header["master_seed"])
        extra: dict[str, Tensor] = {}
        (count,) = struct.unpack("<I", f.read(4))
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            tensor = read_tensor(f)
            if name.startswith(OPT_PREFIX):
                extra[name] = tensor
            else:
                tensor.requires_grad = True
                tensor.grad = Tensor(tensor.data * 0, tensor.dtype)
                store.add(name, tensor)
    return store, extra, header["meta"]
