"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"PIELAB1\\n"
    uint64   length of the metadata block
    bytes    UTF-8 JSON metadata (sorted keys, compact separators)
    bytes    raw arrays back to back, offsets relative to the start of this region
    uint32   CRC32 of every preceding byte of the file

Float arrays are stored as ``<f4`` (or ``<f8`` for float64 parameter sets),
masks as little-bit-order packed bits under the name ``<layer>.mask`` and
momentum buffers as ``<layer>.momentum``.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .optim import SGDState
from .params import Layer, ModelSpec, ParamSet

MAGIC = b"PIELAB1\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    spec: ModelSpec
    epoch: int
    params: ParamSet
    mask: object | None = None  # pielab.prune.PruneMask
    opt_state: SGDState | None = None
    rng_state: dict | None = None
    extra: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION


def _le(arr: np.ndarray) -> np.ndarray:
    return arr.astype(arr.dtype.newbyteorder("<"), copy=False)


def to_bytes(ckpt: Checkpoint) -> bytes:
    entries, blobs, offset = [], [], 0

    def add(name: str, kind: str, data: bytes, dtype: str, shape, **more):
        nonlocal offset
        entries.append({"name": name, "kind": kind, "dtype": dtype, "shape": list(shape),
                        "offset": offset, "nbytes": len(data), **more})
        blobs.append(data)
        offset += len(data)

    for name, layer in ckpt.params.layers.items():
        arr = _le(np.ascontiguousarray(layer.value))
        add(name, "param", arr.tobytes(), arr.dtype.str, arr.shape,
            role=layer.role, prunable=layer.prunable)
    mask_target = None
    if ckpt.mask is not None:
        mask_target = ckpt.mask.target
        for name, keep in ckpt.mask.layers.items():
            bits = np.packbits(keep.ravel(), bitorder="little")
            add(f"{name}.mask", "mask", bits.tobytes(), "bits", keep.shape)
    if ckpt.opt_state is not None:
        for name, v in ckpt.opt_state.velocity.items():
            arr = _le(np.ascontiguousarray(v))
            add(f"{name}.momentum", "momentum", arr.tobytes(), arr.dtype.str, arr.shape)
    meta = {
        "format_version": ckpt.version,
        "spec": ckpt.spec.to_dict(),
        "epoch": ckpt.epoch,
        "arrays": entries,
        "mask_target": mask_target,
        "opt_steps": None if ckpt.opt_state is None else ckpt.opt_state.steps,
        "rng_state": ckpt.rng_state,
        "extra": ckpt.extra,
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = MAGIC + struct.pack("<Q", len(meta_bytes)) + meta_bytes + b"".join(blobs)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def from_bytes(data: bytes) -> Checkpoint:
    if not data.startswith(MAGIC):
        if data[:6] == MAGIC[:6]:
            raise CheckpointError(f"unsupported checkpoint version {data[:8]!r}")
        raise CheckpointError("not a checkpoint: bad magic header (expected versioned PIELAB format)")
    if len(data) < len(MAGIC) + 12:
        raise CheckpointError("truncated checkpoint")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    (meta_len,) = struct.unpack("<Q", data[len(MAGIC):len(MAGIC) + 8])
    start = len(MAGIC) + 8
    if start + meta_len > len(body):
        raise CheckpointError("truncated checkpoint: metadata block cut short")
    try:
        meta = json.loads(body[start:start + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError("corrupt checkpoint metadata") from None
    region = start + meta_len
    expected = region + sum(e["nbytes"] for e in meta["arrays"])
    if len(body) != expected:
        raise CheckpointError(f"truncated checkpoint: expected {expected + 4} bytes, got {len(data)}")
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint checksum failure")
    if meta["format_version"] != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {meta['format_version']}")

    spec = ModelSpec.from_dict(meta["spec"])
    layers, masks, velocity = {}, {}, {}
    for e in meta["arrays"]:
        raw = body[region + e["offset"]: region + e["offset"] + e["nbytes"]]
        shape = tuple(e["shape"])
        if e["kind"] == "mask":
            n = int(np.prod(shape))
            bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=n, bitorder="little")
            masks[e["name"][:-len(".mask")]] = bits.astype(bool).reshape(shape)
            continue
        arr = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(shape)
        arr = arr.astype(arr.dtype.newbyteorder("="))  # native, writable copy
        if e["kind"] == "param":
            layers[e["name"]] = Layer(arr, e["role"], e["prunable"])
        else:
            velocity[e["name"][:-len(".momentum")]] = arr
    mask = None
    if meta["mask_target"] is not None or masks:
        from ..prune import PruneMask

        mask = PruneMask(masks, meta["mask_target"])
    opt = None if meta["opt_steps"] is None else SGDState(velocity, meta["opt_steps"])
    return Checkpoint(spec, meta["epoch"], ParamSet(spec, layers), mask, opt,
                      meta["rng_state"], meta["extra"], meta["format_version"])


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(to_bytes(ckpt))
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing checkpoint {path}")
    return from_bytes(path.read_bytes())
