"""Self-describing checkpoint files (``TMCK``).

Layout, little-endian::

    b"TMCK" | u16 version | u32 header length | UTF-8 JSON header
    float64 payload: every parameter in header order, then the Adam first
    moments, then the Adam second moments (when optimizer state is stored)
    u32 CRC32 over header bytes + payload

The JSON header names each parameter with its shape, the architecture tags of
the three networks, the keyword arguments that rebuild the pipeline, the Adam
hyperparameters and step count, the tool version and the config hash.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import ChecksumError, DatasetFormatError, TruncatedFileError, VersionMismatchError
from .models import Pipeline, build_pipeline

MAGIC = b"TMCK"
VERSION = 1

__all__ = ["ArchitectureMismatchError", "Checkpoint", "ChecksumError", "CheckpointFormatError",
           "TruncatedFileError", "VersionMismatchError", "checkpoint_load", "checkpoint_save"]


class CheckpointFormatError(DatasetFormatError):
    pass


class ArchitectureMismatchError(ValueError):
    pass


@dataclass
class Checkpoint:
    pipeline: Pipeline
    optimizer: dict | None
    meta: dict


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def checkpoint_save(path, pipeline: Pipeline, optimizer_state: dict | None = None,
                    config_hash: str | None = None, extra: dict | None = None) -> None:
    params = pipeline.state()
    names = list(params)
    header = {
        "arch": {k: v["arch"] for k, v in pipeline.describe().items()},
        "modules": pipeline.describe(),
        "build": pipeline.build_kwargs,
        "params": [[k, list(params[k].shape)] for k in names],
        "optimizer": None,
        "tool_version": __version__,
        "config_hash": config_hash,
        "extra": extra or {},
    }
    chunks = [params[k] for k in names]
    if optimizer_state is not None:
        header["optimizer"] = {"step": int(optimizer_state["step"]), "hparams": optimizer_state["hparams"]}
        chunks += [optimizer_state["m"][k] for k in names] + [optimizer_state["v"][k] for k in names]
    head = json.dumps(_jsonable(header), sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(c, dtype="<f8").tobytes() for c in chunks)
    crc = zlib.crc32(head + payload)
    Path(path).write_bytes(MAGIC + struct.pack("<HI", VERSION, len(head)) + head + payload + struct.pack("<I", crc))


def read_checkpoint_header(path) -> dict:
    return _parse(Path(path).read_bytes())[0]


def _parse(raw: bytes):
    if len(raw) < 10:
        raise TruncatedFileError("checkpoint ends inside the preamble")
    if raw[:4] != MAGIC:
        raise CheckpointFormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version, hlen = struct.unpack("<HI", raw[4:10])
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint format version {version}, this reader supports {VERSION}")
    if len(raw) < 10 + hlen + 4:
        raise TruncatedFileError("checkpoint ends inside the header")
    head_bytes = raw[10:10 + hlen]
    payload = raw[10 + hlen:-4]
    (crc,) = struct.unpack("<I", raw[-4:])
    try:
        header = json.loads(head_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ChecksumError("checkpoint header is corrupt") from None
    sizes = [int(np.prod(shape)) for _, shape in header["params"]]
    expected = sum(sizes) * (3 if header.get("optimizer") else 1) * 8
    if len(payload) < expected:
        raise TruncatedFileError(f"checkpoint payload has {len(payload)} bytes, expected {expected}")
    if zlib.crc32(head_bytes + payload) != crc:
        raise ChecksumError("checkpoint CRC32 mismatch")
    return header, payload


def checkpoint_load(path, pipeline: Pipeline | None = None) -> Checkpoint:
    """Load a checkpoint, rebuilding the pipeline unless one is supplied.

    A supplied pipeline must carry the same architecture tags.
    """
    header, payload = _parse(Path(path).read_bytes())
    if pipeline is None:
        if not header.get("build"):
            raise CheckpointFormatError("checkpoint lacks build arguments; supply a pipeline")
        pipeline = build_pipeline(**header["build"])
    have = {k: v["arch"] for k, v in pipeline.describe().items()}
    if have != header["arch"]:
        raise ArchitectureMismatchError(f"checkpoint architecture {header['arch']} does not match model {have}")

    values = np.frombuffer(payload, dtype="<f8")
    names = [k for k, _ in header["params"]]
    shapes = {k: tuple(s) for k, s in header["params"]}
    offset = 0

    def take(shape):
        nonlocal offset
        size = int(np.prod(shape))
        arr = values[offset:offset + size].reshape(shape).astype(np.float64)
        offset += size
        return arr

    state = {k: take(shapes[k]) for k in names}
    try:
        pipeline.load_state(state)
    except (KeyError, ValueError) as exc:
        raise ArchitectureMismatchError(f"checkpoint parameters do not fit the model: {exc}") from None
    opt = None
    if header.get("optimizer"):
        m = {k: take(shapes[k]) for k in names}
        v = {k: take(shapes[k]) for k in names}
        opt = {"step": header["optimizer"]["step"], "hparams": header["optimizer"]["hparams"], "m": m, "v": v}
    return Checkpoint(pipeline=pipeline, optimizer=opt, meta=header)
