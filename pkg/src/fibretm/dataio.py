"""Binary dataset files (``TMDS``) and their JSON manifest sidecar.

Layout, all little-endian::

    b"TMDS" | u16 version | u8 family | u32 n | u32 count | u8 dtype
    count * n * n complex records as interleaved (re, im) float64 pairs
    u32 CRC32 of the record payload

The sidecar ``<path>.manifest.json`` carries generation parameters, the master
seed, split indices, format version, tool version and config hash.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import TMDataset
from .matrix import Family

MAGIC = b"TMDS"
VERSION = 1
DTYPE_C128_LE = 0
_HEADER = struct.Struct("<4sHBIIB")


class DatasetFormatError(ValueError):
    """Malformed dataset file (bad magic, bad header fields)."""


class VersionMismatchError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class ChecksumError(DatasetFormatError):
    pass


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_dataset(ds: TMDataset, path, config_hash: str | None = None) -> None:
    path = Path(path)
    payload = np.ascontiguousarray(ds.data, dtype="<c16").tobytes()
    header = _HEADER.pack(MAGIC, VERSION, ds.family.code, ds.n, ds.count, DTYPE_C128_LE)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))

    manifest = dict(ds.manifest)
    manifest.update(format="TMDS", format_version=VERSION, family=ds.family.value,
                    n=ds.n, count=ds.count, tool_version=__version__)
    if config_hash is not None:
        manifest["config_hash"] = config_hash
    if ds.split is not None:
        manifest["split"] = {k: v.tolist() for k, v in ds.split.items()}
    manifest_path(path).write_text(json.dumps(_jsonable(manifest), indent=1, sort_keys=True), encoding="utf-8")


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    return _parse_header(raw)


def _parse_header(raw: bytes) -> dict:
    if len(raw) < _HEADER.size:
        raise TruncatedFileError("file ends inside the header")
    magic, version, family, n, count, dtype = _HEADER.unpack(raw[:_HEADER.size])
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError(f"dataset format version {version}, this reader supports {VERSION}")
    if dtype != DTYPE_C128_LE:
        raise DatasetFormatError(f"unsupported dtype code {dtype}")
    try:
        fam = Family.from_code(family)
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from None
    return {"version": version, "family": fam, "n": n, "count": count, "dtype": dtype}


def read_dataset(path) -> TMDataset:
    """Read a dataset file; the split comes from the manifest, never recomputed."""
    path = Path(path)
    raw = path.read_bytes()
    head = _parse_header(raw)
    n, count = head["n"], head["count"]
    nbytes = count * n * n * 16
    start = _HEADER.size
    if len(raw) < start + nbytes + 4:
        raise TruncatedFileError(f"expected {start + nbytes + 4} bytes, file has {len(raw)}")
    payload = raw[start:start + nbytes]
    (crc,) = struct.unpack("<I", raw[start + nbytes:start + nbytes + 4])
    if zlib.crc32(payload) != crc:
        raise ChecksumError("payload CRC32 mismatch")
    data = np.frombuffer(payload, dtype="<c16").reshape(count, n, n).astype(np.complex128)

    manifest, split = {}, None
    mpath = manifest_path(path)
    if mpath.exists():
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
        raw_split = manifest.pop("split", None)
        if raw_split is not None:
            split = {k: np.asarray(v, dtype=np.int64) for k, v in raw_split.items()}
    return TMDataset(family=head["family"], data=data, split=split, manifest=manifest)
