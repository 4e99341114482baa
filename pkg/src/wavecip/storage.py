"""Binary trace/field container, CSV exports, manifests and the control cache.

Container layout (little endian)::

    magic   4s   b"WCIP"
    version u16
    dtype   u8   0 = complex64, 1 = complex128
    ndim    u8
    dims    ndim x u64
    dt, hx, hy, eta_x, eta_y, alpha   6 x f64   (NaN when not applicable)
    tag     16s  quantity name, NUL padded
    crc32   u32  of the payload
    payload row-major complex values
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import struct
import tempfile
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContainerError

MAGIC = b"WCIP"
VERSION = 1
_DTYPES = {0: np.complex64, 1: np.complex128}
_CODES = {np.dtype(np.complex64): 0, np.dtype(np.complex128): 1}
_HEAD = struct.Struct("<4sHBB")
_META = struct.Struct("<6d16sI")


@dataclass
class ContainerHeader:
    dims: tuple
    dt: float = math.nan
    hx: float = math.nan
    hy: float = math.nan
    eta: tuple = (math.nan, math.nan)
    alpha: float = math.nan
    tag: str = ""
    dtype: type = np.complex64


def _nan(x):
    return math.nan if x is None else float(x)


def encode(values, *, dt=None, hx=None, hy=None, eta=None, alpha=None, tag="", dtype=np.complex64):
    arr = np.ascontiguousarray(np.asarray(values), dtype=dtype)
    payload = arr.tobytes()
    eta = eta if eta is not None else (None, None)
    head = _HEAD.pack(MAGIC, VERSION, _CODES[arr.dtype], arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    tagb = tag.encode("ascii")[:16]
    meta = _META.pack(_nan(dt), _nan(hx), _nan(hy), _nan(eta[0]), _nan(eta[1]), _nan(alpha), tagb,
                      zlib.crc32(payload) & 0xFFFFFFFF)
    return head + dims + meta + payload


def decode(blob):
    if len(blob) < _HEAD.size or blob[:4] != MAGIC:
        raise ContainerError("bad magic")
    magic, version, code, ndim = _HEAD.unpack_from(blob, 0)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    if code not in _DTYPES:
        raise ContainerError(f"unknown dtype code {code}")
    off = _HEAD.size
    try:
        dims = struct.unpack_from(f"<{ndim}Q", blob, off)
        off += 8 * ndim
        dt, hx, hy, ex, ey, alpha, tagb, crc = _META.unpack_from(blob, off)
    except struct.error as exc:
        raise ContainerError("truncated header") from exc
    off += _META.size
    dtype = _DTYPES[code]
    payload = blob[off:]
    if len(payload) != int(np.prod(dims, dtype=np.int64)) * np.dtype(dtype).itemsize:
        raise ContainerError("payload length does not match header dimensions")
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ContainerError("payload checksum mismatch")
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
    hdr = ContainerHeader(tuple(dims), dt, hx, hy, (ex, ey), alpha, tagb.rstrip(b"\0").decode("ascii"), dtype)
    return arr, hdr


def atomic_write_bytes(path, data):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_container(path, values, **kw):
    atomic_write_bytes(path, encode(values, **kw))


def read_container(path):
    return decode(Path(path).read_bytes())


def write_trace(path, trace, gamma=None, dtype=np.complex64):
    g = gamma.grid if gamma is not None else None
    write_container(path, trace.values, dt=trace.dt, hx=g and g.hx, hy=g and g.hy, eta=trace.eta,
                    alpha=trace.alpha, tag=trace.quantity, dtype=dtype)


def read_trace(path):
    from .wave import BoundaryTrace

    arr, hdr = read_container(path)
    eta = None if math.isnan(hdr.eta[0]) else hdr.eta
    alpha = None if math.isnan(hdr.alpha) else hdr.alpha
    return BoundaryTrace(arr, hdr.dt, hdr.tag, eta, alpha)


def trace_to_csv(path, trace, gamma):
    """Long-format CSV: one row per (time step, Γ sample)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t", "sample", "x", "y", "re", "im"])
        xy = gamma.coords
        for n in range(trace.values.shape[0]):
            t = n * trace.dt
            for k in range(trace.values.shape[1]):
                v = trace.values[n, k]
                w.writerow([n, repr(t), k, repr(xy[k, 0]), repr(xy[k, 1]), repr(float(v.real)), repr(float(v.imag))])


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, obj):
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n").encode())


def _jsonable(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, (tuple, set)):
        return list(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")


class ControlCache:
    """On-disk cache of controls keyed by a hash of everything that determines them.

    Entries are ``<key>.wcip`` (control samples) plus ``<key>.json`` (manifest).
    Unreadable entries count as misses and are overwritten.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def paths(self, key):
        return self.root / f"{key}.wcip", self.root / f"{key}.json"

    def load(self, key):
        data_p, man_p = self.paths(key)
        if not data_p.exists() or not man_p.exists():
            self.misses += 1
            return None
        try:
            arr, hdr = read_container(data_p)
            man = json.loads(man_p.read_text())
            if man.get("key") != key or man.get("sha256") != sha256_file(data_p):
                raise ContainerError("manifest does not match payload")
        except (ContainerError, ValueError, OSError):
            self.misses += 1
            return None
        self.hits += 1
        return arr, hdr, man

    def store(self, key, values, manifest, **kw):
        data_p, man_p = self.paths(key)
        write_container(data_p, values, **kw)
        man = dict(manifest, key=key, sha256=sha256_file(data_p), written=time.strftime("%Y-%m-%dT%H:%M:%S"))
        man.setdefault("created", man["written"])
        write_json(man_p, man)
