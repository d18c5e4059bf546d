"""SPTS container: one self-contained binary file per experiment.

Layout (all integers little-endian)::

    0   4s  magic b"SPTS"
    4   u16 version
    6   u16 byte-order marker 0xFEFF (reads back as 0xFFFE on a swapped reader)
    8   u32 section count
    12  section table, 32 bytes per entry:
            8s  name, ASCII, NUL padded
            u64 offset from the start of the file
            u64 payload length
            u32 CRC-32 of the payload
            u32 reserved (0)
    ..  payloads, back to back in table order

A payload is a u32 header length, a UTF-8 JSON header ``{"meta": {...},
"arrays": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}`` and the raw
little-endian array bytes. JSON is written with sorted keys and no spaces, so
the same content always serializes to the same bytes.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SPTS"
VERSION = 1
BOM = 0xFEFF
KNOWN_SECTIONS = ("CONFIG", "PARAMS", "STACKED", "CBCSC", "BANKS", "TRACE", "REPORT")

_HEADER = struct.Struct("<4sHHI")
_ENTRY = struct.Struct("<8sQQII")
_LEN = struct.Struct("<I")


class ContainerError(ValueError):
    pass


class MissingSectionError(ContainerError):
    def __init__(self, name: str, hint: str = ""):
        msg = f"container has no {name} section"
        if hint:
            msg += f"; {hint}"
        super().__init__(msg)
        self.name = name


@dataclass
class Section:
    meta: dict = field(default_factory=dict)
    arrays: dict[str, np.ndarray] = field(default_factory=dict)


def _le(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    if a.dtype == np.bool_:
        a = a.astype(np.uint8)
    if a.dtype.kind not in "iuf":
        raise ContainerError(f"unsupported array dtype {a.dtype}")
    return a.astype(a.dtype.newbyteorder("<"), copy=False)


def encode_section(sec: Section) -> bytes:
    blobs, table, off = [], [], 0
    for name, arr in sec.arrays.items():
        a = _le(np.asarray(arr))
        raw = a.tobytes()
        table.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                      "offset": off, "nbytes": len(raw)})
        blobs.append(raw)
        off += len(raw)
    header = json.dumps({"meta": sec.meta, "arrays": table}, sort_keys=True,
                        separators=(",", ":"), allow_nan=False).encode()
    return _LEN.pack(len(header)) + header + b"".join(blobs)


def decode_section(payload: bytes) -> Section:
    if len(payload) < _LEN.size:
        raise ContainerError("section payload is truncated")
    (hlen,) = _LEN.unpack_from(payload)
    body = _LEN.size + hlen
    if body > len(payload):
        raise ContainerError("section header runs past the payload")
    try:
        header = json.loads(payload[_LEN.size:body])
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerError(f"bad section header: {e}") from None
    arrays = {}
    for a in header.get("arrays", []):
        start = body + a["offset"]
        end = start + a["nbytes"]
        if end > len(payload):
            raise ContainerError(f"array {a['name']!r} runs past the payload")
        dt = np.dtype(a["dtype"])
        arr = np.frombuffer(payload[start:end], dtype=dt)
        arrays[a["name"]] = arr.astype(dt.newbyteorder("="), copy=True).reshape(a["shape"])
    return Section(header.get("meta", {}), arrays)


def _order(names):
    known = [n for n in KNOWN_SECTIONS if n in names]
    return known + [n for n in names if n not in KNOWN_SECTIONS]


class Container:
    """Named raw payloads. Sections with unrecognised names are carried through untouched."""

    def __init__(self, payloads: dict[str, bytes] | None = None):
        self._payloads: dict[str, bytes] = dict(payloads or {})

    @property
    def names(self) -> list[str]:
        return _order(list(self._payloads))

    def __contains__(self, name: str) -> bool:
        return name in self._payloads

    def raw(self, name: str) -> bytes:
        return self._payloads[name]

    def get(self, name: str, hint: str = "") -> Section:
        if name not in self._payloads:
            raise MissingSectionError(name, hint)
        return decode_section(self._payloads[name])

    def put(self, name: str, sec: Section):
        _check_name(name)
        self._payloads[name] = encode_section(sec)

    def drop(self, *names: str):
        for n in names:
            self._payloads.pop(n, None)

    def to_bytes(self) -> bytes:
        names = self.names
        off = _HEADER.size + _ENTRY.size * len(names)
        head = [_HEADER.pack(MAGIC, VERSION, BOM, len(names))]
        for n in names:
            p = self._payloads[n]
            head.append(_ENTRY.pack(n.encode("ascii"), off, len(p), zlib.crc32(p), 0))
            off += len(p)
        return b"".join(head) + b"".join(self._payloads[n] for n in names)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Container":
        if len(data) < _HEADER.size:
            raise ContainerError("file too short for an SPTS header")
        magic, version, bom, count = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ContainerError(f"bad magic {magic!r}, not an SPTS container")
        if bom != BOM:
            raise ContainerError(f"unexpected byte-order marker 0x{bom:04X}")
        if version > VERSION:
            raise ContainerError(f"container version {version} is newer than supported ({VERSION})")
        table_end = _HEADER.size + _ENTRY.size * count
        if table_end > len(data):
            raise ContainerError("section table runs past end of file")
        spans, payloads = [], {}
        for i in range(count):
            raw_name, off, length, crc, _ = _ENTRY.unpack_from(data, _HEADER.size + i * _ENTRY.size)
            name = raw_name.rstrip(b"\0").decode("ascii", errors="replace")
            if off < table_end or off + length > len(data):
                raise ContainerError(f"section {name} lies outside the payload area")
            if name in payloads:
                raise ContainerError(f"duplicate section {name}")
            p = data[off:off + length]
            if zlib.crc32(p) != crc:
                raise ContainerError(f"checksum mismatch in section {name}")
            spans.append((off, off + length, name))
            payloads[name] = p
        spans.sort()
        for (_, end, a), (start, _, b) in zip(spans, spans[1:]):
            if start < end:
                raise ContainerError(f"sections {a} and {b} overlap")
        return cls(payloads)


def _check_name(name: str):
    if not name or len(name) > 8 or not name.isascii() or "\0" in name:
        raise ContainerError(f"section name {name!r} must be 1-8 ASCII characters")


def read_container(path: str | os.PathLike) -> Container:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise ContainerError(f"no such container: {path}") from None
    return Container.from_bytes(data)


def write_container(path: str | os.PathLike, c: Container):
    """Write via a temporary file and rename so a crash never leaves half a container."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(c.to_bytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
