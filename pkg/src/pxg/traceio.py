"""Versioned binary persistence for sampler traces.

Layout: 8-byte magic, 1-byte schema version, little-endian uint64
header length, canonical JSON header (run metadata plus an array
manifest), then each array's raw C-order little-endian bytes in
manifest order.  No timestamps anywhere, so identical runs produce
byte-identical files.
"""

import json
import struct
import numpy as np

from .gibbs import TraceStore

MAGIC = b"PXGTRACE"
VERSION = 1

# fixed array order; names match TraceStore fields
_ARRAY_FIELDS = (
    "z", "pi", "mu", "sigmasq", "graphs", "omegas",
    "loglik_y", "loglik_x", "Y", "X",
)


class TraceFormatError(RuntimeError):
    """Raised when a trace file is corrupt or from an unknown schema."""


def save_trace(path, trace):
    """Write a TraceStore to path in the versioned binary format."""
    arrays = []
    manifest = []
    for name in _ARRAY_FIELDS:
        a = np.ascontiguousarray(getattr(trace, name))
        if a.dtype.byteorder == ">":
            a = a.astype(a.dtype.newbyteorder("<"))
        arrays.append(a)
        manifest.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape)})
    header = json.dumps(
        {"meta": trace.meta, "arrays": manifest},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for a in arrays:
            fh.write(a.tobytes(order="C"))


def load_trace(path):
    """Read a trace written by save_trace."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise TraceFormatError(f"{path}: not a trace file (bad magic)")
        version = fh.read(1)
        if len(version) != 1 or version[0] != VERSION:
            got = version[0] if version else "EOF"
            raise TraceFormatError(
                f"{path}: unsupported trace schema version {got}"
            )
        raw_len = fh.read(8)
        if len(raw_len) != 8:
            raise TraceFormatError(f"{path}: truncated header length")
        (header_len,) = struct.unpack("<Q", raw_len)
        raw_header = fh.read(header_len)
        if len(raw_header) != header_len:
            raise TraceFormatError(f"{path}: truncated header")
        try:
            header = json.loads(raw_header.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise TraceFormatError(f"{path}: unreadable header: {exc}") from exc
        manifest = header.get("arrays")
        if not isinstance(manifest, list) or [e.get("name") for e in manifest] != list(
            _ARRAY_FIELDS
        ):
            raise TraceFormatError(f"{path}: unexpected array manifest")
        arrays = {}
        for entry in manifest:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(int(s) for s in entry["shape"])
            nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
            buf = fh.read(nbytes)
            if len(buf) != nbytes:
                raise TraceFormatError(
                    f"{path}: truncated array {entry['name']}"
                )
            arrays[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
        if fh.read(1):
            raise TraceFormatError(f"{path}: trailing bytes after arrays")
    return TraceStore(meta=header.get("meta", {}), **arrays)
