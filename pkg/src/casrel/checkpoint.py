"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    magic        8 bytes   b"CASRELCK"
    version      uint32    currently 1
    meta_len     uint32    length of the UTF-8 JSON metadata blob
    meta         meta_len bytes
    count        uint32    number of tensors
    count x {
        name_len uint32
        name     name_len bytes, UTF-8
        ndim     uint32
        dims     ndim x uint64
        data     prod(dims) x float64, row-major
    }

Tensors are written in sorted name order, so identical parameter maps produce
identical files.
"""

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"CASRELCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(params, meta=None):
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    out = [MAGIC, struct.pack("<II", VERSION, len(meta_bytes)), meta_bytes, struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.asarray(params[name], dtype="<f8", order="C")  # keeps 0-d tensors 0-d
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes(order="C"))
    return b"".join(out)


def loads(blob):
    """Inverse of :func:`dumps`; returns ``(params, meta)``."""
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    version, meta_len = take("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    meta = json.loads(blob[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = take("<I")
    params = {}
    for _ in range(count):
        (name_len,) = take("<I")
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = take("<I")
        dims = take(f"<{ndim}Q") if ndim else ()
        n = int(np.prod(dims)) if ndim else 1
        if pos + 8 * n > len(blob):
            raise CheckpointError("truncated checkpoint")
        params[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).astype(np.float64).reshape(dims)
        pos += 8 * n
    if pos != len(blob):
        raise CheckpointError("trailing bytes after last tensor")
    return params, meta


def write_atomic(path, data):
    """Write bytes or text to ``path`` via a temp file in the same directory plus rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, params, meta=None):
    write_atomic(path, dumps(params, meta))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
