"""Self-describing checkpoint container: named float64 arrays plus a JSON
header (config echo, seed).  Backed by numpy's npz format."""

from __future__ import annotations

import hashlib
import io
import json
import zipfile

import numpy as np

_META_KEY = "__meta__"


def save(path, arrays, meta):
    """arrays: {name: ndarray}; meta: JSON-serializable dict.

    Entries are written with fixed zip metadata (no timestamps) so that
    identical content produces byte-identical files.
    """
    if _META_KEY in arrays:
        raise ValueError(f"array name {_META_KEY!r} is reserved")
    payload = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}
    payload[_META_KEY] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(payload):
            buf = io.BytesIO()
            np.save(buf, payload[name])
            info = zipfile.ZipInfo(name + ".npy",
                                   date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def load(path):
    """Returns (arrays, meta)."""
    with np.load(path) as npz:
        meta = json.loads(npz[_META_KEY].tobytes().decode())
        arrays = {k: npz[k] for k in npz.files if k != _META_KEY}
    return arrays, meta


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
