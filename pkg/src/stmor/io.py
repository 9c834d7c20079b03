"""Binary artifact container used by every pipeline stage.

Layout: magic ``STMOR``, a kind byte string, a format version, a
length-prefixed JSON header, then named little-endian arrays.  The header
always embeds {schema version, case id, mesh hash, upstream hashes} so a
stage can refuse stale inputs.
"""

import json
import struct

import numpy as np

MAGIC = b"STMOR"
FORMAT_VERSION = 1

_DTYPES = {"f": "<f8", "i": "<i8"}
_CODES = {np.dtype("float64"): "f", np.dtype("int64"): "i"}


class ArtifactError(Exception):
    """Raised for malformed, mismatched, or truncated artifact files."""


def write_artifact(path, kind, header, arrays):
    """Write named arrays with a JSON header to a versioned binary file."""
    head = dict(header)
    head["schema_version"] = FORMAT_VERSION
    head["kind"] = kind
    order = list(arrays)
    head["_arrays"] = []
    blobs = []
    for name in order:
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype not in _CODES:
            arr = np.ascontiguousarray(arr, dtype=np.float64)
        code = _CODES[arr.dtype]
        head["_arrays"].append([name, code, list(arr.shape)])
        blobs.append(arr.astype(_DTYPES[code], copy=False).tobytes())
    payload = json.dumps(head, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        kb = kind.encode()
        fh.write(struct.pack("<H", len(kb)))
        fh.write(kb)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def read_artifact(path, expect_kind=None):
    """Read (header, arrays); optionally check the artifact kind."""
    with open(path, "rb") as fh:
        if fh.read(5) != MAGIC:
            raise ArtifactError("%s: not an artifact file" % path)
        (ver,) = struct.unpack("<H", fh.read(2))
        if ver != FORMAT_VERSION:
            raise ArtifactError("%s: unsupported format version %d" % (path, ver))
        (klen,) = struct.unpack("<H", fh.read(2))
        kind = fh.read(klen).decode()
        if expect_kind is not None and kind != expect_kind:
            raise ArtifactError("%s: expected a %r artifact, found %r"
                                % (path, expect_kind, kind))
        (plen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(plen).decode())
        arrays = {}
        for name, code, shape in header.pop("_arrays"):
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ArtifactError("%s: truncated array %r" % (path, name))
            arrays[name] = np.frombuffer(raw, dtype=_DTYPES[code]).reshape(shape).copy()
    return header, arrays


def check_mesh_hash(header, mesh_hash, path="artifact"):
    """Hard error if the artifact was produced on a different mesh."""
    found = header.get("mesh_hash")
    if found != mesh_hash:
        raise ArtifactError("%s was built on mesh %s, current mesh is %s; "
                            "rebuild the stale stage" % (path, found, mesh_hash))


def check_upstream(header, key, expected, path="artifact"):
    """Hard error if an upstream-stage hash embedded in the header mismatches."""
    found = header.get("upstream", {}).get(key)
    if found != expected:
        raise ArtifactError("%s: upstream %s hash %s does not match %s"
                            % (path, key, found, expected))
