"""Bit-exact serialization of ternary branches.

Blob layout (all little-endian):

    offset  size        field
    0       4           magic "DBQ1"
    4       2           format version (currently 1)
    6       1           branch count B
    7       8           element count D
    15      8*B         branch scales, float64
    15+8B   B*ceil(D/4) payload, 2 bits per element, branch-major

Element codes: 00 -> 0, 01 -> +1, 10 -> -1; 11 is invalid. Element k of a
branch sits in byte k//4 at bit position 2*(k%4) (low bits first). Trailing
pad bits are zero. A checkpoint container concatenates named blobs behind a
"DBQC" header with an index table.
"""

from __future__ import annotations

import struct

import numpy as np

from .quantizer import TernaryBranches

MAGIC = b"DBQ1"
CONTAINER_MAGIC = b"DBQC"
VERSION = 1

_TO_CODE = {0: 0, 1: 1, -1: 2}


class PackError(ValueError):
    """Base class for malformed packed-ternary input."""


class BadMagicError(PackError):
    pass


class UnsupportedVersionError(PackError):
    pass


class InvalidCodeError(PackError):
    def __init__(self, byte_offset: int):
        super().__init__(f"invalid ternary code 0b11 in payload byte at offset {byte_offset}")
        self.byte_offset = byte_offset


class TruncatedError(PackError):
    pass


def blob_size(B: int, D: int) -> int:
    """Exact byte size of a packed blob: 15 + 8B + B*ceil(D/4)."""
    return 15 + 8 * B + B * ((D + 3) // 4)


def pack(t: TernaryBranches) -> bytes:
    """Serialize branches to the packed 2-bit format."""
    B, D = t.branch_vectors.shape
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HBQ", VERSION, B, D)
    out += struct.pack(f"<{B}d", *t.scales)
    codes = np.zeros(t.branch_vectors.shape, dtype=np.uint8)
    codes[t.branch_vectors == 1] = 1
    codes[t.branch_vectors == -1] = 2
    pad = (-D) % 4
    if pad:
        codes = np.concatenate([codes, np.zeros((B, pad), dtype=np.uint8)], axis=1)
    quads = codes.reshape(B, -1, 4)
    packed = (quads[:, :, 0] | (quads[:, :, 1] << 2)
              | (quads[:, :, 2] << 4) | (quads[:, :, 3] << 6)).astype(np.uint8)
    out += packed.tobytes()
    return bytes(out)


def unpack(blob: bytes) -> TernaryBranches:
    """Parse a packed blob back into branches; pack/unpack round-trips
    bit-exactly and all malformed inputs raise a specific PackError."""
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 15:
        raise TruncatedError(f"header truncated at {len(blob)} bytes")
    version, B, D = struct.unpack_from("<HBQ", blob, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")
    if B < 1:
        raise PackError("branch count must be at least 1")
    expected = blob_size(B, D)
    if len(blob) < expected:
        raise TruncatedError(f"blob is {len(blob)} bytes, layout requires {expected}")
    scales = np.array(struct.unpack_from(f"<{B}d", blob, 15))
    payload_off = 15 + 8 * B
    per_branch = (D + 3) // 4
    raw = np.frombuffer(blob, dtype=np.uint8, count=B * per_branch,
                        offset=payload_off).reshape(B, per_branch)
    codes = np.stack([(raw >> (2 * j)) & 0b11 for j in range(4)],
                     axis=2).reshape(B, -1)[:, :D]
    bad = np.argwhere(codes == 3)
    if bad.size:
        b, k = bad[0]
        raise InvalidCodeError(payload_off + int(b) * per_branch + int(k) // 4)
    values = np.zeros(codes.shape, dtype=np.int8)
    values[codes == 1] = 1
    values[codes == 2] = -1
    return TernaryBranches(branch_vectors=values, scales=scales)


def pack_container(named_blobs: dict[str, bytes]) -> bytes:
    """Concatenate named blobs behind an index table (checkpoint format)."""
    out = bytearray()
    out += CONTAINER_MAGIC
    out += struct.pack("<HI", VERSION, len(named_blobs))
    body = bytearray()
    index = bytearray()
    for name, blob in named_blobs.items():
        raw = name.encode("utf-8")
        index += struct.pack("<H", len(raw)) + raw
        index += struct.pack("<QQ", len(body), len(blob))
        body += blob
    out += index + body
    return bytes(out)


def unpack_container(data: bytes) -> dict[str, bytes]:
    if len(data) < 4 or data[:4] != CONTAINER_MAGIC:
        raise BadMagicError(f"bad container magic {data[:4]!r}")
    if len(data) < 10:
        raise TruncatedError("container header truncated")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported container version {version}")
    offset = 10
    entries = []
    for _ in range(count):
        if offset + 2 > len(data):
            raise TruncatedError("container index truncated")
        (nlen,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + nlen + 16 > len(data):
            raise TruncatedError("container index truncated")
        name = data[offset:offset + nlen].decode("utf-8")
        offset += nlen
        start, length = struct.unpack_from("<QQ", data, offset)
        offset += 16
        entries.append((name, start, length))
    base = offset
    out = {}
    for name, start, length in entries:
        if base + start + length > len(data):
            raise TruncatedError(f"blob {name!r} extends past end of container")
        out[name] = data[base + start:base + start + length]
    return out
