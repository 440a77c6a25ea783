"""Binary grid file format ("MRNL") for complex, real and boolean arrays.

Layout, all little-endian regardless of host byte order:

    magic   4 bytes  b"MRNL"
    version u16      format version (currently 1)
    dtype   u8       0 = complex128, 1 = float64, 2 = bool (packed 8/byte)
    ndim    u8
    dims    ndim * u32
    payload row-major; complex values interleaved (re, im) float64;
            booleans packed big-endian within each byte, row-major.

Round-trips are bit-identical, which the ensemble runner relies on for
resumable, order-independent output.
"""

import struct

import numpy as np

MAGIC = b"MRNL"
VERSION = 1

_DTYPE_TAGS = {0: np.complex128, 1: np.float64, 2: np.bool_}


class GridFileError(ValueError):
    """Malformed or inconsistent grid file."""


def _tag_for(arr):
    if arr.dtype == np.complex128:
        return 0
    if arr.dtype == np.float64:
        return 1
    if arr.dtype == np.bool_:
        return 2
    raise GridFileError(f"unsupported dtype {arr.dtype}; expected complex128/float64/bool")


def write_grid(path, arr):
    """Write an array to ``path`` in MRNL format."""
    arr = np.ascontiguousarray(arr)
    tag = _tag_for(arr)
    header = MAGIC + struct.pack("<HBB", VERSION, tag, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    if tag == 0:
        payload = arr.astype("<c16").tobytes()
    elif tag == 1:
        payload = arr.astype("<f8").tobytes()
    else:
        payload = np.packbits(arr.reshape(-1)).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_grid(path):
    """Read an MRNL grid file back into a numpy array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise GridFileError(f"{path}: bad magic {raw[:4]!r}")
    version, tag, ndim = struct.unpack("<HBB", raw[4:8])
    if version != VERSION:
        raise GridFileError(f"{path}: unsupported version {version}")
    if tag not in _DTYPE_TAGS:
        raise GridFileError(f"{path}: unknown dtype tag {tag}")
    dims = struct.unpack(f"<{ndim}I", raw[8:8 + 4 * ndim])
    payload = raw[8 + 4 * ndim:]
    count = int(np.prod(dims)) if ndim else 1
    if tag == 0:
        expect = count * 16
        if len(payload) != expect:
            raise GridFileError(f"{path}: payload length {len(payload)} != {expect}")
        arr = np.frombuffer(payload, dtype="<c16").astype(np.complex128)
    elif tag == 1:
        expect = count * 8
        if len(payload) != expect:
            raise GridFileError(f"{path}: payload length {len(payload)} != {expect}")
        arr = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    else:
        expect = (count + 7) // 8
        if len(payload) != expect:
            raise GridFileError(f"{path}: payload length {len(payload)} != {expect}")
        arr = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=count).astype(bool)
    return arr.reshape(dims)
