"""Minimal NPY v1.0 reader/writer.

Only the subset this pipeline exchanges is supported: C-order arrays of
little-endian float32, float64 or complex64. Anything else (v2.0 headers,
Fortran order, other dtypes) is rejected with a specific message rather
than silently coerced.
"""

import ast

import numpy as np

from .errors import DataFormatError

NPY_MAGIC = b"\x93NUMPY"
SUPPORTED_DESCRS = ("<f4", "<f8", "<c8")


def read_npy(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:6] != NPY_MAGIC:
        raise DataFormatError(f"{path}: not an NPY file (bad magic)")
    if len(blob) < 10:
        raise DataFormatError(f"{path}: truncated NPY preamble")
    major, minor = blob[6], blob[7]
    if (major, minor) != (1, 0):
        raise DataFormatError(
            f"{path}: unsupported NPY version {major}.{minor}; only version 1.0 is supported")
    header_len = int.from_bytes(blob[8:10], "little")
    header_end = 10 + header_len
    if len(blob) < header_end:
        raise DataFormatError(f"{path}: truncated NPY header")
    try:
        header = ast.literal_eval(blob[10:header_end].decode("latin1").strip())
        descr = header["descr"]
        fortran = header["fortran_order"]
        shape = header["shape"]
    except (ValueError, SyntaxError, KeyError, TypeError) as e:
        raise DataFormatError(f"{path}: malformed NPY header: {e}") from e
    if fortran:
        raise DataFormatError(f"{path}: fortran_order NPY arrays are not supported (need C order)")
    if descr not in SUPPORTED_DESCRS:
        raise DataFormatError(
            f"{path}: unsupported NPY dtype {descr!r}; expected one of {SUPPORTED_DESCRS}")
    if not isinstance(shape, tuple) or not all(isinstance(v, int) and v >= 0 for v in shape):
        raise DataFormatError(f"{path}: malformed NPY shape {shape!r}")
    dtype = np.dtype(descr)
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    actual = len(blob) - header_end
    if actual != expected:
        raise DataFormatError(
            f"{path}: NPY data size mismatch: header declares {expected} bytes, file holds {actual}")
    return np.frombuffer(blob, dtype=dtype, offset=header_end).reshape(shape)


def write_npy(path, arr):
    arr = np.ascontiguousarray(arr)
    descr = arr.dtype.newbyteorder("<").str
    if descr not in SUPPORTED_DESCRS:
        raise DataFormatError(f"cannot write dtype {arr.dtype}; expected one of {SUPPORTED_DESCRS}")
    header = ("{'descr': '%s', 'fortran_order': False, 'shape': %s, }"
              % (descr, repr(arr.shape)))
    # pad so that data starts on a 64-byte boundary, as np.save does
    unpadded = len(NPY_MAGIC) + 2 + 2 + len(header) + 1
    header = header + " " * (-unpadded % 64) + "\n"
    with open(path, "wb") as f:
        f.write(NPY_MAGIC)
        f.write(bytes([1, 0]))
        f.write(len(header).to_bytes(2, "little"))
        f.write(header.encode("latin1"))
        f.write(arr.astype(descr, copy=False).tobytes())
