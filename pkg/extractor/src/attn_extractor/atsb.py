"""Writer for the ATSB tensor container the engine consumes.

Layout (little-endian): "ATSB" magic, uint16 version=1, uint8 dtype=0
(float32), uint8 ndim, ndim uint32 dims, then the row-major payload.
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"ATSB"
VERSION = 1
DTYPE_F32 = 0


def write_tensor(path, values):
    arr = np.ascontiguousarray(values, dtype="<f4")
    header = MAGIC + struct.pack("<HBB", VERSION, DTYPE_F32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())
