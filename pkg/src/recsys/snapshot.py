#!/usr/bin/env python3
"""
Snapshot Format

Versioned binary snapshots for models, attack MLPs and soft-decision sets.

Layout (little endian):
    magic      4 bytes  (b"PMOD", b"PMLP" or b"PSDS")
    version    uint16
    count      uint16   number of arrays
    tag        32 bytes content hash (reference set for PSDS, zeros otherwise)
    per array: ndim uint8, then ndim uint32 dimensions
    body       every array as row-major float64, in header order

A JSON sidecar (``<path>.json``) carries configuration and provenance.
"""

import json
import struct

import numpy as np

from src.recsys.model import ModelParams
from src.utils.errors import InputError

FORMAT_VERSION = 1
MODEL_MAGIC = b"PMOD"
MLP_MAGIC = b"PMLP"
DECISIONS_MAGIC = b"PSDS"
TAG_SIZE = 32


def write_arrays(path, magic, arrays, tag=b"", meta=None):
    """
    Write arrays under a magic header, plus an optional JSON sidecar.

    Args:
        path (str): Output file
        magic (bytes): 4-byte kind marker
        arrays (list): numpy arrays
        tag (bytes): Up to 32 bytes embedded in the header
        meta (dict, optional): Sidecar content
    """
    if len(tag) > TAG_SIZE:
        raise InputError("snapshot tag longer than 32 bytes")
    header = bytearray(magic)
    header += struct.pack("<HH", FORMAT_VERSION, len(arrays))
    header += tag.ljust(TAG_SIZE, b"\0")
    for a in arrays:
        header += struct.pack("<B", a.ndim)
        header += struct.pack(f"<{a.ndim}I", *a.shape)
    with open(path, "wb") as f:
        f.write(bytes(header))
        for a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    if meta is not None:
        with open(f"{path}.json", "w", encoding="utf-8") as f:
            json.dump(meta, f, sort_keys=True, indent=1)
            f.write("\n")


def read_arrays(path, magic):
    """
    Read a snapshot written by ``write_arrays``.

    Returns:
        tuple: (list of arrays, tag bytes)
    """
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != magic:
        raise InputError(f"{path}: expected magic {magic!r}, found {data[:4]!r}")
    version, count = struct.unpack_from("<HH", data, 4)
    if version != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported snapshot version {version}")
    offset = 8
    tag = data[offset:offset + TAG_SIZE].rstrip(b"\0")
    offset += TAG_SIZE
    shapes = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<B", data, offset)
        offset += 1
        shapes.append(struct.unpack_from(f"<{ndim}I", data, offset))
        offset += 4 * ndim
    arrays = []
    for shape in shapes:
        size = int(np.prod(shape)) if shape else 1
        arrays.append(np.frombuffer(data, dtype="<f8", count=size, offset=offset).reshape(shape).copy())
        offset += 8 * size
    return arrays, tag


def save_model(path, params, meta=None):
    """Write a ModelParams snapshot; the header starts with |P| and d via the table shape."""
    write_arrays(path, MODEL_MAGIC, params.arrays(), meta=meta)


def load_model(path):
    arrays, _ = read_arrays(path, MODEL_MAGIC)
    return ModelParams(*arrays)
