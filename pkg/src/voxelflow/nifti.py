"""Minimal NIfTI-1 volume I/O.

Reads and writes single-file ``.nii`` / ``.nii.gz`` volumes: enough of the
348-byte header to recover the data array and the voxel-to-world matrix.
The sform transform is preferred over the qform when both are present; a
header carrying neither is rejected.  Written files are deterministic
(fixed header fields, gzip mtime pinned to zero) so identical volumes
produce identical bytes.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .errors import AffineError, FormatError

HEADER_SIZE = 348
MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"

_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
    1024: np.int64,
    1280: np.uint64,
}


@dataclass(frozen=True)
class NiftiVolume:
    """A parsed volume: the stored array (rank 3 or 4) plus its 4x4 affine."""

    data: np.ndarray
    affine: np.ndarray


def _open_maybe_gzip(path, mode):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def _quaternion_affine(b, c, d, qfac, pixdim, offset):
    a_sq = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(a_sq) if a_sq > 0 else 0.0
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    affine = np.eye(4)
    affine[:3, 0] = rot[:, 0] * pixdim[0]
    affine[:3, 1] = rot[:, 1] * pixdim[1]
    affine[:3, 2] = rot[:, 2] * pixdim[2] * qfac
    affine[:3, 3] = offset
    return affine


def read_nifti(path) -> NiftiVolume:
    """Parse a NIfTI-1 file into array and affine.

    Raises OSError when the file cannot be read, FormatError when it is not
    a NIfTI-1 single file, and AffineError when the header declares neither
    an sform nor a qform transform.
    """
    with _open_maybe_gzip(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE:
            raise FormatError(f"{path}: truncated header ({len(header)} bytes)")
        for endian in ("<", ">"):
            (sizeof_hdr,) = struct.unpack(endian + "i", header[:4])
            if sizeof_hdr == HEADER_SIZE:
                break
        else:
            raise FormatError(f"{path}: not a NIfTI-1 file (bad header size)")
        magic = header[344:348]
        if magic not in (MAGIC_SINGLE, MAGIC_PAIR):
            raise FormatError(f"{path}: bad magic {magic!r}")
        if magic == MAGIC_PAIR:
            raise FormatError(f"{path}: two-file NIfTI pairs are not supported")

        dim = struct.unpack(endian + "8h", header[40:56])
        ndim = dim[0]
        if not 1 <= ndim <= 7:
            raise FormatError(f"{path}: invalid dim[0]={ndim}")
        shape = tuple(dim[1 : 1 + ndim])
        (datatype,) = struct.unpack(endian + "h", header[70:72])
        if datatype not in _DTYPES:
            raise FormatError(f"{path}: unsupported datatype code {datatype}")
        pixdim = struct.unpack(endian + "8f", header[76:108])
        (vox_offset,) = struct.unpack(endian + "f", header[108:112])
        scl_slope, scl_inter = struct.unpack(endian + "2f", header[112:120])
        qform_code, sform_code = struct.unpack(endian + "2h", header[252:256])
        quatern = struct.unpack(endian + "3f", header[256:268])
        qoffset = struct.unpack(endian + "3f", header[268:280])
        srow = np.array(struct.unpack(endian + "12f", header[280:328])).reshape(3, 4)

        if sform_code > 0:
            affine = np.eye(4)
            affine[:3, :] = srow
        elif qform_code > 0:
            qfac = -1.0 if pixdim[0] == -1.0 else 1.0
            affine = _quaternion_affine(*quatern, qfac, pixdim[1:4], qoffset)
        else:
            raise AffineError(f"{path}: header declares neither sform nor qform")

        fh.seek(int(vox_offset))
        dtype = np.dtype(_DTYPES[datatype]).newbyteorder(endian)
        count = int(np.prod(shape))
        raw = fh.read(count * dtype.itemsize)
        if len(raw) < count * dtype.itemsize:
            raise FormatError(f"{path}: truncated data section")
        data = np.frombuffer(raw, dtype=dtype, count=count)
        data = data.reshape(shape, order="F").astype(np.float64)
        if np.isfinite(scl_slope) and scl_slope != 0.0:
            inter = scl_inter if np.isfinite(scl_inter) else 0.0
            if scl_slope != 1.0 or inter != 0.0:
                data = data * scl_slope + inter
    return NiftiVolume(data=data, affine=affine)


def write_nifti(path, data: np.ndarray, affine: np.ndarray) -> None:
    """Write a rank-3 or rank-4 array with its 4x4 affine as NIfTI-1.

    Data is stored as float64 with the affine in the sform fields
    (sform_code 1).  ``.gz`` paths are gzip-compressed with mtime 0.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim not in (3, 4):
        raise FormatError(f"can only write rank-3 or rank-4 volumes, got rank {data.ndim}")
    affine = np.asarray(affine, dtype=np.float64)
    if affine.shape != (4, 4):
        raise FormatError(f"affine must be 4x4, got {affine.shape}")

    dim = [data.ndim, *data.shape] + [1] * (7 - data.ndim)
    voxel_size = np.linalg.norm(affine[:3, :3], axis=0)
    pixdim = [1.0, *voxel_size] + [1.0] * (8 - 4)
    if data.ndim == 4:
        pixdim[4] = 0.0

    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    struct.pack_into("<b", header, 38, ord("r"))  # regular
    struct.pack_into("<8h", header, 40, *dim)
    struct.pack_into("<h", header, 70, 64)  # float64
    struct.pack_into("<h", header, 72, 64)  # bitpix
    struct.pack_into("<8f", header, 76, *pixdim)
    struct.pack_into("<f", header, 108, 352.0)  # vox_offset
    struct.pack_into("<2f", header, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<b", header, 123, 2)  # xyzt_units: millimeters
    struct.pack_into("<80s", header, 148, b"voxelflow")
    struct.pack_into("<2h", header, 252, 0, 1)  # qform_code, sform_code
    struct.pack_into("<12f", header, 280, *affine[:3, :].ravel())
    struct.pack_into("<4s", header, 344, MAGIC_SINGLE)

    payload = bytes(header) + b"\x00\x00\x00\x00" + data.tobytes(order="F")
    path = str(path)
    if path.endswith(".gz"):
        with open(path, "wb") as fh:
            with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        with open(path, "wb") as fh:
            fh.write(payload)
