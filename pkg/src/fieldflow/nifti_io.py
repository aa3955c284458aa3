"""Minimal NIfTI-1 single-file (.nii) reader and writer.

Reads float32 (datatype 16) and int16 (datatype 4) images in either byte
order and writes little-endian float32. Orientation fields (qform/sform)
are carried through unchanged but never interpreted.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from fieldflow.volume import Volume3D

log = logging.getLogger(__name__)

HEADER_SIZE = 348
DATA_OFFSET = 352
MAGIC = b"n+1\x00"

# (name, struct code) for every header field, in file order
_FIELDS = [
    ("sizeof_hdr", "i"),
    ("data_type", "10s"),
    ("db_name", "18s"),
    ("extents", "i"),
    ("session_error", "h"),
    ("regular", "b"),
    ("dim_info", "b"),
    ("dim", "8h"),
    ("intent_p1", "f"),
    ("intent_p2", "f"),
    ("intent_p3", "f"),
    ("intent_code", "h"),
    ("datatype", "h"),
    ("bitpix", "h"),
    ("slice_start", "h"),
    ("pixdim", "8f"),
    ("vox_offset", "f"),
    ("scl_slope", "f"),
    ("scl_inter", "f"),
    ("slice_end", "h"),
    ("slice_code", "b"),
    ("xyzt_units", "b"),
    ("cal_max", "f"),
    ("cal_min", "f"),
    ("slice_duration", "f"),
    ("toffset", "f"),
    ("glmax", "i"),
    ("glmin", "i"),
    ("descrip", "80s"),
    ("aux_file", "24s"),
    ("qform_code", "h"),
    ("sform_code", "h"),
    ("quatern", "6f"),
    ("srow", "12f"),
    ("intent_name", "16s"),
    ("magic", "4s"),
]
_FORMAT = "".join(code for _, code in _FIELDS)

DTYPES = {16: "f4", 4: "i2"}

# fields copied from a template header when re-writing a volume
ORIENTATION_FIELDS = ("qform_code", "sform_code", "quatern", "srow", "xyzt_units")


class NiftiError(ValueError):
    """Base class of malformed-file errors; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class HeaderSizeError(NiftiError):
    pass


class BadMagicError(NiftiError):
    pass


class UnsupportedDatatypeError(NiftiError):
    pass


class DimensionError(NiftiError):
    pass


class VoxOffsetError(NiftiError):
    pass


class TruncatedDataError(NiftiError):
    pass


class NiftiWriteError(OSError):
    pass


def _unpack(raw: bytes, endian: str) -> dict:
    values = struct.unpack(endian + _FORMAT, raw[:HEADER_SIZE])
    out, i = {}, 0
    for name, code in _FIELDS:
        count = int(code[:-1]) if code[:-1].isdigit() and not code.endswith("s") else 1
        if count == 1:
            out[name] = values[i]
        else:
            out[name] = tuple(values[i : i + count])
        i += count
    return out


def _pack(fields: dict, endian: str = "<") -> bytes:
    flat = []
    for name, code in _FIELDS:
        val = fields[name]
        if isinstance(val, (tuple, list)):
            flat.extend(val)
        else:
            flat.append(val)
    return struct.pack(endian + _FORMAT, *flat)


@dataclass
class NiftiHeader:
    """Decoded header. ``fields`` holds every raw header value by name."""

    fields: dict
    endian: str = "<"
    shape: tuple = ()
    spacing: tuple = ()

    @property
    def sizeof_hdr(self) -> int:
        return self.fields["sizeof_hdr"]

    @property
    def dim(self) -> tuple:
        return self.fields["dim"]

    @property
    def datatype(self) -> int:
        return self.fields["datatype"]

    @property
    def pixdim(self) -> tuple:
        return self.fields["pixdim"]

    @property
    def scl_slope(self) -> float:
        return self.fields["scl_slope"]

    @property
    def scl_inter(self) -> float:
        return self.fields["scl_inter"]

    @property
    def vox_offset(self) -> float:
        return self.fields["vox_offset"]

    @property
    def magic(self) -> bytes:
        return self.fields["magic"]


def default_fields() -> dict:
    fields = {}
    for name, code in _FIELDS:
        if code.endswith("s"):
            fields[name] = b""
        elif code[:-1].isdigit():
            fields[name] = (0,) * int(code[:-1])
        else:
            fields[name] = 0
    fields.update(sizeof_hdr=HEADER_SIZE, regular=ord("r"), magic=MAGIC)
    return fields


def parse_header(raw: bytes, file_size: int | None = None) -> NiftiHeader:
    """Validate and decode the first 348 bytes of a single-file NIfTI-1 image."""
    if len(raw) < HEADER_SIZE:
        raise TruncatedDataError("header", f"file holds {len(raw)} bytes, need {HEADER_SIZE}")
    file_size = len(raw) if file_size is None else file_size
    (le,) = struct.unpack_from("<i", raw, 0)
    (be,) = struct.unpack_from(">i", raw, 0)
    if le == HEADER_SIZE:
        endian = "<"
    elif be == HEADER_SIZE:
        endian = ">"
    else:
        raise HeaderSizeError("sizeof_hdr", f"expected 348 in either byte order, read {le}")
    fields = _unpack(raw, endian)
    if fields["magic"] != MAGIC:
        raise BadMagicError("magic", f"expected {MAGIC!r} (single-file NIfTI-1), got {fields['magic']!r}")

    dim = fields["dim"]
    rank = dim[0]
    if not 1 <= rank <= 7:
        raise DimensionError("dim", f"rank dim[0]={rank} outside 1..7")
    extents = dim[1 : rank + 1]
    if any(e < 1 for e in extents):
        raise DimensionError("dim", f"non-positive extent in {extents}")
    if any(e != 1 for e in extents[3:]):
        raise DimensionError("dim", f"rank {rank} image with non-unit extents {extents[3:]} beyond 3D")
    shape = tuple(extents[:3]) + (1,) * (3 - min(rank, 3))

    if fields["datatype"] not in DTYPES:
        raise UnsupportedDatatypeError("datatype", f"code {fields['datatype']} not supported")

    offset = fields["vox_offset"]
    if not math.isfinite(offset) or offset < DATA_OFFSET or offset != int(offset):
        raise VoxOffsetError("vox_offset", f"{offset} is not an integer >= {DATA_OFFSET}")
    if offset > file_size:
        raise VoxOffsetError("vox_offset", f"{offset} lies beyond the end of the file ({file_size} bytes)")

    pixdim = fields["pixdim"]
    spacing = []
    for axis in range(3):
        s = abs(pixdim[axis + 1]) if math.isfinite(pixdim[axis + 1]) else 0.0
        if s == 0.0:
            log.warning("pixdim[%d]=%r unusable, assuming 1 mm", axis + 1, pixdim[axis + 1])
            s = 1.0
        spacing.append(float(s))
    return NiftiHeader(fields, endian, shape, tuple(spacing))


def read_nifti(path) -> tuple[Volume3D, NiftiHeader]:
    """Load a .nii file as a float64 volume with intensity scaling applied."""
    with open(path, "rb") as fh:
        raw = fh.read()
    hdr = parse_header(raw)
    dtype = np.dtype(DTYPES[hdr.datatype]).newbyteorder(hdr.endian)
    count = hdr.shape[0] * hdr.shape[1] * hdr.shape[2]
    start = int(hdr.vox_offset)
    need = count * dtype.itemsize
    if len(raw) - start < need:
        raise TruncatedDataError(
            "data", f"need {need} bytes after offset {start}, file has {len(raw) - start}"
        )
    values = np.frombuffer(raw, dtype=dtype, count=count, offset=start).astype(np.float64)
    slope, inter = hdr.scl_slope, hdr.scl_inter
    if slope != 0 and math.isfinite(slope):
        inter = inter if math.isfinite(inter) else 0.0
        if slope != 1 or inter != 0:
            values = values * slope + inter
    data = values.reshape(hdr.shape, order="F")
    return Volume3D(data, hdr.spacing), hdr


def build_header(v: Volume3D, template: NiftiHeader | None = None) -> dict:
    fields = default_fields()
    if template is not None:
        for name in ORIENTATION_FIELDS:
            fields[name] = template.fields[name]
    nx, ny, nz = v.shape
    qfac = template.pixdim[0] if template is not None and template.pixdim[0] in (-1.0, 1.0) else 1.0
    fields.update(
        dim=(3, nx, ny, nz, 1, 1, 1, 1),
        datatype=16,
        bitpix=32,
        pixdim=(qfac, *v.spacing, 0.0, 0.0, 0.0, 0.0),
        vox_offset=float(DATA_OFFSET),
        scl_slope=1.0,
        scl_inter=0.0,
    )
    return fields


def write_nifti(v: Volume3D, path, template: NiftiHeader | None = None):
    """Write ``v`` as little-endian float32 with a 352-byte data offset.

    Orientation fields of ``template`` (if given) are copied unchanged.
    """
    header = _pack(build_header(v, template))
    payload = v.data.astype("<f4").tobytes(order="F")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(b"\x00" * (DATA_OFFSET - HEADER_SIZE))
            fh.write(payload)
    except OSError as exc:
        raise NiftiWriteError(f"cannot write NIfTI file {path}: {exc}") from exc
