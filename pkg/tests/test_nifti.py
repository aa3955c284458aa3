import struct

import numpy as np
import pytest

from fieldflow.nifti_io import (
    BadMagicError,
    DimensionError,
    HeaderSizeError,
    NiftiError,
    NiftiWriteError,
    TruncatedDataError,
    UnsupportedDatatypeError,
    read_nifti,
    write_nifti,
)
from fieldflow.synth import PhantomSpec, make_phantom
from fieldflow.volume import Volume3D


def fixture_bytes(endian, values, shape, datatype=16, slope=1.0, inter=0.0, pixdim=(1.0, 2.0, 3.0), magic=b"n+1\x00"):
    """Single-file NIfTI-1 image assembled field by field at the standard byte offsets."""
    raw = bytearray(352)
    struct.pack_into(endian + "i", raw, 0, 348)
    struct.pack_into(endian + "8h", raw, 40, len(shape), *shape, *([1] * (7 - len(shape))))
    struct.pack_into(endian + "h", raw, 70, datatype)
    struct.pack_into(endian + "h", raw, 72, 32 if datatype == 16 else 16)
    struct.pack_into(endian + "8f", raw, 76, 1.0, *pixdim, 0, 0, 0, 0)
    struct.pack_into(endian + "f", raw, 108, 352.0)
    struct.pack_into(endian + "f", raw, 112, slope)
    struct.pack_into(endian + "f", raw, 116, inter)
    raw[344:348] = magic
    code = "h" if datatype == 4 else "f"
    raw += struct.pack(endian + code * len(values), *values)
    return bytes(raw)


def test_written_layout(tmp_path):
    v = Volume3D(np.random.default_rng(0).random((3, 4, 5)), (0.5, 1.0, 2.0))
    path = tmp_path / "a.nii"
    write_nifti(v, path)
    raw = path.read_bytes()
    assert len(raw) == 352 + 4 * 60
    assert raw[:4] == bytes([0x5C, 0x01, 0x00, 0x00])
    assert raw[344:348] == b"n+1\x00"
    assert struct.unpack_from("<h", raw, 70)[0] == 16
    assert struct.unpack_from("<fff", raw, 108) == (352.0, 1.0, 0.0)
    assert struct.unpack_from("<3f", raw, 80) == (0.5, 1.0, 2.0)


def test_round_trip_after_narrowing(tmp_path):
    v = make_phantom(PhantomSpec((16, 16, 16), seed=3))
    path = tmp_path / "p.nii"
    write_nifti(v, path)
    back, hdr = read_nifti(path)
    narrowed = v.data.astype(np.float32).astype(np.float64)
    assert np.array_equal(back.data, narrowed)
    assert back.spacing == v.spacing and hdr.endian == "<"
    # a second pass is bit-exact
    write_nifti(back, tmp_path / "q.nii")
    assert (tmp_path / "q.nii").read_bytes() == path.read_bytes()


def test_x_fastest_on_disk(tmp_path):
    data = np.arange(24, dtype=float).reshape((2, 3, 4), order="F")
    write_nifti(Volume3D(data), tmp_path / "o.nii")
    stored = np.frombuffer((tmp_path / "o.nii").read_bytes()[352:], "<f4")
    assert np.array_equal(stored, np.arange(24))


@pytest.mark.parametrize("endian", ["<", ">"])
def test_endian_fixture(tmp_path, endian):
    pattern = [0.0, 1.5, -2.0, 3.25, 4.0, 5.5, -6.0, 7.75]
    path = tmp_path / "e.nii"
    path.write_bytes(fixture_bytes(endian, pattern, (2, 2, 2)))
    v, hdr = read_nifti(path)
    assert hdr.endian == endian
    assert v.spacing == (1.0, 2.0, 3.0)
    for i, val in enumerate(pattern):
        assert v.data[i % 2, (i // 2) % 2, i // 4] == val


def test_big_endian_sizeof_swaps_to_known_constant():
    raw = fixture_bytes(">", [0.0] * 8, (2, 2, 2))
    assert struct.unpack_from("<i", raw, 0)[0] == 1543569408


def test_scaling(tmp_path):
    path = tmp_path / "s.nii"
    path.write_bytes(fixture_bytes("<", [0.0, 0.5], (2, 1, 1), slope=2.0, inter=1.0))
    v, _ = read_nifti(path)
    assert v.data.ravel().tolist() == [1.0, 2.0]
    path.write_bytes(fixture_bytes("<", [0.0, 0.5], (2, 1, 1), slope=0.0, inter=1.0))
    assert read_nifti(path)[0].data.ravel().tolist() == [0.0, 0.5]


def test_int16_and_rank_folding(tmp_path):
    path = tmp_path / "i.nii"
    path.write_bytes(fixture_bytes(">", [1, -2, 3, 400], (2, 2, 1, 1, 1), datatype=4))
    v, _ = read_nifti(path)
    assert v.shape == (2, 2, 1)
    assert v.data.ravel(order="F").tolist() == [1, -2, 3, 400]
    path.write_bytes(fixture_bytes("<", [0.0] * 4, (4,)))
    assert read_nifti(path)[0].shape == (4, 1, 1)


@pytest.mark.parametrize(
    "kwargs, error, field",
    [
        ({"magic": b"ni1\x00"}, BadMagicError, "magic"),
        ({"datatype": 64}, UnsupportedDatatypeError, "datatype"),
        ({"shape": (2, 2, 1, 2)}, DimensionError, "dim"),
    ],
)
def test_error_variants(tmp_path, kwargs, error, field):
    shape = kwargs.pop("shape", (2, 2, 1))
    path = tmp_path / "bad.nii"
    path.write_bytes(fixture_bytes("<", [0.0] * 4, shape, **kwargs))
    with pytest.raises(error) as info:
        read_nifti(path)
    assert info.value.field == field


def test_truncated_and_bad_size(tmp_path):
    path = tmp_path / "t.nii"
    path.write_bytes(fixture_bytes("<", [0.0] * 8, (2, 2, 2))[:-4])
    with pytest.raises(TruncatedDataError):
        read_nifti(path)
    raw = bytearray(fixture_bytes("<", [0.0] * 8, (2, 2, 2)))
    raw[0:4] = struct.pack("<i", 540)
    path.write_bytes(bytes(raw))
    with pytest.raises(HeaderSizeError):
        read_nifti(path)
    path.write_bytes(b"\x5c\x01")
    with pytest.raises(NiftiError):
        read_nifti(path)


def test_template_orientation_preserved(tmp_path):
    raw = bytearray(fixture_bytes("<", [0.0] * 8, (2, 2, 2)))
    struct.pack_into("<hh", raw, 252, 1, 2)
    struct.pack_into("<12f", raw, 280, *range(12))
    src = tmp_path / "src.nii"
    src.write_bytes(bytes(raw))
    v, hdr = read_nifti(src)
    write_nifti(v, tmp_path / "dst.nii", template=hdr)
    out = (tmp_path / "dst.nii").read_bytes()
    assert out[252:256] == bytes(raw[252:256])
    assert out[280:328] == bytes(raw[280:328])


def test_write_error_has_path(tmp_path):
    target = tmp_path / "missing" / "x.nii"
    with pytest.raises(NiftiWriteError, match="missing"):
        write_nifti(Volume3D(np.zeros((2, 2, 2))), target)


def test_header_fuzz(tmp_path):
    rng = np.random.default_rng(1234)
    base = fixture_bytes("<", list(np.linspace(0, 1, 27)), (3, 3, 3))
    path = tmp_path / "fuzz.nii"
    rejected = 0
    for case in range(1000):
        raw = bytearray(base)
        kind = case % 4
        if kind == 0:
            for pos in rng.integers(0, 352, size=rng.integers(1, 9)):
                raw[pos] = int(rng.integers(0, 256))
        elif kind == 1:
            raw = raw[: int(rng.integers(0, len(raw)))]
        elif kind == 2:
            pos = int(rng.integers(0, 348 - 4))
            raw[pos : pos + 4] = rng.bytes(4)
        else:
            raw[0:4] = rng.bytes(4) if rng.random() < 0.5 else raw[0:4]
            raw[344:348] = rng.bytes(4) if rng.random() < 0.5 else raw[344:348]
        path.write_bytes(bytes(raw))
        breaks_contract = bytes(raw[344:348]) != b"n+1\x00" or struct.unpack_from("<i", raw.ljust(4, b"\0"), 0)[0] != 348
        try:
            v, _ = read_nifti(path)
        except NiftiError:
            rejected += 1
            continue
        assert not breaks_contract or struct.unpack_from(">i", raw, 0)[0] == 348
        assert v.size >= 1
    assert rejected > 250
