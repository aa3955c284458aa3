"""Binary checkpoint format.

Layout (little-endian)::

    8 bytes   magic b"UFLD0001"
    u32       length of the UTF-8 JSON config echo
    ...       config echo
    u64       parameter count
    f64[n]    flat parameter array
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from fieldflow.velocity_net.model import VelocityModel

MAGIC = b"UFLD0001"


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: VelocityModel, path, extra: dict | None = None):
    config = dict(model.config())
    if extra:
        config.update(extra)
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<Q", model.n_params))
        fh.write(model.params.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[VelocityModel, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint magic {raw[:8]!r}")
    try:
        (clen,) = struct.unpack_from("<I", raw, 8)
        config = json.loads(raw[12 : 12 + clen].decode("utf-8"))
        (count,) = struct.unpack_from("<Q", raw, 12 + clen)
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint header ({exc})") from None
    start = 20 + clen
    if len(raw) != start + 8 * count:
        raise CheckpointError(f"{path}: expected {count} parameters, file size disagrees")
    model = VelocityModel(hidden=config["hidden"], embed_dim=config["embed_dim"])
    if model.n_params != count:
        raise CheckpointError(f"{path}: {count} parameters stored, architecture needs {model.n_params}")
    model.params[:] = np.frombuffer(raw, dtype="<f8", count=count, offset=start)
    return model, config
