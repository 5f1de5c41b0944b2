"""Binary and CSV serialization of lattices and profiles.

Field dump layout (little-endian throughout):

    magic   5 bytes  b"SFLD1" (field) or b"PSI01" (solution)
    n_x     uint32
    n_t     uint32
    x0, dx  float64
    t0, dt  float64
    seed    uint64
    g       float64  (PSI01 only)
    data    n_x * n_t float64, row-major (x index outermost)
"""

import json
import os
import struct
import tempfile

import numpy as np

from .errors import ValidationError
from .field_synthesis import LatticeField, LatticeSpec

FIELD_MAGIC = b"SFLD1"
SOLUTION_MAGIC = b"PSI01"
_HEADER = struct.Struct("<IIddddQ")


def dump_field(fld: LatticeField, path) -> None:
    sp = fld.spec
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(_HEADER.pack(sp.n_x, sp.n_t, sp.x0, sp.dx, sp.t0, sp.dt, fld.seed & (2**64 - 1)))
        fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def load_field(path) -> LatticeField:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != FIELD_MAGIC:
            raise ValidationError(f"bad magic {magic!r}; expected {FIELD_MAGIC!r}")
        n_x, n_t, x0, dx, t0, dt, seed = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(8 * n_x * n_t), dtype="<f8").reshape(n_x, n_t)
    spec = LatticeSpec(x0=x0, dx=dx, n_x=n_x, t0=t0, dt=dt, n_t=n_t)
    return LatticeField(spec=spec, values=data.copy(), seed=seed)


def dump_solution(path, x, times, psi, seed: int, g: float) -> None:
    x = np.asarray(x)
    times = np.asarray(times)
    psi = np.asarray(psi)
    dt = float(times[1] - times[0]) if times.size > 1 else 0.0
    with open(path, "wb") as fh:
        fh.write(SOLUTION_MAGIC)
        fh.write(
            _HEADER.pack(x.size, times.size, float(x[0]), float(x[1] - x[0]), float(times[0]), dt, seed & (2**64 - 1))
        )
        fh.write(struct.pack("<d", g))
        fh.write(np.ascontiguousarray(psi, dtype="<f8").tobytes())


def load_solution(path):
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != SOLUTION_MAGIC:
            raise ValidationError(f"bad magic {magic!r}; expected {SOLUTION_MAGIC!r}")
        n_x, n_t, x0, dx, t0, dt, seed = _HEADER.unpack(fh.read(_HEADER.size))
        (g,) = struct.unpack("<d", fh.read(8))
        data = np.frombuffer(fh.read(8 * n_x * n_t), dtype="<f8").reshape(n_x, n_t)
    x = x0 + dx * np.arange(n_x)
    times = t0 + dt * np.arange(n_t)
    return x, times, data.copy(), seed, g


# ---------------------------------------------------------------------------
# text outputs; %.17g round-trips float64 exactly, so reruns are byte-identical

def write_csv(path, header, columns) -> None:
    columns = [np.asarray(c) for c in columns]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_json(path, payload) -> None:
    atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def atomic_write(path, text: str) -> None:
    """Write via a temp file plus rename so readers never see partial output."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
