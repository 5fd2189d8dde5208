"""Binary grid files and CSV emission.

Binary layout (little-endian throughout)::

    magic      4 bytes   b"SMXF" (field) or b"SMXW" (Wigner grid)
    version    u32
    ndim       u32
    shape      ndim * u64
    flags      u32       bit 0: complex payload
    meta_len   u32
    meta       meta_len bytes of UTF-8 JSON
    payload    f64 values in C order; complex values as (re, im) pairs
"""

from __future__ import annotations

import csv
import io as _io
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import FieldSnapshot, Grid
from .phase_space import WignerGrid, WindowSpec

FORMAT_VERSION = 1
FIELD_MAGIC = b"SMXF"
WIGNER_MAGIC = b"SMXW"


class FormatError(ValueError):
    """File does not follow the binary grid layout."""


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def write_grid_file(path, magic: bytes, array: np.ndarray, meta: dict) -> None:
    array = np.ascontiguousarray(array)
    is_complex = np.iscomplexobj(array)
    payload = np.ascontiguousarray(array, dtype="<c16" if is_complex else "<f8")
    meta_bytes = json.dumps(meta, sort_keys=True, default=_json_default).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", FORMAT_VERSION, array.ndim))
        fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        fh.write(struct.pack("<II", int(is_complex), len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(payload.tobytes())


def read_grid_file(path, magic: bytes):
    data = Path(path).read_bytes()
    if data[:4] != magic:
        raise FormatError(f"bad magic {data[:4]!r}, expected {magic!r}")
    version, ndim = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    off = 12
    shape = struct.unpack_from(f"<{ndim}Q", data, off)
    off += 8 * ndim
    flags, meta_len = struct.unpack_from("<II", data, off)
    off += 8
    meta = json.loads(data[off : off + meta_len].decode("utf-8"))
    off += meta_len
    dtype = "<c16" if flags & 1 else "<f8"
    count = int(np.prod(shape)) if ndim else 1
    expected = count * np.dtype(dtype).itemsize
    if len(data) - off != expected:
        raise FormatError(f"payload has {len(data) - off} bytes, expected {expected}")
    array = np.frombuffer(data, dtype=dtype, count=count, offset=off).reshape(shape).copy()
    return array, meta


def _grid_meta(grid: Grid) -> dict:
    return {
        "shape": list(grid.shape),
        "spacing": list(grid.spacing),
        "origin": list(grid.origin),
        "axes": list(grid.axes),
        "periodic": list(grid.periodic),
        "fixed": list(grid.fixed),
        "pinned_k": list(grid.pinned_k),
    }


def _grid_from_meta(m: dict) -> Grid:
    return Grid(
        shape=tuple(m["shape"]),
        spacing=tuple(m["spacing"]),
        origin=tuple(m["origin"]),
        axes=tuple(m["axes"]),
        periodic=tuple(m["periodic"]),
        fixed=tuple(m["fixed"]),
        pinned_k=tuple(m["pinned_k"]),
    )


def save_field(path, snap: FieldSnapshot) -> None:
    meta = {"grid": _grid_meta(snap.grid), "epsilon_scale": snap.epsilon_scale, "meta": snap.meta}
    write_grid_file(path, FIELD_MAGIC, snap.values, meta)


def load_field(path) -> FieldSnapshot:
    values, meta = read_grid_file(path, FIELD_MAGIC)
    return FieldSnapshot(_grid_from_meta(meta["grid"]), values, meta["epsilon_scale"], meta=meta.get("meta", {}))


def save_wigner(path, w: WignerGrid) -> None:
    meta = {
        "grid": _grid_meta(w.grid),
        "epsilon_scale": w.epsilon_scale,
        "probes": w.probes,
        "probe_indices": w.probe_indices,
        "k_axes": [np.asarray(a) for a in w.k_axes],
        "window": {
            "half_width": w.window.half_width,
            "taper": w.window.taper,
            "taper_fraction": w.window.taper_fraction,
        },
        "smoothing": w.smoothing,
    }
    write_grid_file(path, WIGNER_MAGIC, w.values, meta)


def load_wigner(path) -> WignerGrid:
    values, meta = read_grid_file(path, WIGNER_MAGIC)
    win = meta["window"]
    hw = win["half_width"]
    return WignerGrid(
        grid=_grid_from_meta(meta["grid"]),
        probes=np.asarray(meta["probes"], dtype=float),
        probe_indices=np.asarray(meta["probe_indices"], dtype=int),
        k_axes=tuple(np.asarray(a, dtype=float) for a in meta["k_axes"]),
        values=values,
        window=WindowSpec(tuple(hw) if isinstance(hw, list) else hw, win["taper"], win["taper_fraction"]),
        epsilon_scale=meta["epsilon_scale"],
        smoothing=tuple(meta["smoothing"]) if meta["smoothing"] is not None else None,
    )


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return value


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """RFC 4180 text (CRLF line ends, minimal quoting); floats use ``repr``."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    Path(path).write_text(csv_text(header, rows), encoding="utf-8", newline="")


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))
