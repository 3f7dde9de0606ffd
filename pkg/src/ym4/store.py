"""Bit-exact persistence: field files, matrix exports, report JSON.

One binary format (a human-auditable JSON header line followed by raw
little-endian float64) covers algebra-valued scalar, 1-form and 2-form
fields; reports are JSON documents with a versioned schema; sparse
matrices go to plain-text coordinate files.  Every writer goes through a
temp-file + rename so concurrent readers never see a torn file.
"""

import dataclasses
import datetime
import json
import os
import tempfile

import numpy as np
import scipy.sparse as sp

from .lattice import Grid

MAGIC = "YMF1"
SCHEMA = 1

_KIND_COMPONENTS = {"scalar": 1, "oneform": 4, "twoform": 6}


class FieldFormatError(ValueError):
    """A field file's header or payload is malformed."""


@dataclasses.dataclass
class FieldFile:
    kind: str
    grid: Grid
    values: np.ndarray


def _atomic_bytes(path, data):
    """Write bytes so readers see either the old file or the new one."""
    path = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".ym4-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _kind_for_shape(grid, shape):
    base = grid.shape
    if shape == base + (3,):
        return "scalar"
    if shape == base + (4, 3):
        return "oneform"
    if shape == base + (6, 3):
        return "twoform"
    raise FieldFormatError(f"field shape {shape} does not fit grid {base}")


def write_field(path, grid, values, kind=None):
    """Serialize an algebra-valued field; rejects non-finite payloads."""
    values = np.asarray(values, dtype=np.float64)
    inferred = _kind_for_shape(grid, values.shape)
    if kind is None:
        kind = inferred
    elif kind != inferred:
        raise FieldFormatError(f"kind {kind!r} does not match shape {values.shape}")
    if not np.isfinite(values).all():
        raise FieldFormatError("field contains NaN or Inf; refusing to write")
    header = {
        "magic": MAGIC,
        "kind": kind,
        "grid": {
            "L": float(grid.half_width),
            "N": int(grid.n),
            "center": [float(c) for c in grid.center],
        },
        "algebra": "su2",
        "endianness": "LE",
    }
    payload = np.ascontiguousarray(values, dtype="<f8").tobytes()
    _atomic_bytes(path, json.dumps(header, sort_keys=True).encode() + b"\n" + payload)


def read_field(path):
    """Read a field file back, bit-identical to what was written."""
    with open(path, "rb") as f:
        raw = f.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FieldFormatError("missing header line")
    try:
        header = json.loads(raw[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FieldFormatError(f"unreadable header: {e}") from e
    if header.get("magic") != MAGIC:
        raise FieldFormatError(f"bad magic {header.get('magic')!r}, want {MAGIC!r}")
    kind = header.get("kind")
    if kind not in _KIND_COMPONENTS:
        raise FieldFormatError(f"unknown field kind {kind!r}")
    if header.get("endianness") != "LE":
        raise FieldFormatError(f"unsupported endianness {header.get('endianness')!r}")
    g = header["grid"]
    grid = Grid(float(g["L"]), int(g["N"]), np.asarray(g["center"], dtype=float))
    comps = _KIND_COMPONENTS[kind]
    expected = grid.n**4 * comps * 3 * 8
    payload = raw[nl + 1 :]
    if len(payload) != expected:
        raise FieldFormatError(
            f"payload is {len(payload)} bytes, header implies {expected}"
        )
    shape = grid.shape + ((comps,) if comps > 1 else ()) + (3,)
    values = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return FieldFile(kind=kind, grid=grid, values=values)


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {}
        for f in dataclasses.fields(obj):
            out[f.name] = _jsonable(getattr(obj, f.name))
        return out
    if isinstance(obj, Grid):
        return {
            "L": float(obj.half_width),
            "N": int(obj.n),
            "center": [float(c) for c in obj.center],
        }
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__} into a report")


def _kind_name(obj):
    name = type(obj).__name__
    out = [name[0].lower()]
    for c in name[1:]:
        if c.isupper():
            out.append("_")
            out.append(c.lower())
        else:
            out.append(c)
    return "".join(out)


def report_document(report, meta=True):
    """JSON-ready dict for a report object (dataclass or mapping)."""
    doc = {"schema": SCHEMA, "kind": _kind_name(report), "report": _jsonable(report)}
    if isinstance(report, dict):
        doc["kind"] = report.get("kind", "dict")
        doc["report"] = {k: v for k, v in _jsonable(report).items() if k != "kind"}
    if meta:
        doc["meta"] = {
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat()
        }
    return doc


def write_report(path, report, meta=True):
    """Write a report as deterministic JSON (meta=False drops timestamps)."""
    doc = report_document(report, meta=meta)
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    _atomic_bytes(path, text.encode())
    return doc


def write_table(path, columns, rows):
    """CSV writer for eigenvalue/ratio tables; floats keep full precision."""
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(f"{float(v):.17g}")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    _atomic_bytes(path, ("\n".join(lines) + "\n").encode())


def export_matrix(path, matrix):
    """Coordinate-format text export: `# rows cols nnz` then one entry/line."""
    coo = sp.coo_matrix(matrix)
    lines = [f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}"]
    for i, j, v in zip(coo.row, coo.col, coo.data):
        lines.append(f"{i} {j} {v:.17g}")
    _atomic_bytes(path, ("\n".join(lines) + "\n").encode())


def import_matrix(path):
    """Read a matrix written by `export_matrix` back as CSR."""
    with open(path, "r") as f:
        head = f.readline().split()
        if len(head) != 4 or head[0] != "#":
            raise FieldFormatError("matrix file lacks the '# rows cols nnz' header")
        rows, cols, nnz = (int(x) for x in head[1:])
        ii = np.empty(nnz, dtype=np.int64)
        jj = np.empty(nnz, dtype=np.int64)
        vv = np.empty(nnz, dtype=np.float64)
        for k in range(nnz):
            parts = f.readline().split()
            if len(parts) != 3:
                raise FieldFormatError(f"matrix entry {k} malformed")
            ii[k], jj[k], vv[k] = int(parts[0]), int(parts[1]), float(parts[2])
    return sp.coo_matrix((vv, (ii, jj)), shape=(rows, cols)).tocsr()
