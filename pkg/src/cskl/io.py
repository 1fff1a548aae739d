"""Sketch files, dataset files, and model JSON.

Sketch file layout (little-endian)::

    b"CSKL" | u16 version | u8 kind | u32 d | u32 m | f64 lambda | u64 seed
    | u16 rng_id | u64 count | [d*d f64 covariance, plain Fourier only]
    | values: m (re, im) f64 pairs, or m f64 for quadratic moments
    | u64 CRC-64/ECMA-182 of every preceding byte

Frequencies are not stored; they are regenerated from the scheme fields.
"""
import csv
import json
import os
import struct
import tempfile

import numpy as np
from crc import Calculator, Crc64

from .core import (
    CsklError,
    Dataset,
    DimensionMismatch,
    FeatureKind,
    FeatureScheme,
    FingerprintMismatch,
    InvalidParameter,
    RngId,
    Sketch,
)

MAGIC = b"CSKL"
VERSION = 1
_HEADER = struct.Struct("<4sHBIIdQHQ")
_CRC = Calculator(Crc64.CRC64, optimized=True)
MODEL_SCHEMA_VERSION = 1


class MalformedInput(CsklError, OSError):
    """Unreadable or inconsistent file contents."""


def crc64(data: bytes) -> int:
    return _CRC.checksum(data)


def atomic_write_bytes(path, payload: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".cskl-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_sketch(scheme: FeatureScheme, sketch: Sketch) -> bytes:
    if scheme.fingerprint() != sketch.scheme_fingerprint:
        raise FingerprintMismatch("sketch was not produced by this scheme")
    if sketch.m != scheme.sketch_size:
        raise DimensionMismatch("sketch length does not match the scheme")
    parts = [_HEADER.pack(MAGIC, VERSION, int(scheme.kind), scheme.dim, scheme.sketch_size,
                          scheme.lam, scheme.seed, int(scheme.rng_id), sketch.count)]
    if scheme.kind is FeatureKind.PLAIN_FOURIER:
        parts.append(np.ascontiguousarray(scheme.covariance, dtype="<f8").tobytes())
    if scheme.kind is FeatureKind.QUADRATIC_MOMENT:
        parts.append(np.ascontiguousarray(sketch.values.real, dtype="<f8").tobytes())
    else:
        inter = np.empty((scheme.sketch_size, 2), dtype="<f8")
        inter[:, 0] = sketch.values.real
        inter[:, 1] = sketch.values.imag
        parts.append(inter.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<Q", crc64(body))


def decode_sketch(payload: bytes):
    """Parse a sketch file payload into ``(scheme, sketch)``."""
    if len(payload) < _HEADER.size + 8:
        raise MalformedInput("truncated sketch file")
    body, (crc,) = payload[:-8], struct.unpack("<Q", payload[-8:])
    if crc64(body) != crc:
        raise MalformedInput("sketch file checksum mismatch")
    magic, version, kind, d, m, lam, seed, rng_id, count = _HEADER.unpack_from(body, 0)
    if magic != MAGIC:
        raise MalformedInput("not a sketch file (bad magic)")
    if version != VERSION:
        raise MalformedInput(f"unsupported sketch file version {version}")
    try:
        kind = FeatureKind(kind)
        rng_id = RngId(rng_id)
    except ValueError as exc:
        raise MalformedInput(str(exc)) from exc
    off = _HEADER.size
    cov = None
    if kind is FeatureKind.PLAIN_FOURIER:
        cov = np.frombuffer(body, dtype="<f8", count=d * d, offset=off).reshape(d, d).astype(np.float64)
        off += 8 * d * d
    n_vals = m if kind is FeatureKind.QUADRATIC_MOMENT else 2 * m
    if len(body) != off + 8 * n_vals:
        raise MalformedInput("sketch file length does not match its header")
    raw = np.frombuffer(body, dtype="<f8", count=n_vals, offset=off).astype(np.float64)
    values = raw if kind is FeatureKind.QUADRATIC_MOMENT else raw[0::2] + 1j * raw[1::2]
    scheme = FeatureScheme(kind, d, m, lam=lam, covariance=cov, seed=seed, rng_id=rng_id)
    return scheme, Sketch(scheme.fingerprint(), values, count)


def write_sketch(path, scheme: FeatureScheme, sketch: Sketch) -> None:
    atomic_write_bytes(path, encode_sketch(scheme, sketch))


def read_sketch(path):
    with open(path, "rb") as fh:
        return decode_sketch(fh.read())


# ------------------------------------------------------------------ datasets

_BIN_HEADER = struct.Struct("<IQ")


def write_binary_dataset(path, X) -> None:
    X = np.ascontiguousarray(np.atleast_2d(X), dtype="<f8")
    atomic_write_bytes(path, _BIN_HEADER.pack(X.shape[1], X.shape[0]) + X.tobytes())


def write_csv_dataset(path, X) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    lines = "".join(",".join(repr(float(v)) for v in row) + "\n" for row in X)
    atomic_write_bytes(path, lines.encode())


def _binary_dataset(path, dim=None, block_rows=65536):
    with open(path, "rb") as fh:
        head = fh.read(_BIN_HEADER.size)
    if len(head) != _BIN_HEADER.size:
        raise MalformedInput("truncated binary dataset header")
    d, n = _BIN_HEADER.unpack(head)
    if d < 1:
        raise MalformedInput("binary dataset has zero dimension")
    if dim is not None and dim != d:
        raise DimensionMismatch(f"--dim {dim} conflicts with file dimension {d}")
    if os.path.getsize(path) != _BIN_HEADER.size + 8 * d * n:
        raise MalformedInput("binary dataset size does not match its header")

    def source():
        if n == 0:
            return
        mm = np.memmap(path, dtype="<f8", mode="r", offset=_BIN_HEADER.size, shape=(n, d))
        for s in range(0, n, block_rows):
            yield np.array(mm[s:s + block_rows], dtype=np.float64)

    return Dataset(d, source, count=n)


def _csv_dataset(path, dim=None, block_rows=65536):
    def first_row():
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if row and any(c.strip() for c in row):
                    return row
        return None

    first = first_row()
    if first is None:
        raise MalformedInput(f"{path}: no data rows")
    inferred = len(first)
    if dim is not None and dim != inferred:
        raise DimensionMismatch(f"--dim {dim} conflicts with the first row's {inferred} columns")
    d = inferred

    def source():
        block = []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or not any(c.strip() for c in row):
                    continue
                if len(row) != d:
                    raise MalformedInput(f"{path}:{lineno}: expected {d} fields, got {len(row)}")
                try:
                    block.append([float(c) for c in row])
                except ValueError as exc:
                    raise MalformedInput(f"{path}:{lineno}: {exc}") from exc
                if len(block) >= block_rows:
                    yield np.array(block)
                    block = []
        if block:
            yield np.array(block)

    return Dataset(d, source)


def load_dataset(path, dim=None, fmt=None) -> Dataset:
    """Open a headerless CSV or raw binary (u32 d, u64 n, f64 rows) dataset."""
    path = os.fspath(path)
    if fmt is None:
        fmt = "binary" if os.path.splitext(path)[1].lower() in (".bin", ".f64", ".raw") else "csv"
    if fmt == "binary":
        return _binary_dataset(path, dim)
    if fmt == "csv":
        return _csv_dataset(path, dim)
    raise InvalidParameter(f"unknown dataset format {fmt!r}")


# ------------------------------------------------------------------ models

def model_to_dict(task, model, residual, options=None, scheme=None, wall_clock=None):
    """JSON-ready description of a learned model."""
    from .core import DiracMixture, GaussianMixture

    out = {"schema_version": MODEL_SCHEMA_VERSION, "task": task}
    if isinstance(model, DiracMixture):
        params = {"centroids": model.centroids.tolist(), "weights": model.weights.tolist()}
    elif isinstance(model, GaussianMixture):
        params = {"means": model.means.tolist(), "weights": model.weights.tolist(),
                  "covariance": model.covariance.tolist()}
    else:
        sigma, sub = model
        params = {"second_moment": np.asarray(sigma).tolist(), "basis": sub.basis.tolist()}
    out["parameters"] = params
    out["residual"] = float(residual)
    out["decoder_options"] = options or {}
    if scheme is not None:
        out["scheme_fingerprint"] = scheme.fingerprint().hex()
    out["wall_clock"] = wall_clock
    return out


def model_from_dict(doc):
    """Inverse of :func:`model_to_dict`; returns ``(task, model)``."""
    from .core import DiracMixture, GaussianMixture, Subspace

    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise MalformedInput(f"unsupported model schema {doc.get('schema_version')!r}")
    task, p = doc["task"], doc["parameters"]
    if task in ("kmeans", "kmedians"):
        return task, DiracMixture(np.array(p["centroids"]), np.array(p["weights"]))
    if task == "gmm":
        return task, GaussianMixture(np.array(p["means"]), np.array(p["weights"]), np.array(p["covariance"]))
    if task == "pca":
        return task, (np.array(p["second_moment"]), Subspace(np.array(p["basis"])))
    raise MalformedInput(f"unknown task {task!r}")


def dump_json(path, doc) -> None:
    atomic_write_bytes(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"{path}: {exc}") from exc
