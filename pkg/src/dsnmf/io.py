"""File formats: dense matrices, PGM image stacks, IGO features, model archives."""
import csv
import io
import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .deep import DeepModel, Nonlinearity
from .errors import CorruptArchiveError, InvalidInputError, ParseError, UnsupportedVersionError
from .graphreg import AttributeLabels

F64BIN_MAGIC = b"DMF1"
_HEADER = struct.Struct("<4sQQ")
FORMAT_VERSION = 1
MANIFEST = "manifest.json"


# --------------------------------------------------------------------------
# atomic writes


def atomic_write_bytes(path, data):
    """Write ``data`` to ``path`` through a temp file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


# --------------------------------------------------------------------------
# matrices


def _format_of(path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "f64bin"):
            raise InvalidInputError(f"unknown matrix format {fmt!r}")
        return fmt
    return "csv" if str(path).lower().endswith(".csv") else "f64bin"


def matrix_to_bytes(A):
    A = np.ascontiguousarray(A, dtype="<f8")
    if A.ndim != 2:
        raise InvalidInputError("only 2-D matrices can be stored")
    return _HEADER.pack(F64BIN_MAGIC, A.shape[0], A.shape[1]) + A.tobytes(order="C")


def matrix_from_bytes(data, source="<bytes>"):
    if len(data) < _HEADER.size:
        raise ParseError(f"{source}: header needs {_HEADER.size} bytes, file has {len(data)}")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != F64BIN_MAGIC:
        raise ParseError(f"{source}: bad magic {magic!r} at offset 0, expected {F64BIN_MAGIC!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise ParseError(f"{source}: expected {expected} bytes for a {rows}x{cols} matrix, got {len(data)}")
    A = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols)
    return A.astype(np.float64)


def _matrix_to_csv(A):
    # repr round-trips doubles exactly
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in A)


def _matrix_from_csv(text, source):
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = [float(cell) for cell in line.split(",")]
        except ValueError as exc:
            raise ParseError(f"{source}: line {lineno}: {exc}") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"{source}: line {lineno}: expected {width} fields, got {len(row)}")
        rows.append(row)
    if not rows:
        raise ParseError(f"{source}: no data rows")
    return np.array(rows, dtype=np.float64)


def save_matrix(A, path, fmt=None):
    A = np.asarray(A, dtype=np.float64)
    if _format_of(path, fmt) == "csv":
        atomic_write_text(path, _matrix_to_csv(A))
    else:
        atomic_write_bytes(path, matrix_to_bytes(A))


def load_matrix(path, fmt=None):
    """Read a dense matrix stored as header-less CSV or ``f64bin``.

    Raises ParseError for malformed files and InvalidInputError for
    non-finite entries.
    """
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"no such file: {path}")
    if _format_of(path, fmt) == "csv":
        A = _matrix_from_csv(path.read_text(), path)
    else:
        A = matrix_from_bytes(path.read_bytes(), path)
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{path}: matrix contains non-finite values")
    return A


# --------------------------------------------------------------------------
# labels


def load_labels(path):
    """Read a sidecar CSV ``name,attr1,attr2,...`` (with header).

    Empty cells mean unlabeled. Returns ``(names, {attribute: AttributeLabels})``;
    non-integer label values are mapped to consecutive ids in sorted order.
    """
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty label file")
    header, body = rows[0], rows[1:]
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
    names = [row[0] for row in body]
    out = {}
    for j, attr in enumerate(header[1:], start=1):
        raw = [row[j].strip() for row in body]
        values = sorted({v for v in raw if v})
        try:
            lookup = {v: int(v) for v in values}
            if any(x < 0 for x in lookup.values()):
                raise ValueError
        except ValueError:
            lookup = {v: i for i, v in enumerate(values)}
        out[attr] = AttributeLabels([lookup[v] if v else -1 for v in raw], attr)
    return names, out


def save_labels(path, attributes, names=None):
    attributes = list(attributes)
    n = len(attributes[0].labels) if attributes else 0
    names = names if names is not None else [str(i) for i in range(n)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name"] + [a.name for a in attributes])
    for i in range(n):
        w.writerow([names[i]] + ["" if a.labels[i] < 0 else int(a.labels[i]) for a in attributes])
    atomic_write_text(path, buf.getvalue())


# --------------------------------------------------------------------------
# metric rows

METRIC_FIELDS = ("method", "layer", "attribute", "metric", "value", "seed")


def format_metric_rows(rows):
    """Render dict rows as the ``method,layer,attribute,metric,value,seed`` CSV."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_FIELDS)
    for r in rows:
        value = r["value"]
        w.writerow([r["method"], r["layer"], r["attribute"], r["metric"],
                    repr(float(value)), r["seed"]])
    return buf.getvalue()


def write_metrics(path, rows):
    atomic_write_text(path, format_metric_rows(rows))


def read_metrics(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["value"] = float(r["value"])
    return rows


# --------------------------------------------------------------------------
# images


def read_pgm(path):
    """Binary PGM (P5) reader; returns floats scaled to [0, 1]."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated PGM header at offset {pos}")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError(f"{path}: malformed PGM header") from None
    if not 0 < maxval < 65536:
        raise ParseError(f"{path}: invalid maxval {maxval}")
    pos += 1  # single whitespace after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    if len(data) - pos < need:
        raise ParseError(f"{path}: expected {need} pixel bytes at offset {pos}, got {len(data) - pos}")
    img = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos).reshape(height, width)
    return img.astype(np.float64) / maxval


def write_pgm(path, img):
    img = np.asarray(img, dtype=np.float64)
    if np.any(img < 0) or np.any(img > 1):
        raise InvalidInputError("pixel values must lie in [0, 1]")
    h, w = img.shape
    pixels = np.rint(img * 255).astype(np.uint8)
    atomic_write_bytes(path, f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes())


def load_image_dir(directory):
    """All ``*.pgm`` files of ``directory`` in lexicographic order.

    Returns ``(names, images)`` with ``images`` of shape ``(n, h, w)``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidInputError(f"not a directory: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".pgm")
    if not files:
        raise InvalidInputError(f"no .pgm files in {directory}")
    imgs = [read_pgm(p) for p in files]
    shape = imgs[0].shape
    for p, im in zip(files, imgs):
        if im.shape != shape:
            raise InvalidInputError(f"{p.name}: size {im.shape} differs from {shape}")
    return [p.name for p in files], np.stack(imgs)


def extract_igo(images):
    """Image gradient orientation features.

    Gradients are central differences inside the image and one-sided at the
    borders. With ``phi = atan2(G_y, G_x)`` each image becomes the column
    ``[cos(phi).ravel(); sin(phi).ravel()]`` (row-major pixels), so the
    output has ``2 * h * w`` rows and one column per image. Flat regions get
    ``phi = 0``.

    Parameters
    ----------
    images : array_like, shape (n, h, w) or (h, w)
        Grayscale values in [0, 1].
    """
    stack = np.asarray(images, dtype=np.float64)
    if stack.ndim == 2:
        stack = stack[None]
    if stack.ndim != 3:
        raise InvalidInputError(f"expected an (n, h, w) stack, got shape {stack.shape}")
    n, h, w = stack.shape
    if h < 2 or w < 2:
        raise InvalidInputError(f"images must be at least 2x2, got {h}x{w}")
    if not np.all(np.isfinite(stack)) or np.any(stack < 0) or np.any(stack > 1):
        raise InvalidInputError("pixel values must be finite and lie in [0, 1]")
    gy, gx = np.gradient(stack, axis=(1, 2))
    phi = np.arctan2(gy, gx)
    feats = np.concatenate([np.cos(phi).reshape(n, -1), np.sin(phi).reshape(n, -1)], axis=1)
    return np.ascontiguousarray(feats.T)


# --------------------------------------------------------------------------
# model archives


def _factor_name(kind, i):
    return f"{kind}{i + 1}.f64bin"


def save_model(model, directory, config=None, objective_trace=None):
    """Write ``model`` as a manifest plus one ``f64bin`` file per factor."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "m": model.m,
        "n_features": model.n_features,
        "n_samples": model.n_samples,
        "layer_sizes": list(model.layer_sizes),
        "nonlinearity": model.g.to_dict(),
        "config": dict(config or {}),
        "objective_trace": [float(v) for v in (objective_trace or [])],
        "factors": {
            "Z": [_factor_name("Z", i) for i in range(model.m)],
            "H": [_factor_name("H", i) for i in range(model.m)],
        },
    }
    for i in range(model.m):
        atomic_write_bytes(directory / _factor_name("Z", i), matrix_to_bytes(model.Z[i]))
        atomic_write_bytes(directory / _factor_name("H", i), matrix_to_bytes(model.H[i]))
    atomic_write_text(directory / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(directory):
    path = Path(directory) / MANIFEST
    if not path.is_file():
        raise CorruptArchiveError(f"missing manifest file {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptArchiveError(f"{path}: invalid JSON ({exc})") from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: format_version {version!r} is not supported (expected {FORMAT_VERSION})")
    return manifest


def _load_factor(directory, name):
    path = Path(directory) / name
    if not path.is_file():
        raise CorruptArchiveError(f"missing factor file {path}")
    try:
        return matrix_from_bytes(path.read_bytes(), path)
    except ParseError as exc:
        raise CorruptArchiveError(str(exc)) from None


def load_model(directory):
    """Load and validate an archive written by :func:`save_model`.

    Returns ``(model, manifest)``.
    """
    directory = Path(directory)
    manifest = read_manifest(directory)
    try:
        m = int(manifest["m"])
        sizes = [int(k) for k in manifest["layer_sizes"]]
        names_z = manifest["factors"]["Z"]
        names_h = manifest["factors"]["H"]
        g = Nonlinearity.from_dict(manifest["nonlinearity"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptArchiveError(f"{directory}: malformed manifest ({exc!r})") from None
    if not (len(sizes) == len(names_z) == len(names_h) == m):
        raise CorruptArchiveError(f"{directory}: manifest lists inconsistent layer counts")
    Zs = [_load_factor(directory, nm) for nm in names_z]
    Hs = [_load_factor(directory, nm) for nm in names_h]
    p = manifest.get("n_features", Zs[0].shape[0])
    n = manifest.get("n_samples", Hs[0].shape[1])
    rows = [p] + sizes[:-1]
    for i in range(m):
        if Zs[i].shape != (rows[i], sizes[i]):
            raise CorruptArchiveError(f"{names_z[i]}: shape {Zs[i].shape}, manifest implies {(rows[i], sizes[i])}")
        if Hs[i].shape != (sizes[i], n):
            raise CorruptArchiveError(f"{names_h[i]}: shape {Hs[i].shape}, manifest implies {(sizes[i], n)}")
    try:
        model = DeepModel(Zs, Hs, g)
    except (InvalidInputError, ValueError) as exc:
        raise CorruptArchiveError(f"{directory}: {exc}") from None
    return model, manifest


def exponential_grid(lo, hi, count):
    """``count`` integers spread geometrically over ``[lo, hi]`` (deduplicated)."""
    if count < 1 or lo < 1 or hi < lo:
        raise InvalidInputError("need 1 <= lo <= hi and count >= 1")
    if count == 1:
        return [int(lo)]
    vals = [lo * (hi / lo) ** (i / (count - 1)) for i in range(count)]
    out = []
    for v in vals:
        k = int(math.floor(v + 0.5))
        if k not in out:
            out.append(k)
    return out
