"""File formats: BIPH1 matrices, binary PGM images and full-precision CSV."""
from __future__ import annotations

import os

import numpy as np

BIPH1_MAGIC = "BIPH1"


def write_biph1(path, m, tag: str = "") -> None:
    """Write a matrix as BIPH1: ASCII header, blank line, little-endian payload.

    Complex matrices use dtype=c128 (re, im float64 pairs); real matrices
    (phase masks) use dtype=f64.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError("BIPH1 stores 2-D matrices only")
    if "\n" in tag:
        raise ValueError("tag must be a single line")
    if np.iscomplexobj(m):
        dtype, payload = "c128", np.ascontiguousarray(m, dtype="<c16")
    else:
        dtype, payload = "f64", np.ascontiguousarray(m, dtype="<f8")
    head = f"{BIPH1_MAGIC}\nrows={m.shape[0]}\ncols={m.shape[1]}\ndtype={dtype}\ntag={tag}\n\n"
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii"))
        fh.write(payload.tobytes())


def read_biph1(path):
    """Return (matrix, tag)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    sep = raw.find(b"\n\n")
    if not raw.startswith(BIPH1_MAGIC.encode()) or sep < 0:
        raise ValueError(f"{path}: not a BIPH1 file")
    lines = raw[:sep].decode("ascii").split("\n")
    head = dict(line.split("=", 1) for line in lines[1:])
    rows, cols = int(head["rows"]), int(head["cols"])
    dt = {"c128": "<c16", "f64": "<f8"}.get(head.get("dtype"))
    if dt is None:
        raise ValueError(f"{path}: unsupported dtype {head.get('dtype')!r}")
    body = raw[sep + 2:]
    m = np.frombuffer(body, dtype=dt)
    if m.size != rows * cols:
        raise ValueError(f"{path}: payload has {m.size} entries, header says {rows * cols}")
    return m.reshape(rows, cols).copy(), head.get("tag", "")


# -- PGM ---------------------------------------------------------------------

def _tokens(buf: bytes, count: int):
    """Read `count` whitespace-separated header tokens, skipping comments."""
    out, pos, comments = [], 0, []
    while len(out) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            end = buf.index(b"\n", pos)
            comments.append(buf[pos + 1:end].decode("ascii", "replace").strip())
            pos = end + 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        out.append(buf[start:pos])
    return out, pos + 1, comments


def read_pgm(path, with_comments: bool = False):
    """Read an 8- or 16-bit binary PGM. Returns (image, maxval[, comments])."""
    with open(path, "rb") as fh:
        buf = fh.read()
    toks, pos, comments = _tokens(buf, 4)
    if toks[0] != b"P5":
        raise ValueError(f"{path}: only binary P5 PGM is supported")
    w, h, maxval = int(toks[1]), int(toks[2]), int(toks[3])
    dt = ">u1" if maxval < 256 else ">u2"
    img = np.frombuffer(buf[pos:pos + w * h * np.dtype(dt).itemsize], dtype=dt).reshape(h, w)
    img = img.astype(np.uint16 if maxval > 255 else np.uint8)
    if with_comments:
        return img, maxval, comments
    return img, maxval


def write_pgm(path, img, bits: int = 16, comment: str | None = None) -> None:
    img = np.asarray(img)
    h, w = img.shape
    maxval = 65535 if bits == 16 else 255
    dt = ">u2" if bits == 16 else ">u1"
    head = "P5\n"
    if comment:
        head += f"# {comment}\n"
    head += f"{w} {h}\n{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=dt).tobytes())


def write_pgm16_normalized(path, values) -> float:
    """Max-normalize, clamp negatives to 0 and write 16 bits.

    Returns the normalization factor (value represented by 65535), which is
    also recorded in the header comment.
    """
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("image contains non-finite values")
    v = np.clip(v, 0, None)
    peak = float(v.max())
    scaled = np.zeros_like(v) if peak == 0 else np.round(v / peak * 65535)
    write_pgm(path, scaled.astype(np.uint16), 16, comment=f"scale={peak!r}")
    return peak


# -- CSV ---------------------------------------------------------------------

def write_matrix_csv(path, values) -> None:
    """Row-major CSV with 17 significant digits (exact float64 round-trip)."""
    v = np.atleast_2d(np.asarray(values, dtype=float))
    with open(path, "w") as fh:
        for row in v:
            fh.write(",".join(f"{x:.17g}" for x in row))
            fh.write("\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path) as fh:
        rows = [[float(x) for x in line.split(",")] for line in fh if line.strip()]
    return np.array(rows)


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
