"""Grayscale image container, PGM (P2/P5) I/O, PSNR, and CSV emitters."""

from __future__ import annotations

import csv
import math
import os
import sys
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import PgmError, UsageError

PEAK = 255.0


@dataclass(frozen=True)
class Image:
    """Row-major grayscale raster of real intensities, shape ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise UsageError(f"image must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise UsageError("image intensities must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_flat(cls, width: int, height: int, data: Sequence[float]) -> "Image":
        data = np.asarray(data, dtype=np.float64)
        if data.size != width * height:
            raise UsageError(f"{data.size} samples for a {width}x{height} image")
        return cls(data.reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def data(self) -> np.ndarray:
        return self.pixels.reshape(-1)

    def crop(self, row: int, col: int, height: int, width: int) -> "Image":
        return Image(self.pixels[row:row + height, col:col + width])


def psnr(reference: Image, test: Image) -> float:
    """Peak signal-to-noise ratio in dB with peak 255; ``inf`` for identical images."""
    if reference.pixels.shape != test.pixels.shape:
        raise UsageError(f"shape mismatch: {reference.pixels.shape} vs {test.pixels.shape}")
    mse = float(np.mean((reference.pixels - test.pixels) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


def quantize(img: Image) -> np.ndarray:
    """Round half away from zero, then clamp to [0, 255]."""
    x = img.pixels
    rounded = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


# ---------------------------------------------------------------- PGM


_WHITESPACE = b" \t\n\r\v\f"


class _Tokens:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def skip(self):
        data = self.data
        while self.pos < len(data):
            c = data[self.pos:self.pos + 1]
            if c in _WHITESPACE:
                self.pos += 1
            elif c == b"#":
                end = data.find(b"\n", self.pos)
                self.pos = len(data) if end < 0 else end + 1
            else:
                break

    def next(self, what: str) -> bytes:
        self.skip()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos:self.pos + 1] not in _WHITESPACE \
                and self.data[self.pos:self.pos + 1] != b"#":
            self.pos += 1
        if start == self.pos:
            raise PgmError(f"unexpected end of data while reading {what}", start)
        return self.data[start:self.pos]

    def next_int(self, what: str) -> int:
        start = self.pos
        tok = self.next(what)
        if not tok.isdigit():
            raise PgmError(f"invalid {what} {tok!r}", start)
        return int(tok)


def parse_pgm(data: bytes) -> Image:
    if len(data) < 2 or data[0:1] != b"P" or data[1:2] not in (b"2", b"5"):
        raise PgmError("bad magic number, expected P2 or P5", 0)
    binary = data[1:2] == b"5"
    toks = _Tokens(data)
    toks.pos = 2
    if toks.pos < len(data) and data[toks.pos:toks.pos + 1] not in _WHITESPACE + b"#":
        raise PgmError("bad magic number, expected P2 or P5", 0)
    width = toks.next_int("width")
    height = toks.next_int("height")
    maxval = toks.next_int("maxval")
    if width < 1 or height < 1:
        raise PgmError(f"invalid dimensions {width}x{height}", toks.pos)
    if not 1 <= maxval <= 65535:
        raise PgmError(f"maxval {maxval} outside [1, 65535]", toks.pos)
    count = width * height

    if binary:
        if toks.pos >= len(data) or data[toks.pos:toks.pos + 1] not in _WHITESPACE:
            raise PgmError("missing whitespace after maxval", toks.pos)
        start = toks.pos + 1
        size = 1 if maxval < 256 else 2
        need = start + count * size
        if len(data) < need:
            raise PgmError(f"truncated raster: need {count * size} bytes, have {len(data) - start}",
                           len(data))
        dtype = np.uint8 if size == 1 else np.dtype(">u2")
        samples = np.frombuffer(data, dtype=dtype, count=count, offset=start).astype(np.int64)
        bad = np.flatnonzero(samples > maxval)
        if bad.size:
            raise PgmError(f"sample {samples[bad[0]]} exceeds maxval {maxval}",
                           start + int(bad[0]) * size)
    else:
        samples = np.empty(count, dtype=np.int64)
        for i in range(count):
            toks.skip()
            offset = toks.pos
            value = toks.next_int("sample")
            if value > maxval:
                raise PgmError(f"sample {value} exceeds maxval {maxval}", offset)
            samples[i] = value
    return Image(samples.reshape(height, width).astype(np.float64))


def read_pgm(path) -> Image:
    with open(path, "rb") as f:
        return parse_pgm(f.read())


def encode_pgm(img: Image, mode: str = "P5") -> bytes:
    if mode not in ("P2", "P5"):
        raise UsageError(f"unknown PGM mode {mode!r}")
    samples = quantize(img)
    header = f"{mode}\n{img.width} {img.height}\n255\n".encode("ascii")
    if mode == "P5":
        return header + samples.tobytes()
    rows = (" ".join(str(v) for v in row) for row in samples)
    return header + ("\n".join(rows) + "\n").encode("ascii")


def write_pgm(img: Image, path, mode: str = "P5") -> None:
    payload = encode_pgm(img, mode)
    with open(path, "wb") as f:
        f.write(payload)


# ---------------------------------------------------------------- CSV

TRACE_HEADER = ("iter", "objective", "primal_residual")
PSNR_HEADER = ("iter", "psnr")


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a CSV table; floats use ``repr`` so they round-trip exactly.

    ``path`` may also be an open text stream, or ``"-"`` for stdout.
    """
    if hasattr(path, "write"):
        _emit(path, header, rows)
        return
    if path == "-" or path is None:
        _emit(sys.stdout, header, rows)
        return
    with open(path, "w", newline="") as f:
        _emit(f, header, rows)


def _emit(stream, header, rows):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])


def write_trace_csv(trace, path) -> None:
    """Emit a solver trace (``iter,objective,primal_residual``).

    ``trace`` is a sequence of :class:`~nlem.median.TraceRecord`. A sequence
    of ``(iteration, psnr)`` pairs is written with the ``iter,psnr`` header
    instead.
    """
    trace = list(trace)
    if trace and not hasattr(trace[0], "objective"):
        write_rows(path, PSNR_HEADER, trace)
        return
    write_rows(path, TRACE_HEADER,
               ((r.iteration, r.objective, r.primal_residual) for r in trace))


def read_csv(path) -> tuple:
    """Parse a table written by :func:`write_rows`; returns ``(header, rows)``
    with numeric fields converted to float (``iter`` to int)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = []
        for raw in reader:
            row = []
            for name, field in zip(header, raw):
                if name == "iter":
                    row.append(int(field))
                else:
                    try:
                        row.append(float(field))
                    except ValueError:
                        row.append(field)
            rows.append(tuple(row))
    return tuple(header), rows


def ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)


# ---------------------------------------------------------------- point sets


def parse_points(text: str):
    """Parse the point-set text format.

    The first line holds ``n d``; each of the next ``n`` lines holds ``d``
    coordinates followed by a weight. Returns a :class:`~nlem.median.PointSet`.
    """
    from .median import PointSet

    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise UsageError("empty point file")
    head = lines[0].split()
    if len(head) != 2:
        raise UsageError(f"line 1: expected 'n d', got {lines[0]!r}")
    try:
        n, d = int(head[0]), int(head[1])
    except ValueError:
        raise UsageError(f"line 1: expected integers, got {lines[0]!r}") from None
    if n < 1 or d < 1:
        raise UsageError(f"line 1: n and d must be positive, got n={n}, d={d}")
    if len(lines) - 1 != n:
        raise UsageError(f"expected {n} point lines, found {len(lines) - 1}")
    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        fields = ln.split()
        if len(fields) != d + 1:
            raise UsageError(f"line {lineno}: expected {d + 1} fields, got {len(fields)}")
        try:
            rows.append([float(v) for v in fields])
        except ValueError:
            raise UsageError(f"line {lineno}: non-numeric field in {ln!r}") from None
    arr = np.array(rows)
    return PointSet(arr[:, :d], arr[:, d])


def read_points(path):
    with open(path) as f:
        return parse_points(f.read())


def format_points(ps) -> str:
    lines = [f"{ps.n} {ps.d}"]
    for a, w in zip(ps.points, ps.weights):
        lines.append(" ".join(repr(float(v)) for v in (*a, w)))
    return "\n".join(lines) + "\n"
