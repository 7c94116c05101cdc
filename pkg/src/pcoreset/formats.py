"""Matrix file formats and sequential row streams.

* ``matrix-market``: coordinate format (real/integer/pattern; general or
  symmetric), loaded as CSR.
* ``csv``: one dense row per line, comma separated.
* ``f64-binary``: 8-byte magic ``PCF64MAT``, then n and d as little-endian
  uint64, then n*d little-endian float64 values in row-major order.

Streams read a file front to back once per pass and count their passes, so
callers can assert how many times the data was touched.
"""
from __future__ import annotations

import os
import struct
from typing import Iterator, Optional

import numpy as np
import scipy.sparse as sp

from .matrix_core import Block, DataMatrix, as_data_matrix

FORMATS = ("matrix-market", "csv", "f64-binary")
F64_MAGIC = b"PCF64MAT"
_F64_HEADER = struct.Struct("<8sQQ")


class MatrixFormatError(ValueError):
    """Malformed matrix file; carries the 1-based line or 0-based byte position."""

    def __init__(self, message: str, *, line: Optional[int] = None,
                 offset: Optional[int] = None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)
        self.line = line
        self.offset = offset


def guess_format(path) -> str:
    ext = os.path.splitext(str(path))[1].lower()
    if ext in (".mtx", ".mm"):
        return "matrix-market"
    if ext in (".csv", ".txt"):
        return "csv"
    return "f64-binary"


# -- Matrix Market ----------------------------------------------------------

class _MMHeader:
    def __init__(self, n, d, entries, field, symmetry, first_entry_line):
        self.n, self.d, self.entries = n, d, entries
        self.field, self.symmetry = field, symmetry
        self.first_entry_line = first_entry_line


def _read_mm_header(fh, path) -> _MMHeader:
    banner = fh.readline()
    toks = banner.split()
    if len(toks) != 5 or toks[0].lower() != "%%matrixmarket":
        raise MatrixFormatError("missing %%MatrixMarket banner", line=1, path=path)
    obj, fmt, field, symmetry = (t.lower() for t in toks[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixFormatError(f"only 'matrix coordinate' is supported, got '{obj} {fmt}'",
                                line=1, path=path)
    if field not in ("real", "integer", "pattern"):
        raise MatrixFormatError(f"unsupported field '{field}'", line=1, path=path)
    if symmetry not in ("general", "symmetric"):
        raise MatrixFormatError(f"unsupported symmetry '{symmetry}'", line=1, path=path)
    lineno = 1
    for line in fh:
        lineno += 1
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        try:
            n, d, nnz = (int(p) for p in parts)
        except ValueError:
            raise MatrixFormatError(f"bad size line {s!r}", line=lineno, path=path) from None
        if n < 1 or d < 1 or nnz < 0:
            raise MatrixFormatError(f"bad dimensions {n} x {d} with {nnz} entries",
                                    line=lineno, path=path)
        return _MMHeader(n, d, nnz, field, symmetry, lineno + 1)
    raise MatrixFormatError("missing size line", line=lineno + 1, path=path)


def _iter_mm_entries(fh, hdr: _MMHeader, path) -> Iterator[tuple[int, int, float]]:
    """Yield zero-based (row, col, value) triples, checking every entry."""
    lineno = hdr.first_entry_line - 1
    count = 0
    want = 2 if hdr.field == "pattern" else 3
    for line in fh:
        lineno += 1
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        count += 1
        if count > hdr.entries:
            raise MatrixFormatError(f"more than the declared {hdr.entries} entries",
                                    line=lineno, path=path)
        parts = s.split()
        if len(parts) != want:
            raise MatrixFormatError(f"entry {count}: expected {want} fields, got {len(parts)}",
                                    line=lineno, path=path)
        try:
            i, j = int(parts[0]), int(parts[1])
            v = 1.0 if want == 2 else float(parts[2])
        except ValueError:
            raise MatrixFormatError(f"entry {count}: cannot parse {s!r}",
                                    line=lineno, path=path) from None
        if not (1 <= i <= hdr.n and 1 <= j <= hdr.d):
            raise MatrixFormatError(
                f"entry {count} ({i}, {j}) is outside the {hdr.n} x {hdr.d} matrix",
                line=lineno, path=path)
        if not np.isfinite(v):
            raise MatrixFormatError(f"entry {count}: non-finite value", line=lineno, path=path)
        yield i - 1, j - 1, v
    if count != hdr.entries:
        raise MatrixFormatError(f"expected {hdr.entries} entries, found {count}",
                                line=lineno, path=path)


def _load_mm(path) -> DataMatrix:
    with open(path, "r") as fh:
        hdr = _read_mm_header(fh, path)
        rows, cols, vals = [], [], []
        for i, j, v in _iter_mm_entries(fh, hdr, path):
            rows.append(i)
            cols.append(j)
            vals.append(v)
            if hdr.symmetry == "symmetric" and i != j:
                rows.append(j)
                cols.append(i)
                vals.append(v)
    mat = sp.coo_matrix((np.array(vals, dtype=np.float64),
                         (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
                        shape=(hdr.n, hdr.d)).tocsr()
    return DataMatrix(mat)


def _save_mm(path, A: DataMatrix) -> None:
    coo = sp.coo_matrix(A.raw)
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n} {A.d} {coo.nnz}\n")
        order = np.lexsort((coo.col, coo.row))
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


# -- CSV --------------------------------------------------------------------

def _parse_csv_line(s: str, lineno: int, width: Optional[int], path) -> list[float]:
    parts = s.split(",")
    if width is not None and len(parts) != width:
        raise MatrixFormatError(f"expected {width} values, got {len(parts)}",
                                line=lineno, path=path)
    try:
        row = [float(p) for p in parts]
    except ValueError:
        raise MatrixFormatError(f"cannot parse {s!r}", line=lineno, path=path) from None
    if not all(np.isfinite(row)):
        raise MatrixFormatError("non-finite value", line=lineno, path=path)
    return row


def _iter_csv_rows(fh, path) -> Iterator[list[float]]:
    width = None
    for lineno, line in enumerate(fh, start=1):
        s = line.strip()
        if not s:
            continue
        row = _parse_csv_line(s, lineno, width, path)
        width = len(row)
        yield row


def _csv_width(path) -> int:
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if s:
                return len(_parse_csv_line(s, lineno, None, path))
    raise MatrixFormatError("empty csv file", line=1, path=path)


def _load_csv(path) -> DataMatrix:
    with open(path, "r") as fh:
        rows = list(_iter_csv_rows(fh, path))
    if not rows:
        raise MatrixFormatError("empty csv file", line=1, path=path)
    return DataMatrix(np.array(rows, dtype=np.float64))


def _save_csv(path, A: DataMatrix) -> None:
    with open(path, "w") as fh:
        for row in A.toarray():
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# -- f64 binary -------------------------------------------------------------

def _read_f64_header(fh, path) -> tuple[int, int]:
    raw = fh.read(_F64_HEADER.size)
    if len(raw) < _F64_HEADER.size:
        raise MatrixFormatError("truncated header", offset=len(raw), path=path)
    magic, n, d = _F64_HEADER.unpack(raw)
    if magic != F64_MAGIC:
        raise MatrixFormatError(f"bad magic {magic!r}", offset=0, path=path)
    if n < 1 or d < 1:
        raise MatrixFormatError(f"bad dimensions {n} x {d}", offset=8, path=path)
    return n, d


def _load_f64(path) -> DataMatrix:
    with open(path, "rb") as fh:
        n, d = _read_f64_header(fh, path)
        body = fh.read()
    need = 8 * n * d
    if len(body) != need:
        raise MatrixFormatError(f"payload is {len(body)} bytes, expected {need}",
                                offset=_F64_HEADER.size + min(len(body), need), path=path)
    arr = np.frombuffer(body, dtype="<f8").reshape(n, d)
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
        raise MatrixFormatError("non-finite value", offset=_F64_HEADER.size + 8 * bad, path=path)
    return DataMatrix(arr)


def _save_f64(path, A: DataMatrix) -> None:
    with open(path, "wb") as fh:
        fh.write(_F64_HEADER.pack(F64_MAGIC, A.n, A.d))
        fh.write(np.ascontiguousarray(A.toarray(), dtype="<f8").tobytes())


_LOADERS = {"matrix-market": _load_mm, "csv": _load_csv, "f64-binary": _load_f64}
_SAVERS = {"matrix-market": _save_mm, "csv": _save_csv, "f64-binary": _save_f64}


def _check_format(fmt: str) -> str:
    if fmt not in FORMATS:
        raise ValueError(f"unknown matrix format {fmt!r}; choose from {', '.join(FORMATS)}")
    return fmt


def load_matrix(path, fmt: Optional[str] = None) -> DataMatrix:
    fmt = _check_format(fmt or guess_format(path))
    return _LOADERS[fmt](path)


def save_matrix(path, A, fmt: Optional[str] = None) -> None:
    fmt = _check_format(fmt or guess_format(path))
    _SAVERS[fmt](path, as_data_matrix(A))


# -- streams ----------------------------------------------------------------

class MatrixStream:
    """Row-block reader over a matrix file.

    Each ``iter_blocks`` call is one sequential pass over the file; blocks
    match ``DataMatrix.iter_blocks`` on the loaded matrix exactly (same row
    ranges, same CSR layout for sparse input).
    """

    def __init__(self, path, fmt: Optional[str] = None):
        self.path = path
        self.format = _check_format(fmt or guess_format(path))
        self.passes = 0
        self.n: Optional[int] = None
        if self.format == "matrix-market":
            with open(path, "r") as fh:
                hdr = _read_mm_header(fh, path)
            if hdr.symmetry != "general":
                raise MatrixFormatError("streaming needs a 'general' matrix-market file",
                                        line=1, path=path)
            self.n, self.d = hdr.n, hdr.d
        elif self.format == "f64-binary":
            with open(path, "rb") as fh:
                self.n, self.d = _read_f64_header(fh, path)
            size = os.path.getsize(path)
            need = _F64_HEADER.size + 8 * self.n * self.d
            if size != need:
                raise MatrixFormatError(f"file is {size} bytes, expected {need}",
                                        offset=min(size, need), path=path)
        else:
            self.d = _csv_width(path)

    def iter_blocks(self, block_rows: int) -> Iterator[tuple[int, Block]]:
        self.passes += 1
        if self.format == "f64-binary":
            yield from self._f64_blocks(block_rows)
        elif self.format == "csv":
            yield from self._csv_blocks(block_rows)
        else:
            yield from self._mm_blocks(block_rows)

    def _f64_blocks(self, block_rows):
        with open(self.path, "rb") as fh:
            fh.seek(_F64_HEADER.size)
            for start in range(0, self.n, block_rows):
                rows = min(block_rows, self.n - start)
                raw = fh.read(8 * rows * self.d)
                block = np.frombuffer(raw, dtype="<f8").reshape(rows, self.d).astype(np.float64)
                if not np.all(np.isfinite(block)):
                    raise MatrixFormatError("non-finite value", path=self.path,
                                            offset=_F64_HEADER.size + 8 * start * self.d)
                yield start, block

    def _csv_blocks(self, block_rows):
        start = 0
        buf = []
        with open(self.path, "r") as fh:
            for row in _iter_csv_rows(fh, self.path):
                buf.append(row)
                if len(buf) == block_rows:
                    yield start, np.array(buf, dtype=np.float64)
                    start += len(buf)
                    buf = []
        if buf:
            yield start, np.array(buf, dtype=np.float64)
            start += len(buf)
        self.n = start

    def _mm_blocks(self, block_rows):
        with open(self.path, "r") as fh:
            hdr = _read_mm_header(fh, self.path)
            entries = _iter_mm_entries(fh, hdr, self.path)
            pending = next(entries, None)
            last_row = -1
            for start in range(0, hdr.n, block_rows):
                stop = min(start + block_rows, hdr.n)
                rows, cols, vals = [], [], []
                while pending is not None and pending[0] < stop:
                    i, j, v = pending
                    if i < last_row:
                        raise MatrixFormatError(
                            "streaming needs entries sorted by row", path=self.path)
                    last_row = i
                    rows.append(i - start)
                    cols.append(j)
                    vals.append(v)
                    pending = next(entries, None)
                block = sp.coo_matrix(
                    (np.array(vals, dtype=np.float64),
                     (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
                    shape=(stop - start, hdr.d)).tocsr()
                block.sum_duplicates()
                block.sort_indices()
                yield start, block
            if pending is not None:
                raise MatrixFormatError("streaming needs entries sorted by row", path=self.path)


def open_row_stream(path, fmt: Optional[str] = None) -> MatrixStream:
    return MatrixStream(path, fmt)
