"""Matrix Market, SNAP edge list and plain column-block files."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import NonSquare, ParseError
from .operators import SparseSym

_FIELDS = ("real", "integer", "pattern", "double")
_SYMMETRIES = ("general", "symmetric")


def load_matrix_market(path) -> SparseSym:
    """Read a coordinate Matrix Market file into a :class:`SparseSym`.

    ``symmetric`` files are mirrored; ``general`` files are symmetrized as
    ``(A + A^T) / 2``.  Indices are 1-based on disk.
    """
    path = Path(path)
    rows, cols, vals = [], [], []
    header = None
    size = None
    expected = 0
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if header is None:
                if not line.startswith("%%MatrixMarket"):
                    raise ParseError("missing %%MatrixMarket banner", lineno, path)
                parts = line.split()
                if len(parts) != 5:
                    raise ParseError(f"malformed banner {line!r}", lineno, path)
                obj, fmt, fld, sym = (t.lower() for t in parts[1:])
                if obj != "matrix" or fmt != "coordinate":
                    raise ParseError(f"unsupported object/format {obj}/{fmt}", lineno, path)
                if fld not in _FIELDS or sym not in _SYMMETRIES:
                    raise ParseError(f"unsupported field/symmetry {fld}/{sym}", lineno, path)
                header = (fld, sym)
                continue
            if not line or line.startswith("%"):
                continue
            parts = line.split()
            if size is None:
                try:
                    nr, nc, expected = (int(t) for t in parts)
                except ValueError:
                    raise ParseError(f"bad size line {line!r}", lineno, path) from None
                if nr != nc:
                    raise NonSquare(f"{path}: matrix is {nr} x {nc}")
                size = nr
                continue
            want = 2 if header[0] == "pattern" else 3
            if len(parts) != want:
                raise ParseError(f"expected {want} fields, got {len(parts)}", lineno, path)
            try:
                i, j = int(parts[0]), int(parts[1])
                v = 1.0 if want == 2 else float(parts[2])
            except ValueError:
                raise ParseError(f"bad entry {line!r}", lineno, path) from None
            if not (1 <= i <= size and 1 <= j <= size):
                raise ParseError(f"index ({i}, {j}) outside 1..{size}", lineno, path)
            rows.append(i - 1)
            cols.append(j - 1)
            vals.append(v)
    if header is None:
        raise ParseError("empty file", None, path)
    if size is None:
        raise ParseError("missing size line", None, path)
    if len(vals) != expected:
        raise ParseError(f"expected {expected} entries, found {len(vals)}", None, path)

    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    v = np.asarray(vals, dtype=float)
    M = sp.coo_array((v, (r, c)), shape=(size, size)).tocsr()
    if header[1] == "symmetric":
        off = r != c
        M = M + sp.coo_array((v[off], (c[off], r[off])), shape=(size, size)).tocsr()
    else:
        M = 0.5 * (M + M.T)
    return SparseSym(sp.csr_array(M))


def write_matrix_market(path, A: SparseSym, comment: str | None = None) -> None:
    """Write the lower triangle in ``symmetric`` coordinate format."""
    L = sp.tril(A.csr).tocoo()
    order = np.lexsort((L.row, L.col))
    with Path(path).open("w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{A.n} {A.n} {L.nnz}\n")
        for k in order:
            fh.write(f"{L.row[k] + 1} {L.col[k] + 1} {L.data[k]:.17g}\n")


def load_edge_list(path):
    """Read a whitespace-separated ``u v`` edge list.

    Lines starting with ``#`` or ``%`` are comments.  Indices are taken as
    1-based when the smallest one is at least 1 and shifted to 0-based.
    Returns ``(edges, n)``.
    """
    path = Path(path)
    pairs = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line[0] in "#%":
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ParseError(f"expected 'u v', got {line!r}", lineno, path)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"non-integer vertex in {line!r}", lineno, path) from None
            if u < 0 or v < 0:
                raise ParseError("negative vertex index", lineno, path)
            pairs.append((u, v))
    if not pairs:
        raise ParseError("no edges found", None, path)
    E = np.asarray(pairs, dtype=np.int64)
    if E.min() >= 1:
        E -= 1
    return E, int(E.max()) + 1


def write_block(path, B) -> None:
    np.savetxt(path, np.asarray(B, dtype=float), fmt="%.17g")


def load_block(path) -> np.ndarray:
    try:
        return np.loadtxt(path, ndmin=2)
    except ValueError as exc:
        raise ParseError(str(exc), None, path) from exc
