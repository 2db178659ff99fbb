"""Symmetric operators, test-problem generators and random block enrichment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, EmptyGraph, InvalidSpec, NonSquare, NonSymmetric, RankDeficient
from .smallmat import qr_thin

SYM_RTOL = 1e-12


class SparseSym:
    """Symmetric matrix in CSR layout with both triangles stored."""

    def __init__(self, matrix, check: bool = True):
        M = sp.csr_array(matrix, dtype=float)
        if M.shape[0] != M.shape[1]:
            raise NonSquare(f"matrix is {M.shape[0]} x {M.shape[1]}")
        M.sum_duplicates()
        M.sort_indices()
        self._csr = M
        if check:
            self._check_symmetry()

    def _check_symmetry(self):
        M = self._csr
        diff = (M - M.T).tocsr()
        diff.eliminate_zeros()
        if diff.nnz == 0:
            return
        scale = np.max(np.abs(M.data)) if M.nnz else 0.0
        if np.max(np.abs(diff.data)) > SYM_RTOL * scale:
            raise NonSymmetric("stored matrix is not symmetric")

    @classmethod
    def from_dense(cls, M) -> "SparseSym":
        return cls(sp.csr_array(np.asarray(M, dtype=float)))

    @property
    def n(self) -> int:
        return self._csr.shape[0]

    @property
    def shape(self):
        return self._csr.shape

    @property
    def indptr(self) -> np.ndarray:
        return self._csr.indptr

    @property
    def indices(self) -> np.ndarray:
        return self._csr.indices

    @property
    def data(self) -> np.ndarray:
        return self._csr.data

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def csr(self) -> sp.csr_array:
        return self._csr

    def apply(self, X) -> np.ndarray:
        return apply(self, X)

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    @cached_property
    def norm_estimate(self) -> float:
        return power_norm_estimate(self)

    def __repr__(self):
        return f"SparseSym(n={self.n}, nnz={self.nnz})"


Operator = Union[SparseSym, np.ndarray, sp.sparray, sp.spmatrix, Callable[[np.ndarray], np.ndarray]]


def operator_size(A: Operator) -> int | None:
    if isinstance(A, SparseSym):
        return A.n
    shape = getattr(A, "shape", None)
    return None if shape is None else int(shape[0])


def apply(A: Operator, X) -> np.ndarray:
    """Product of the operator with an n x p block (or a vector)."""
    X = np.asarray(X)
    n = operator_size(A)
    if n is not None and X.shape[0] != n:
        raise DimensionMismatch(f"operator has size {n}, block has {X.shape[0]} rows")
    if isinstance(A, SparseSym):
        return A.csr @ X
    if callable(A) and not hasattr(A, "shape"):
        return np.asarray(A(X))
    return np.asarray(A @ X)


def power_norm_estimate(A: Operator, iters: int = 50, seed: int = 0) -> float:
    """Estimate of ``||A||_2`` by power iteration (a lower bound, tight in practice)."""
    n = operator_size(A)
    if n is None:
        raise ValueError("cannot estimate the norm of an operator of unknown size")
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = apply(A, x)
        nrm = float(np.linalg.norm(y))
        if nrm == 0.0:
            return 0.0
        est = nrm
        x = y / nrm
    return est


# -- problem generators ------------------------------------------------------


def geometric_ratio(n_opt: int) -> float:
    return math.exp(math.pi / math.sqrt(n_opt)) if n_opt > 0 else 1.0


def optimal_grid_steps(n_interior: int, n_opt: int, ratio: float | None = None) -> np.ndarray:
    """Primary steps from the left Dirichlet node to the right one.

    ``n_interior`` unit-spaced nodes are flanked by ``n_opt`` exterior nodes
    per side.  Going outward the steps are 1, r, ..., r**n_opt, the last one
    ending on the boundary.
    """
    if ratio is None:
        ratio = geometric_ratio(n_opt)
    outward = ratio ** np.arange(n_opt + 1)
    return np.concatenate([outward[::-1], np.ones(n_interior - 1), outward])


def _laplacian_1d(steps: np.ndarray) -> sp.csr_array:
    """Symmetrized 1-D variable-step Laplacian, Dirichlet at both ends."""
    h = np.asarray(steps, dtype=float)
    dual = 0.5 * (h[:-1] + h[1:])
    inv_h = 1.0 / h
    diag = (inv_h[:-1] + inv_h[1:]) / dual
    off = -inv_h[1:-1] / np.sqrt(dual[:-1] * dual[1:])
    return sp.csr_array(sp.diags([off, diag, off], [-1, 0, 1]))


@dataclass
class Diffusion2D:
    """Full grid description returned alongside the operator."""

    x_steps: np.ndarray
    y_steps: np.ndarray
    nx_total: int
    ny_total: int
    offset: int
    sigma: np.ndarray

    def node_index(self, i: int, j: int) -> int:
        """Global unknown index of interior node ``(i, j)``."""
        return (j + self.offset) * self.nx_total + (i + self.offset)


def contrast_field(nx: int, ny: int, rect=None, value: float = 1.0, background: float = 1.0) -> np.ndarray:
    """Homogeneous field with an optional rectangle ``(i0, i1, j0, j1)`` of ``value``."""
    sigma = np.full((nx, ny), float(background))
    if rect is not None:
        i0, i1, j0, j1 = (int(v) for v in rect)
        sigma[i0:i1, j0:j1] = value
    return sigma


def gen_diffusion2d(
    nx: int,
    ny: int,
    n_opt: int = 0,
    sigma=None,
    transducers: Sequence[Sequence[int]] = (),
    ratio: float | None = None,
    return_grid: bool = False,
):
    """Discretize the diffusion operator on an optimal grid.

    The result is ``A = -S^{-1/2} L S^{-1/2}`` with ``L`` the 5-point
    variable-step Laplacian (symmetrized with the dual cell sizes) and
    ``S = diag(sigma)``, so ``A`` is positive definite.  ``sigma`` is an
    ``(nx, ny)`` interior field, continued by its boundary values into the
    exterior layers.  ``transducers`` are interior ``(i, j)`` node indices;
    ``B`` holds the corresponding unit delta columns.
    """
    if nx < 1 or ny < 1:
        raise InvalidSpec("interior grid must be at least 1 x 1")
    if n_opt < 0:
        raise InvalidSpec("n_opt must be nonnegative")
    if sigma is None:
        sigma = np.ones((nx, ny))
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (nx, ny):
        raise InvalidSpec(f"sigma has shape {sigma.shape}, expected {(nx, ny)}")
    if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
        raise InvalidSpec("conductivity must be positive")

    hx = optimal_grid_steps(nx, n_opt, ratio)
    hy = optimal_grid_steps(ny, n_opt, ratio)
    Nx, Ny = nx + 2 * n_opt, ny + 2 * n_opt
    Ax = _laplacian_1d(hx)
    Ay = _laplacian_1d(hy)
    A0 = sp.kron(sp.identity(Ny), Ax) + sp.kron(Ay, sp.identity(Nx))

    ix = np.clip(np.arange(Nx) - n_opt, 0, nx - 1)
    iy = np.clip(np.arange(Ny) - n_opt, 0, ny - 1)
    full_sigma = sigma[np.ix_(ix, iy)]
    # x fastest: node (i, j) -> j * Nx + i
    s_inv_half = 1.0 / np.sqrt(full_sigma.T.ravel())
    if np.all(s_inv_half == 1.0):
        A = sp.csr_array(A0)
    else:
        D = sp.diags(s_inv_half)
        A = sp.csr_array(D @ A0 @ D)
    A = SparseSym(A, check=False)

    grid = Diffusion2D(hx, hy, Nx, Ny, n_opt, full_sigma)
    nodes = []
    for t in transducers:
        i, j = (int(v) for v in t)
        if not (0 <= i < nx and 0 <= j < ny):
            raise InvalidSpec(f"transducer {(i, j)} outside the {nx} x {ny} interior")
        nodes.append(grid.node_index(i, j))
    if len(set(nodes)) != len(nodes):
        raise InvalidSpec("duplicate transducer positions")
    B = delta_block(A.n, nodes)
    return (A, B, grid) if return_grid else (A, B)


def fractional_nodes(nx: int, ny: int, fractions: Sequence[Sequence[float]]) -> list[tuple[int, int]]:
    """Map fractional interior positions in [0, 1]^2 to node indices."""
    out = []
    for fx, fy in fractions:
        if not (0.0 <= fx <= 1.0 and 0.0 <= fy <= 1.0):
            raise InvalidSpec(f"fractional position {(fx, fy)} outside [0, 1]^2")
        out.append((min(int(round(fx * (nx - 1))), nx - 1), min(int(round(fy * (ny - 1))), ny - 1)))
    return out


def delta_block(n: int, nodes: Sequence[int]) -> np.ndarray:
    B = np.zeros((n, len(nodes)))
    for k, node in enumerate(nodes):
        if not 0 <= node < n:
            raise InvalidSpec(f"node {node} out of range [0, {n})")
        B[node, k] = 1.0
    return B


def normalize_edges(edges, n: int | None = None):
    """Drop self-loops, merge duplicates and orient pairs as (min, max)."""
    E = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if E.size and E.min() < 0:
        raise InvalidSpec("negative vertex index")
    E = E[E[:, 0] != E[:, 1]]
    if E.shape[0] == 0:
        raise EmptyGraph("graph has no edges")
    E = np.unique(np.sort(E, axis=1), axis=0)
    n_min = int(E.max()) + 1
    if n is None:
        n = n_min
    elif n < n_min:
        raise InvalidSpec(f"vertex index {n_min - 1} exceeds n={n}")
    return E, n


def gen_graph_laplacian(edges, delta_nodes: Sequence[int], n: int | None = None):
    """Normalized Laplacian ``I - D^{-1/2} W D^{-1/2}`` of an undirected graph.

    Vertices without edges get a zero row.  Returns ``(A, B)`` with ``B``
    the delta columns at ``delta_nodes``.
    """
    E, n = normalize_edges(edges, n)
    rows = np.concatenate([E[:, 0], E[:, 1]])
    cols = np.concatenate([E[:, 1], E[:, 0]])
    W = sp.csr_array((np.ones(rows.size), (rows, cols)), shape=(n, n))
    deg = np.asarray(W.sum(axis=1)).ravel()
    d_inv_half = np.zeros(n)
    pos = deg > 0
    d_inv_half[pos] = 1.0 / np.sqrt(deg[pos])
    D = sp.diags(d_inv_half)
    A = sp.diags(pos.astype(float)) - D @ W @ D
    A = SparseSym(sp.csr_array(A), check=False)
    return A, delta_block(n, list(delta_nodes))


def random_nodes(n: int, count: int, seed: int) -> list[int]:
    rng = np.random.Generator(np.random.PCG64(seed))
    return [int(v) for v in rng.choice(n, size=count, replace=False)]


def gen_diagonal(diag, b) -> tuple[SparseSym, np.ndarray]:
    """Diagonal test operator with an explicit starting block (orthonormalized)."""
    d = np.asarray(diag, dtype=float).ravel()
    Bm = np.asarray(b, dtype=float)
    if Bm.ndim == 1:
        Bm = Bm[:, None]
    if Bm.shape[0] != d.size:
        raise InvalidSpec(f"B has {Bm.shape[0]} rows, operator has size {d.size}")
    Q, _ = qr_thin(Bm)
    return SparseSym(sp.diags(d)), Q


# -- random enrichment -------------------------------------------------------


def box_muller_normals(rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` standard normals from uniform draws via Box-Muller."""
    pairs = (count + 1) // 2
    u = rng.random((pairs, 2))
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)]).ravel()
    return z[:count]


def gaussian_block(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    # column-major fill so column j does not depend on k
    return box_muller_normals(rng, n * k).reshape(k, n).T.copy()


def enrich(B, p_extra: int, seed: int, max_tries: int = 3) -> np.ndarray:
    """Return an orthonormal ``[B, R]`` with ``R`` Gaussian, B's columns first.

    An orthonormal ``B`` is kept verbatim; otherwise it is orthonormalized
    first.  ``R`` is projected out of range(B) twice before its own QR.
    """
    B = np.asarray(B, dtype=float)
    n, p = B.shape
    if p_extra == 0:
        return B
    if p_extra < 0 or p + p_extra > n:
        raise InvalidSpec(f"cannot enrich a {n} x {p} block with {p_extra} columns")
    if np.linalg.norm(B.T @ B - np.eye(p), 2) > 1e-10:
        B, _ = qr_thin(B)
    rng = np.random.Generator(np.random.PCG64(seed))
    last = None
    for _ in range(max_tries):
        R = gaussian_block(n, p_extra, rng)
        scale = np.linalg.norm(R)
        for _ in range(2):
            R = R - B @ (B.T @ R)
        try:
            Qr, _ = qr_thin(R, tol=1e-10 * scale)
        except RankDeficient as exc:
            last = exc
            continue
        Qr = Qr - B @ (B.T @ Qr)
        Qr, _ = qr_thin(Qr)
        return np.hstack([B, Qr])
    raise RankDeficient(p + (last.column if last else 0))


# -- declarative problem description ----------------------------------------

KINDS = ("diffusion2d", "graph-laplacian", "diagonal-synthetic", "matrix-market")


@dataclass
class ProblemSpec:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def validate(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown problem kind {self.kind!r}; expected one of {KINDS}")
        p = self.params
        if self.kind == "diffusion2d":
            for key in ("nx", "ny"):
                if int(p.get(key, 0)) < 1:
                    raise InvalidSpec(f"diffusion2d needs positive {key}")
            if int(p.get("n_opt", 0)) < 0:
                raise InvalidSpec("n_opt must be nonnegative")
            if "transducers" not in p and "transducer_fractions" not in p:
                raise InvalidSpec("diffusion2d needs transducers or transducer_fractions")
        elif self.kind == "graph-laplacian":
            if "edges" not in p:
                raise InvalidSpec("graph-laplacian needs an edges file")
            if "delta_nodes" not in p and "random_deltas" not in p:
                raise InvalidSpec("graph-laplacian needs delta_nodes or random_deltas")
        elif self.kind == "diagonal-synthetic":
            if "diag" not in p and "n" not in p:
                raise InvalidSpec("diagonal-synthetic needs diag or n")
            if "b" not in p and "delta_nodes" not in p:
                raise InvalidSpec("diagonal-synthetic needs b or delta_nodes")
        elif self.kind == "matrix-market":
            if "matrix" not in p:
                raise InvalidSpec("matrix-market needs a matrix path")
            if "b" not in p and "delta_nodes" not in p:
                raise InvalidSpec("matrix-market needs b (path) or delta_nodes")
        return self


def desk_diffusion_spec(nx: int = 60, ny: int = 60, n_opt: int = 10) -> ProblemSpec:
    """Desk-scale diffusion setup used by the tests and the shipped configs.

    A low-conductivity rectangle (sigma = 0.5) sits in the centre-lower part
    of the interior; three transducers lie on a line above it.
    """
    return ProblemSpec(
        "diffusion2d",
        {
            "nx": nx,
            "ny": ny,
            "n_opt": n_opt,
            "contrast": {"rect": [int(0.4 * nx), int(0.6 * nx), int(0.5 * ny), int(0.7 * ny)], "value": 0.5},
            "transducer_fractions": [[0.3, 0.25], [0.5, 0.25], [0.7, 0.25]],
        },
    )


def build_problem(spec: ProblemSpec, base_dir=None):
    """Materialize ``(A, B)`` for a :class:`ProblemSpec`."""
    from pathlib import Path

    from . import mmio

    spec.validate()
    p = spec.params
    root = Path(base_dir) if base_dir is not None else Path(".")

    def path(key):
        q = Path(p[key])
        return q if q.is_absolute() else root / q

    if spec.kind == "diffusion2d":
        nx, ny, n_opt = int(p["nx"]), int(p["ny"]), int(p.get("n_opt", 0))
        sigma = None
        if "sigma_file" in p:
            sigma = np.loadtxt(path("sigma_file"), ndmin=2)
        elif "contrast" in p:
            c = p["contrast"]
            sigma = contrast_field(nx, ny, c.get("rect"), c.get("value", 1.0), c.get("background", 1.0))
        if "transducers" in p:
            trx = [tuple(t) for t in p["transducers"]]
        else:
            trx = fractional_nodes(nx, ny, p["transducer_fractions"])
        return gen_diffusion2d(nx, ny, n_opt, sigma, trx, p.get("ratio"))

    if spec.kind == "graph-laplacian":
        edges, n = mmio.load_edge_list(path("edges"))
        if "delta_nodes" in p:
            nodes = [int(v) for v in p["delta_nodes"]]
        else:
            nodes = random_nodes(n, int(p["random_deltas"]), int(p.get("seed", 1)))
        return gen_graph_laplacian(edges, nodes, n)

    if spec.kind == "diagonal-synthetic":
        if "diag" in p:
            diag = np.asarray(p["diag"], dtype=float)
        else:
            diag = np.geomspace(float(p.get("lambda_min", 1e-3)), float(p.get("lambda_max", 1.0)), int(p["n"]))
        if "b" in p:
            b = p["b"]
        else:
            b = delta_block(diag.size, [int(v) for v in p["delta_nodes"]])
        return gen_diagonal(diag, b)

    A = mmio.load_matrix_market(path("matrix"))
    if "delta_nodes" in p:
        return A, delta_block(A.n, [int(v) for v in p["delta_nodes"]])
    B = mmio.load_block(path("b"))
    if B.shape[0] != A.n:
        raise InvalidSpec(f"B has {B.shape[0]} rows, matrix has size {A.n}")
    Q, _ = qr_thin(B)
    return A, Q
