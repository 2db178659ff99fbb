"""Dense kernels for small symmetric matrices.

Everything here operates on plain ``numpy`` arrays: the p x p Lanczos and
Stieltjes coefficients, the p x p quadrature values and, for moderate m*p,
assembled block-tridiagonal matrices.  The functions are pure.
"""

from __future__ import annotations

from typing import Callable, NamedTuple, Sequence, Union

import numpy as np
import scipy.linalg as sla

from .errors import NonSymmetric, NotPositiveDefinite, RankDeficient, SingularShift

SYM_RTOL = 1e-12
SPD_LOG_RTOL = 1e-14
SINGULAR_RTOL = 1e-13


class SymEig(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def norm2(M) -> float:
    """Spectral norm; 0.0 for empty input."""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def is_symmetric(M, rtol: float = SYM_RTOL) -> bool:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = np.max(np.abs(M)) if M.size else 0.0
    return bool(np.max(np.abs(M - M.T), initial=0.0) <= rtol * scale)


def symmetrize(M) -> np.ndarray:
    M = np.asarray(M)
    return 0.5 * (M + M.T)


def qr_thin(W, tol: float | None = None):
    """Thin QR with a nonnegative diagonal of R.

    ``tol`` is an absolute threshold on ``|R_jj|``; by default it is
    ``1e-12 * ||W||_F``.  Raises :class:`RankDeficient` with the first
    offending column when the threshold is not exceeded.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError("qr_thin expects a 2-D block")
    if tol is None:
        tol = 1e-12 * np.linalg.norm(W)
    Q, R = np.linalg.qr(W, mode="reduced")
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    Q = Q * d
    R = d[:, None] * R
    diag = np.diag(R)
    bad = np.flatnonzero(np.abs(diag) <= tol)
    if bad.size:
        j = int(bad[0])
        raise RankDeficient(j, float(abs(diag[j])))
    return Q, np.triu(R)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # first component above the noise floor made nonnegative
    V = V.copy()
    for k in range(V.shape[1]):
        col = V[:, k]
        idx = np.flatnonzero(np.abs(col) > 1e-8)
        if idx.size and col[idx[0]] < 0:
            V[:, k] = -col
    return V


def sym_eig(M, rtol: float = SYM_RTOL) -> SymEig:
    """Ascending eigendecomposition of a symmetric matrix."""
    M = np.asarray(M, dtype=float)
    if not is_symmetric(M, rtol):
        raise NonSymmetric("matrix is not symmetric within tolerance")
    lam, V = np.linalg.eigh(symmetrize(M))
    return SymEig(lam, _fix_signs(V))


_NAMED: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "log": np.log,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "inv": lambda x: 1.0 / x,
}


def spd_fn(M, f: Union[str, Callable[[np.ndarray], np.ndarray]]) -> np.ndarray:
    """Return ``Q f(Lambda) Q^T`` for symmetric ``M``.

    ``f`` may be a callable acting elementwise on the eigenvalues or one of
    ``"log"``, ``"exp"``, ``"sqrt"``, ``"inv"``.  Functions that need a
    positive spectrum (log, sqrt, inv) raise :class:`NotPositiveDefinite`
    when an eigenvalue is at or below ``1e-14 * lambda_max``.
    """
    needs_pd = f in ("log", "sqrt", "inv") or f is np.log or f is np.sqrt
    if isinstance(f, str):
        f = _NAMED[f]
    lam, Q = sym_eig(M)
    if needs_pd:
        top = lam[-1] if lam.size else 0.0
        if lam.size and (top <= 0 or lam[0] <= SPD_LOG_RTOL * top):
            raise NotPositiveDefinite(f"min eigenvalue {lam[0]:.3e} (max {top:.3e})")
    return symmetrize((Q * f(lam)) @ Q.T)


def spd_inverse(M) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky."""
    M = symmetrize(np.asarray(M, dtype=float))
    try:
        c = sla.cho_factor(M, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return symmetrize(sla.cho_solve(c, np.eye(M.shape[0])))


def loewner_geq(G1, G2, tol: float = 0.0) -> bool:
    """True iff ``G1 - G2`` is positive semidefinite up to a relative slack."""
    G1 = np.asarray(G1, dtype=float)
    G2 = np.asarray(G2, dtype=float)
    if G1.shape != G2.shape:
        raise ValueError(f"shape mismatch {G1.shape} vs {G2.shape}")
    lam_min = np.linalg.eigvalsh(symmetrize(G1 - G2))[0]
    scale = max(1.0, norm2(G1), norm2(G2))
    return bool(lam_min >= -tol * scale)


def block_tridiag_solve(
    alphas: Sequence[np.ndarray],
    betas: Sequence[np.ndarray],
    s: complex,
    rhs,
    rtol: float = SINGULAR_RTOL,
) -> np.ndarray:
    """Solve ``(T + s I) X = rhs`` for block-tridiagonal ``T``.

    ``alphas`` are the m diagonal blocks, ``betas`` the m-1 subdiagonal
    blocks (``betas[k]`` sits below ``alphas[k]``).  Block LU without
    inter-block pivoting, O(m p^3).  The result is complex when ``s`` is.
    """
    m = len(alphas)
    if m == 0:
        raise ValueError("empty block-tridiagonal matrix")
    if len(betas) != m - 1:
        raise ValueError(f"expected {m - 1} off-diagonal blocks, got {len(betas)}")
    p = np.asarray(alphas[0]).shape[0]
    rhs = np.asarray(rhs)
    squeeze = rhs.ndim == 1
    if squeeze:
        rhs = rhs[:, None]
    if rhs.shape[0] != m * p:
        raise ValueError(f"rhs has {rhs.shape[0]} rows, expected {m * p}")

    dtype = np.result_type(float, np.asarray(s).dtype, rhs.dtype)
    eye = np.eye(p)
    scale = max(max(norm2(a) for a in alphas), max((norm2(b) for b in betas), default=0.0))
    scale = max(scale + abs(s), np.finfo(float).tiny)

    def factor(S, i):
        sv = np.linalg.svd(S, compute_uv=False)
        if sv[-1] <= rtol * scale:
            raise SingularShift(
                f"pivot block {i + 1} has smallest singular value {sv[-1]:.3e} "
                f"(scale {scale:.3e}) at s={s}"
            )
        return sla.lu_factor(S, check_finite=False)

    lus = []
    y = np.empty((m * p, rhs.shape[1]), dtype=dtype)
    S = np.asarray(alphas[0], dtype=dtype) + s * eye
    lus.append(factor(S, 0))
    y[:p] = rhs[:p]
    for i in range(1, m):
        b = np.asarray(betas[i - 1], dtype=dtype)
        Sinv_bT = sla.lu_solve(lus[-1], b.T, check_finite=False)
        S = np.asarray(alphas[i], dtype=dtype) + s * eye - b @ Sinv_bT
        lus.append(factor(S, i))
        prev = sla.lu_solve(lus[-2], y[(i - 1) * p : i * p], check_finite=False)
        y[i * p : (i + 1) * p] = rhs[i * p : (i + 1) * p] - b @ prev

    x = np.empty_like(y)
    x[(m - 1) * p :] = sla.lu_solve(lus[-1], y[(m - 1) * p :], check_finite=False)
    for i in range(m - 2, -1, -1):
        bT = np.asarray(betas[i], dtype=dtype).T
        r = y[i * p : (i + 1) * p] - bT @ x[(i + 1) * p : (i + 2) * p]
        x[i * p : (i + 1) * p] = sla.lu_solve(lus[i], r, check_finite=False)
    return x[:, 0] if squeeze else x


def assemble_block_tridiag(alphas: Sequence[np.ndarray], betas: Sequence[np.ndarray]) -> np.ndarray:
    """Dense symmetric layout of the block-tridiagonal matrix."""
    m = len(alphas)
    p = np.asarray(alphas[0]).shape[0]
    T = np.zeros((m * p, m * p))
    for i, a in enumerate(alphas):
        T[i * p : (i + 1) * p, i * p : (i + 1) * p] = a
    for i, b in enumerate(betas, start=1):
        T[i * p : (i + 1) * p, (i - 1) * p : i * p] = b
        T[(i - 1) * p : i * p, i * p : (i + 1) * p] = np.asarray(b).T
    return T


def banded_lower(alphas: Sequence[np.ndarray], betas: Sequence[np.ndarray]) -> np.ndarray:
    """Lower banded storage (bandwidth p) for ``scipy.linalg.eig_banded``.

    Requires upper-triangular subdiagonal blocks, as produced by QR-based
    Lanczos; raises ``ValueError`` otherwise.
    """
    m = len(alphas)
    p = np.asarray(alphas[0]).shape[0]
    band = np.zeros((p + 1, m * p))
    rows, cols = np.tril_indices(p)
    for i, a in enumerate(alphas):
        band[rows - cols, i * p + cols] = np.asarray(a)[rows, cols]
    urows, ucols = np.triu_indices(p)
    for i, b in enumerate(betas, start=1):
        b = np.asarray(b)
        if np.any(np.tril(b, -1)):
            raise ValueError(f"subdiagonal block {i + 1} is not upper triangular")
        band[p + urows - ucols, (i - 1) * p + ucols] = b[urows, ucols]
    return band
