"""Block Gauss and Gauss-Radau values, bounds, extrapolation and a reference.

All p x p results are ``numpy`` arrays.  Errors are spectral norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigFailure, InvalidSpec, InvalidSpectrum, NotPositiveDefinite, NotStieltjes, TooLarge
from .lanczos import BlockTridiagonal
from .operators import SparseSym
from .smallmat import banded_lower, block_tridiag_solve, norm2, spd_fn, spd_inverse, symmetrize
from .stieltjes import RadauMatrix, StieltjesParams, extract, radau_alpha


@dataclass(frozen=True)
class PhiSpec:
    """``resolvent``: (A + s I)^{-1};  ``exponential``: exp(-A t) with t = ``value``."""

    kind: str
    value: complex

    def __post_init__(self):
        if self.kind == "resolvent":
            s = complex(self.value)
            if not (s.real > 0 or s.imag != 0):
                raise InvalidSpec(f"resolvent shift must have Re(s) > 0 or Im(s) != 0, got {self.value}")
            object.__setattr__(self, "value", s.real if s.imag == 0 else s)
        elif self.kind == "exponential":
            t = complex(self.value)
            if t.imag != 0 or not t.real > 0:
                raise InvalidSpec(f"exponential needs real t > 0, got {self.value}")
            object.__setattr__(self, "value", t.real)
        else:
            raise InvalidSpec(f"unknown phi kind {self.kind!r}")

    @classmethod
    def resolvent(cls, s) -> "PhiSpec":
        return cls("resolvent", s)

    @classmethod
    def exponential(cls, t) -> "PhiSpec":
        return cls("exponential", t)

    @property
    def is_real_resolvent(self) -> bool:
        return self.kind == "resolvent" and not isinstance(self.value, complex)

    def scalar(self, x):
        """The scalar function applied to (arrays of) nodes."""
        if self.kind == "resolvent":
            return 1.0 / (x + self.value)
        return np.exp(-self.value * x)

    @property
    def label(self) -> str:
        return "resolvent" if self.kind == "resolvent" else "exp"

    @property
    def param_str(self) -> str:
        v = self.value
        if isinstance(v, complex):
            return f"{v.real:.17g}{v.imag:+.17g}j"
        return f"{v:.17g}"


@dataclass
class NodesWeights:
    nodes: np.ndarray
    weights: np.ndarray  # (k, p, p), each of rank one

    def integrate(self, f) -> np.ndarray:
        """``sum_i f(x_i) w_i``."""
        vals = f(self.nodes)
        return np.tensordot(vals, self.weights, axes=(0, 0))

    @property
    def total_weight(self) -> np.ndarray:
        return self.weights.sum(axis=0)


def _eig_first_rows(T: BlockTridiagonal):
    """Eigenvalues of T and the first p rows of its eigenvectors."""
    p = T.p
    try:
        band = banded_lower(T.alphas, T.betas)
        lam, Z = sla.eig_banded(band, lower=True, check_finite=False)
    except ValueError:
        lam, Z = np.linalg.eigh(T.assemble())
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise EigFailure(str(exc)) from exc
    return lam, Z[:p, :]


def nodes_weights(T: BlockTridiagonal) -> NodesWeights:
    """Quadrature nodes (eigenvalues) and rank-one p x p weights of ``T``."""
    lam, Z1 = _eig_first_rows(T)
    W = np.einsum("ik,jk->kij", Z1, Z1)
    return NodesWeights(lam, W)


def _e1(T: BlockTridiagonal) -> np.ndarray:
    E = np.zeros((T.m * T.p, T.p))
    E[: T.p] = np.eye(T.p)
    return E


def _evaluate(T: BlockTridiagonal, phi: PhiSpec) -> np.ndarray:
    p = T.p
    if phi.kind == "resolvent":
        X = block_tridiag_solve(T.alphas, T.betas, phi.value, _e1(T))[:p]
        return symmetrize(X)
    lam, Z1 = _eig_first_rows(T)
    return symmetrize((Z1 * np.exp(-phi.value * lam)) @ Z1.T)


def eval_gauss(T: BlockTridiagonal, phi: PhiSpec) -> np.ndarray:
    """Block Gauss value ``E_1^T phi(T) E_1``."""
    return _evaluate(T, phi)


def eval_radau(R: RadauMatrix, phi: PhiSpec) -> np.ndarray:
    """Block Gauss-Radau value ``E_1^T phi(T~) E_1``; singular at s = 0."""
    return _evaluate(R, phi)


def extrapolate(F_gauss, F_radau):
    """Averaged quadratures from a Gauss/Gauss-Radau pair.

    Returns ``(F_hat, F_bar, F_check)``: the arithmetic mean, the harmonic
    mean and the log-Euclidean mean of those two.  The last two are ``None``
    unless both inputs are real s.p.d.
    """
    Fg = np.asarray(F_gauss)
    Fr = np.asarray(F_radau)
    F_hat = 0.5 * (Fg + Fr)
    if np.iscomplexobj(Fg) or np.iscomplexobj(Fr):
        return F_hat, None, None
    try:
        F_bar = spd_inverse(0.5 * (spd_inverse(Fg) + spd_inverse(Fr)))
        F_check = spd_fn(0.5 * (spd_fn(F_bar, "log") + spd_fn(F_hat, "log")), "exp")
    except NotPositiveDefinite:
        return F_hat, None, None
    return F_hat, F_bar, F_check


@dataclass
class QuadratureSet:
    """Gauss value at ``m`` paired with the Gauss-Radau value at ``m + 1``."""

    m: int
    gauss: np.ndarray
    radau: np.ndarray
    bound: float
    hat: np.ndarray
    bar: np.ndarray | None = None
    check: np.ndarray | None = None

    def leading(self, p: int) -> "QuadratureSet":
        """Restrict every value to its leading p x p block."""
        cut = lambda M: None if M is None else M[:p, :p]  # noqa: E731
        g, r = cut(self.gauss), cut(self.radau)
        return QuadratureSet(self.m, g, r, norm2(r - g), cut(self.hat), cut(self.bar), cut(self.check))


def two_sided(T: BlockTridiagonal, phi: PhiSpec, m: int | None = None, params: StieltjesParams | None = None) -> QuadratureSet:
    """Pair ``F_m`` with ``F~_{m+1}``; ``T`` must hold at least ``m + 1`` blocks.

    ``m`` defaults to ``T.m - 1``.
    """
    if m is None:
        m = T.m - 1
    if not 1 <= m <= T.m - 1:
        raise ValueError(f"pairing at m={m} needs {m + 1} blocks, T has {T.m}")
    if params is None:
        params = extract(T.truncate(m + 1))
    Fm = eval_gauss(T.truncate(m), phi)
    T1 = T.truncate(m + 1)
    R = RadauMatrix(T1.alphas[:-1] + (radau_alpha(params, m + 1),), T1.betas)
    Fr = eval_radau(R, phi)
    F_hat, F_bar, F_check = extrapolate(Fm, Fr) if phi.is_real_resolvent else (0.5 * (Fm + Fr), None, None)
    return QuadratureSet(m, Fm, Fr, norm2(Fr - Fm), F_hat, F_bar, F_check)


def _resolvent_pairs(T: BlockTridiagonal, params: StieltjesParams, s, ms) -> Iterator[tuple]:
    """``(m, F_m, F~_{m+1})`` for increasing ``m`` from one block LU sweep.

    With Schur complements ``S_1 = alpha_1 + s I``,
    ``S_k = alpha_k + s I - beta_k S_{k-1}^{-1} beta_k^T`` and
    ``Y_1 = I``, ``Y_k = -beta_k S_{k-1}^{-1} Y_{k-1}`` one has
    ``F_m = sum_k Y_k^T S_k^{-1} Y_k``.  The Gauss-Radau value only changes
    the last complement, so each pair costs O(p^3).
    """
    wanted = set(ms)
    top = max(wanted)
    p = T.p
    dtype = np.result_type(float, np.asarray(s).dtype)
    eye = np.eye(p, dtype=dtype)
    S = T.alphas[0] + s * eye
    Y = eye
    F = np.linalg.solve(S, Y)
    for k in range(1, top + 1):
        beta = T.betas[k - 1]
        G = np.linalg.solve(S, np.column_stack([beta.T, Y]))
        coupling = beta @ G[:, :p]
        Y = -beta @ G[:, p:]
        if k in wanted:
            S_radau = radau_alpha(params, k + 1) + s * eye - coupling
            yield k, F, F + Y.T @ np.linalg.solve(S_radau, Y)
        S = T.alphas[k] + s * eye - coupling
        F = F + Y.T @ np.linalg.solve(S, Y)


def sweep(T: BlockTridiagonal, phi: PhiSpec, ms: Sequence[int] | None = None, params: StieltjesParams | None = None) -> Iterator[QuadratureSet]:
    """Quadrature sets for every ``m`` in ``ms`` (default ``1 .. T.m - 1``).

    Resolvents go through a single incremental block LU sweep; other
    functions are evaluated per ``m`` with :func:`two_sided`.  Stops early,
    without raising, when the Stieltjes extraction fails at some floor; the
    pairs computed up to that point remain valid.
    """
    ms = list(range(1, T.m) if ms is None else ms)
    if params is None:
        try:
            params = extract(T)
        except NotStieltjes as exc:
            params = extract(T.truncate(exc.index - 1)) if exc.index > 1 else None
    if params is None:
        return
    ms = [m for m in ms if 1 <= m and m + 1 <= params.m]
    if not ms:
        return
    if phi.kind != "resolvent":
        for m in ms:
            yield two_sided(T, phi, m, params)
        return
    for m, Fm, Fr in _resolvent_pairs(T, params, phi.value, ms):
        Fm, Fr = symmetrize(Fm), symmetrize(Fr)
        F_hat, F_bar, F_check = extrapolate(Fm, Fr) if phi.is_real_resolvent else (0.5 * (Fm + Fr), None, None)
        yield QuadratureSet(m, Fm, Fr, norm2(Fr - Fm), F_hat, F_bar, F_check)


# -- reference values --------------------------------------------------------


def _as_sparse(A):
    if isinstance(A, SparseSym):
        return A.csr
    if sp.issparse(A):
        return sp.csr_array(A)
    return None


class ReferenceOracle:
    """Direct evaluation of ``B^T phi(A) B`` on problems small enough for it.

    Resolvents use a sparse LU per shift; the exponential uses one dense
    symmetric eigendecomposition that is reused across times.
    """

    def __init__(self, A, B, max_sparse: int = 200_000, max_dense: int = 3000):
        self.A = A
        self.B = np.asarray(B, dtype=float)
        self.n = self.B.shape[0]
        self.max_sparse = max_sparse
        self.max_dense = max_dense
        self._eig = None
        self._cache: dict = {}

    def _dense(self):
        S = _as_sparse(self.A)
        return S.toarray() if S is not None else np.asarray(self.A, dtype=float)

    def __call__(self, phi: PhiSpec) -> np.ndarray:
        key = (phi.kind, phi.value)
        if key not in self._cache:
            self._cache[key] = self._compute(phi)
        return self._cache[key]

    def _compute(self, phi: PhiSpec) -> np.ndarray:
        B = self.B
        if phi.kind == "resolvent":
            if self.n > self.max_sparse:
                raise TooLarge(f"n={self.n} exceeds the direct-solve limit {self.max_sparse}")
            S = _as_sparse(self.A)
            s = phi.value
            if S is None:
                M = np.asarray(self.A) + s * np.eye(self.n)
                X = np.linalg.solve(M, B)
            else:
                M = (S + s * sp.identity(self.n, dtype=np.result_type(float, np.asarray(s).dtype))).tocsc()
                lu = spla.splu(M)
                Bc = B.astype(M.dtype)
                X = lu.solve(Bc)
                X = X + lu.solve(Bc - M @ X)  # one refinement step
            F = B.T @ X
            return symmetrize(F)
        if self.n > self.max_dense:
            raise TooLarge(f"n={self.n} exceeds the dense eigensolver limit {self.max_dense}")
        if self._eig is None:
            lam, Z = np.linalg.eigh(symmetrize(self._dense()))
            self._eig = (lam, Z.T @ B)
        lam, ZB = self._eig
        return symmetrize((ZB.T * np.exp(-phi.value * lam)) @ ZB)


def reference_oracle(A, B, phi: PhiSpec, **limits) -> np.ndarray:
    """``B^T phi(A) B`` by a direct method (see :class:`ReferenceOracle`)."""
    return ReferenceOracle(A, B, **limits)(phi)


def potential_rate(theta_max: float, s: float) -> float:
    """Green-function value ``g(sqrt(s))`` for a spectrum filling ``[0, theta_max]``.

    In the variable ``lambda = sqrt(s)`` the singularities of the resolvent
    fill the segment ``[-i c, i c]`` with ``c = sqrt(theta_max)``; the Green
    function of its complement, evaluated on the positive real axis, is
    ``asinh(lambda / c)``.  The Gauss error then decays like
    ``exp(-(4m - 1) g)``.
    """
    if not theta_max > 0:
        raise InvalidSpectrum(f"theta_max must be positive, got {theta_max}")
    if not s > 0:
        raise InvalidSpec(f"s must be positive, got {s}")
    return math.asinh(math.sqrt(s / theta_max))
