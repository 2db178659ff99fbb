"""Block Lanczos iteration producing the block-tridiagonal coefficients."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, RankDeficient
from .operators import Operator, SparseSym, apply, operator_size, power_norm_estimate
from .smallmat import assemble_block_tridiag, block_tridiag_solve, qr_thin, symmetrize

log = logging.getLogger(__name__)

DEFLATION_TOL = 1e-12


@dataclass(frozen=True)
class BlockTridiagonal:
    """Diagonal blocks ``alphas`` (m of them) and subdiagonal ``betas`` (m-1).

    ``betas[k]`` is the block below ``alphas[k]``, i.e. beta_{k+2} in the
    1-based numbering of the recurrence.
    """

    alphas: tuple
    betas: tuple

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(np.asarray(a, dtype=float) for a in self.alphas))
        object.__setattr__(self, "betas", tuple(np.asarray(b, dtype=float) for b in self.betas))
        if not self.alphas:
            raise ValueError("a block-tridiagonal matrix needs at least one block")
        if len(self.betas) != len(self.alphas) - 1:
            raise ValueError(f"{len(self.alphas)} diagonal blocks need {len(self.alphas) - 1} off-diagonal ones")

    @property
    def m(self) -> int:
        return len(self.alphas)

    @property
    def p(self) -> int:
        return self.alphas[0].shape[0]

    def truncate(self, m: int) -> "BlockTridiagonal":
        if not 1 <= m <= self.m:
            raise ValueError(f"cannot truncate {self.m} blocks to {m}")
        return BlockTridiagonal(self.alphas[:m], self.betas[: m - 1])

    def assemble(self) -> np.ndarray:
        return assemble(self)

    def solve(self, s, rhs) -> np.ndarray:
        return block_tridiag_solve(self.alphas, self.betas, s, rhs)

    @classmethod
    def from_scalars(cls, diag, offdiag) -> "BlockTridiagonal":
        """p = 1 convenience constructor."""
        return cls([np.array([[a]]) for a in diag], [np.array([[b]]) for b in offdiag])


def assemble(T: BlockTridiagonal) -> np.ndarray:
    """Dense mp x mp layout of ``T``."""
    return assemble_block_tridiag(T.alphas, T.betas)


@dataclass
class LanczosState:
    """What is left after a run.

    ``q_prev``/``q_curr`` are the last two basis blocks, ``residual`` the
    block ``W`` after the last step, so that ``A Q_m = Q_m T_m + W E_m^T``.
    ``beta_next``/``q_next`` are its QR factors when ``W`` has full rank.
    ``b_factor`` is the upper-triangular ``R0`` with ``B = Q_1 R0``.
    ``breakdown`` is the 1-based step at which the new block lost rank.
    """

    q_prev: np.ndarray | None
    q_curr: np.ndarray
    residual: np.ndarray
    steps: int
    b_factor: np.ndarray
    norm_estimate: float
    basis: np.ndarray | None = None
    beta_next: np.ndarray | None = None
    q_next: np.ndarray | None = None
    breakdown: int | None = None

    @property
    def status(self) -> str:
        return "ok" if self.breakdown is None else f"breakdown at step {self.breakdown}"


def _reorthogonalize(W, blocks):
    # two passes of classical Gram-Schmidt against the stored basis
    for _ in range(2):
        for Q in blocks:
            W = W - Q @ (Q.T @ W)
    return W


def lanczos_run(
    A: Operator,
    B,
    m: int,
    reorth: bool = False,
    deflation_tol: float = DEFLATION_TOL,
    norm_estimate: float | None = None,
    keep_basis: bool | None = None,
):
    """Run ``m`` steps of block Lanczos on ``A`` started from ``B``.

    Returns ``(T, state)``.  A rank-deficient new block at step ``j`` ends
    the run: ``T`` holds the ``j - 1`` completed steps and ``state.breakdown``
    is ``j``.  A ``B`` that is not orthonormal is replaced by its Q factor;
    the triangular factor is kept in ``state.b_factor``.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n, p = B.shape
    size = operator_size(A)
    if size is not None and size != n:
        raise DimensionMismatch(f"operator has size {size}, B has {n} rows")
    if m < 1:
        raise ValueError("m must be at least 1")
    if m * p > n:
        raise ValueError(f"m * p = {m * p} exceeds n = {n}")
    if keep_basis is None:
        keep_basis = reorth

    if norm_estimate is None:
        norm_estimate = A.norm_estimate if isinstance(A, SparseSym) else power_norm_estimate(A)
    tol = deflation_tol * max(norm_estimate, np.finfo(float).tiny)

    if np.linalg.norm(B.T @ B - np.eye(p), 2) <= 1e-10:
        Q, R0 = B, np.eye(p)
    else:
        Q, R0 = qr_thin(B)

    blocks = [Q]
    W = apply(A, Q)
    alpha = symmetrize(Q.T @ W)
    W = W - Q @ alpha
    if reorth:
        W = _reorthogonalize(W, blocks)
    alphas, betas = [alpha], []
    q_prev = None
    breakdown = None

    for i in range(2, m + 1):
        try:
            Qn, beta = qr_thin(W, tol=tol)
        except RankDeficient as exc:
            breakdown = i
            log.info("block Lanczos breakdown at step %d (%s)", i, exc)
            break
        q_prev, Q = Q, Qn
        W = apply(A, Q) - q_prev @ beta.T
        alpha = symmetrize(Q.T @ W)
        W = W - Q @ alpha
        if reorth:
            W = _reorthogonalize(W, blocks + [Q])
        if keep_basis or reorth:
            blocks.append(Q)
        alphas.append(alpha)
        betas.append(beta)

    state = LanczosState(
        q_prev=q_prev,
        q_curr=Q,
        residual=W,
        steps=len(alphas),
        b_factor=R0,
        norm_estimate=float(norm_estimate),
        breakdown=breakdown,
    )
    if keep_basis or reorth:
        state.basis = np.hstack(blocks)
    if breakdown is None:
        try:
            state.q_next, state.beta_next = qr_thin(W, tol=tol)
        except RankDeficient:
            pass
    return BlockTridiagonal(alphas, betas), state
