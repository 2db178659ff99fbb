"""Stieltjes parameters of a block Lanczos matrix and the matrix S-fraction.

The block LDL^T factorization of ``T_m`` is parameterized by s.p.d. blocks
``gamma_i`` and invertible ``kappa_i`` (``kappa_1 = I``) with

    alpha_1 = gamma_1^{-1}
    alpha_i = K_i^T (gamma_{i-1}^{-1} + gamma_i^{-1}) K_i
    beta_i  = K_i^T gamma_{i-1}^{-1} K_{i-1}

where ``K_i = kappa_i^{-1}``.  The masses ``gamma_hat_i = kappa_i^T kappa_i``
and the ``gamma_i`` are the floors of the S-fraction

    C_i(s) = [s gamma_hat_i + (gamma_i + C_{i+1}(s))^{-1}]^{-1},

whose top floor ``C_1`` is the block Gauss value for ``C_{m+1} = 0`` and the
block Gauss-Radau value for ``C_{m+1} = +inf``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import NonPositiveShift, NotPositiveDefinite, NotStieltjes
from .lanczos import BlockTridiagonal
from .smallmat import block_tridiag_solve, norm2, spd_inverse, symmetrize


@dataclass(frozen=True)
class StieltjesParams:
    gammas: tuple
    gamma_invs: tuple
    kappa_hats: tuple
    kappa_hat_invs: tuple
    gamma_hats: tuple

    @property
    def m(self) -> int:
        return len(self.gammas)

    @property
    def p(self) -> int:
        return self.gammas[0].shape[0]

    def truncate(self, m: int) -> "StieltjesParams":
        return StieltjesParams(*(getattr(self, f)[:m] for f in self.__dataclass_fields__))


class RadauMatrix(BlockTridiagonal):
    """Block-tridiagonal matrix whose last diagonal block makes it singular."""


def _spd_inv_or_fail(M, index, what):
    try:
        return spd_inverse(M)
    except NotPositiveDefinite as exc:
        raise NotStieltjes(index, f"({what}: {exc})") from exc


def extract(T: BlockTridiagonal) -> StieltjesParams:
    """Block LDL^T extraction of the Stieltjes parameters from ``T``."""
    p = T.p
    eye = np.eye(p)
    gamma_inv = symmetrize(T.alphas[0])
    gamma = _spd_inv_or_fail(gamma_inv, 1, "alpha_1")
    gammas, gamma_invs = [gamma], [gamma_inv]
    kappas, kappa_invs = [eye], [eye]
    for i in range(1, T.m):
        beta = T.betas[i - 1]
        kappa_inv = gammas[-1] @ kappas[-1].T @ beta.T
        try:
            kappa = np.linalg.inv(kappa_inv)
        except np.linalg.LinAlgError as exc:
            raise NotStieltjes(i + 1, "(singular kappa)") from exc
        gamma_inv = symmetrize(kappa.T @ T.alphas[i] @ kappa - gamma_invs[-1])
        gamma = _spd_inv_or_fail(gamma_inv, i + 1, "gamma^{-1}")
        gammas.append(gamma)
        gamma_invs.append(gamma_inv)
        kappas.append(kappa)
        kappa_invs.append(kappa_inv)
    gamma_hats = [symmetrize(k.T @ k) for k in kappas]
    return StieltjesParams(tuple(gammas), tuple(gamma_invs), tuple(kappas), tuple(kappa_invs), tuple(gamma_hats))


def reconstruct(params: StieltjesParams) -> BlockTridiagonal:
    """Rebuild ``T`` from its Stieltjes parameters."""
    K = params.kappa_hat_invs
    gi = params.gamma_invs
    alphas = [gi[0].copy()]
    betas = []
    for i in range(1, params.m):
        alphas.append(symmetrize(K[i].T @ (gi[i - 1] + gi[i]) @ K[i]))
        betas.append(K[i].T @ gi[i - 1] @ K[i - 1])
    return BlockTridiagonal(alphas, betas)


def radau_alpha(params: StieltjesParams, m: int | None = None) -> np.ndarray:
    """Last diagonal block of the Gauss-Radau matrix built on ``m`` floors."""
    m = params.m if m is None else m
    if m == 1:
        return np.zeros((params.p, params.p))
    K = params.kappa_hat_invs[m - 1]
    return symmetrize(K.T @ params.gamma_invs[m - 2] @ K)


def radau_matrix(T: BlockTridiagonal, params: StieltjesParams | None = None) -> RadauMatrix:
    """``T`` with its last diagonal block replaced by the Gauss-Radau block."""
    if params is None:
        params = extract(T)
    if params.m < T.m:
        raise ValueError(f"parameters cover {params.m} floors, T has {T.m}")
    alphas = list(T.alphas)
    alphas[-1] = radau_alpha(params, T.m)
    return RadauMatrix(alphas, T.betas)


def sfraction_eval(params: StieltjesParams, s: float, radau: bool = False, m: int | None = None) -> np.ndarray:
    """Evaluate the truncated matrix S-fraction at real ``s > 0``.

    ``m`` selects the number of floors (default: all).  Every intermediate
    ``C_i`` goes through a Cholesky factorization, so a floor that stops
    being s.p.d. raises :class:`NotStieltjes`.
    """
    if isinstance(s, complex) or np.iscomplexobj(s):
        raise NonPositiveShift(f"S-fraction evaluation needs a real shift, got {s}")
    s = float(s)
    if not s > 0:
        raise NonPositiveShift(f"shift must be positive, got {s}")
    m = params.m if m is None else m
    if not 1 <= m <= params.m:
        raise ValueError(f"cannot evaluate {m} floors from {params.m}")
    gh, g = params.gamma_hats, params.gammas
    if radau:
        C = _spd_inv_or_fail(s * gh[m - 1], m, "s gamma_hat")
        top = m - 1
    else:
        C = np.zeros_like(g[0])
        top = m
    for i in range(top - 1, -1, -1):
        inner = _spd_inv_or_fail(g[i] + C, i + 1, "gamma + C")
        C = _spd_inv_or_fail(s * gh[i] + inner, i + 1, "C floor")
    return C


@dataclass
class IdentityReport:
    """Residuals of the two limits at ``s -> 0``."""

    m: int
    f0_error: float
    f0_rel: float
    residue_error: float
    residue_rel: float
    residue_error_raw: float

    def as_dict(self):
        return asdict(self)


def check_identities(params: StieltjesParams, T: BlockTridiagonal | None = None, s_small: float = 1e-8) -> IdentityReport:
    """Compare ``F_m(0)`` with the sum of gammas and ``lim s F~_m(s)`` with
    the inverse sum of gamma_hats.

    ``F_m(0)`` comes from a direct block solve with ``T`` at ``s = 0``; the
    residue uses the S-fraction at ``s_small`` and ``s_small / 10`` followed
    by one Richardson step.
    """
    if T is None:
        T = reconstruct(params)
    p = params.p
    E1 = np.zeros((T.m * p, p))
    E1[:p] = np.eye(p)
    F0 = block_tridiag_solve(T.alphas, T.betas, 0.0, E1)[:p]
    sum_gamma = sum(params.gammas[: T.m])
    f0_err = norm2(symmetrize(F0) - sum_gamma)

    residue = spd_inverse(sum(params.gamma_hats[: T.m]))
    s1, s2 = s_small, s_small / 10
    g1 = s1 * sfraction_eval(params, s1, radau=True, m=T.m)
    g2 = s2 * sfraction_eval(params, s2, radau=True, m=T.m)
    extrap = (s1 * g2 - s2 * g1) / (s1 - s2)
    raw = norm2(g2 - residue)
    res_err = norm2(extrap - residue)
    return IdentityReport(
        m=T.m,
        f0_error=f0_err,
        f0_rel=f0_err / max(norm2(sum_gamma), np.finfo(float).tiny),
        residue_error=res_err,
        residue_rel=res_err / max(norm2(residue), np.finfo(float).tiny),
        residue_error_raw=raw,
    )
