import cmath
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_spd

from blockradau.errors import InvalidSpec, InvalidSpectrum, SingularShift, TooLarge
from blockradau.lanczos import BlockTridiagonal, assemble, lanczos_run
from blockradau.operators import SparseSym
from blockradau.quadrature import (
    PhiSpec,
    QuadratureSet,
    ReferenceOracle,
    eval_gauss,
    eval_radau,
    extrapolate,
    nodes_weights,
    potential_rate,
    reference_oracle,
    sweep,
    two_sided,
)
from blockradau.smallmat import loewner_geq, norm2, qr_thin
from blockradau.stieltjes import extract, radau_matrix

seeds = st.integers(min_value=0, max_value=2**32 - 1)
T2 = BlockTridiagonal.from_scalars([2.0, 2.0], [1.0])


def _case(seed, n=80, p=2, m=10, reorth=False):
    rng = np.random.default_rng(seed)
    A = random_spd(n, rng)
    B, _ = qr_thin(rng.standard_normal((n, p)))
    T, _ = lanczos_run(A, B, m, reorth=reorth)
    return A, B, T


class TestPhiSpec:
    @pytest.mark.parametrize("s", [0.0, -1.0, -2 + 0j])
    def test_invalid_resolvent(self, s):
        with pytest.raises(InvalidSpec):
            PhiSpec.resolvent(s)

    @pytest.mark.parametrize("t", [0.0, -1.0, 1j])
    def test_invalid_exponential(self, t):
        with pytest.raises(InvalidSpec):
            PhiSpec.exponential(t)

    def test_unknown_kind(self):
        with pytest.raises(InvalidSpec):
            PhiSpec("sqrt", 1.0)

    def test_labels(self):
        assert PhiSpec.resolvent(1e-3).param_str == "0.001"
        assert PhiSpec.resolvent(1e-3j).param_str == "0+0.001j"
        assert PhiSpec.resolvent(2 + 0j).is_real_resolvent
        assert not PhiSpec.resolvent(-1 + 1j).is_real_resolvent
        assert PhiSpec.exponential(2).label == "exp"


class TestEvaluate:
    def test_gauss_two_by_two(self):
        np.testing.assert_allclose(eval_gauss(T2, PhiSpec.resolvent(1.0)), [[3 / 8]], rtol=1e-15)

    def test_gauss_exponential_small_time(self):
        np.testing.assert_allclose(eval_gauss(T2, PhiSpec.exponential(1e-14)), [[1.0]], rtol=1e-13)

    def test_gauss_exponential_closed_form(self):
        # eigenpairs 1, 3 with equal first-component weights
        t = 0.7
        ref = 0.5 * (math.exp(-t) + math.exp(-3 * t))
        np.testing.assert_allclose(eval_gauss(T2, PhiSpec.exponential(t)), [[ref]], rtol=1e-14)

    def test_gauss_imaginary_shift(self):
        _, _, T = _case(0)
        s = 1e-3j
        F = eval_gauss(T, PhiSpec.resolvent(s))
        nw = nodes_weights(T)
        ref = np.tensordot(1.0 / (nw.nodes + s), nw.weights, axes=(0, 0))
        assert np.iscomplexobj(F) and np.all(np.isfinite(F))
        assert norm2(F - ref) <= 1e-9 * norm2(ref)
        assert norm2(F) <= 1.0 / nw.nodes.min() * (1 + 1e-12)

    def test_radau_two_by_two(self):
        R = radau_matrix(T2)
        np.testing.assert_allclose(eval_radau(R, PhiSpec.resolvent(1.0)), [[3 / 7]], rtol=1e-14)

    def test_radau_singular_at_zero(self):
        R = radau_matrix(T2)
        with pytest.raises(SingularShift):
            R.solve(0.0, np.array([1.0, 0.0]))

    def test_radau_exponential_long_time(self):
        # zero node carries weight (sum gamma_hat)^{-1} = 1/5
        R = radau_matrix(T2)
        np.testing.assert_allclose(eval_radau(R, PhiSpec.exponential(1e3)), [[0.2]], rtol=1e-12)

    def test_radau_exponential_long_time_block(self):
        _, _, T = _case(2, p=3, m=6)
        P = extract(T)
        F = eval_radau(radau_matrix(T, P), PhiSpec.exponential(1e6))
        ref = np.linalg.inv(sum(P.gamma_hats))
        assert norm2(F - ref) <= 1e-8 * norm2(ref)


class TestNodesWeights:
    def test_scalar(self):
        nw = nodes_weights(BlockTridiagonal.from_scalars([2.0], []))
        np.testing.assert_allclose(nw.nodes, [2.0])
        np.testing.assert_allclose(nw.weights, [[[1.0]]])

    def test_two_by_two(self):
        nw = nodes_weights(T2)
        np.testing.assert_allclose(nw.nodes, [1.0, 3.0], rtol=1e-15)
        np.testing.assert_allclose(nw.weights.ravel(), [0.5, 0.5], rtol=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(seeds, st.integers(1, 4), st.integers(1, 10))
    def test_weights_sum_to_identity(self, seed, p, m):
        _, _, T = _case(seed, n=60, p=p, m=m)
        nw = nodes_weights(T)
        assert norm2(nw.total_weight - np.eye(p)) <= 1e-9
        for w in nw.weights:
            assert np.linalg.matrix_rank(w, tol=1e-12) <= 1

    @pytest.mark.parametrize("s", [1e-3, 1.0, 10.0])
    def test_integrate_matches_solve(self, s):
        _, _, T = _case(3, p=3, m=8)
        nw = nodes_weights(T)
        ref = eval_gauss(T, PhiSpec.resolvent(s))
        got = nw.integrate(lambda x: 1.0 / (x + s))
        assert norm2(got - ref) <= 1e-9 * norm2(ref)

    def test_dense_fallback_for_general_beta(self):
        T = BlockTridiagonal([np.eye(2) * 3, np.eye(2) * 3], [np.array([[1.0, 0.0], [0.5, 1.0]])])
        nw = nodes_weights(T)
        np.testing.assert_allclose(np.sort(nw.nodes), np.linalg.eigvalsh(assemble(T)), rtol=1e-14)

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_radau_zero_node(self, p):
        _, _, T = _case(10 + p, p=p, m=7)
        R = radau_matrix(T)
        nw = nodes_weights(R)
        zero = np.abs(nw.nodes) <= 1e-8 * norm2(assemble(R))
        assert zero.sum() >= p
        assert np.linalg.matrix_rank(nw.weights[zero].sum(axis=0), tol=1e-10) == p


class TestTwoSided:
    def test_worked(self, worked):
        A, B = worked
        T, _ = lanczos_run(A, B, 2)
        phi = PhiSpec.resolvent(1.0)
        q = two_sided(T, phi, 1)
        F = reference_oracle(A, B, phi)
        np.testing.assert_allclose(F, [[3 / 8]], rtol=1e-15)
        np.testing.assert_allclose(q.gauss, [[1 / 3]], rtol=1e-15)
        np.testing.assert_allclose(q.radau, [[3 / 7]], rtol=1e-14)
        assert q.bound == pytest.approx(2 / 21, rel=1e-13)
        F1_radau = eval_radau(radau_matrix(T.truncate(1)), phi)
        np.testing.assert_allclose(F1_radau, [[1.0]])
        assert q.gauss[0, 0] < F[0, 0] < F1_radau[0, 0]
        np.testing.assert_allclose(eval_gauss(T, phi), F, rtol=1e-14)

    def test_needs_next_block(self):
        with pytest.raises(ValueError):
            two_sided(T2, PhiSpec.resolvent(1.0), 2)

    def test_default_pairing(self):
        q = two_sided(T2, PhiSpec.resolvent(1.0))
        assert q.m == 1

    def test_bound_when_exact(self, worked):
        # n = 2: F_2 is exact, so the bound at m = 2 only needs to be >= 0
        A, B = worked
        T, _ = lanczos_run(A, B, 2)
        F = reference_oracle(A, B, PhiSpec.resolvent(1.0))
        assert norm2(F - eval_gauss(T, PhiSpec.resolvent(1.0))) <= 1e-15

    @pytest.mark.parametrize("s", [1e-3, 0.5, 1e-2j, 1.0 + 1.0j])
    def test_sweep_matches_two_sided(self, s):
        _, _, T = _case(4, p=3, m=12)
        phi = PhiSpec.resolvent(s)
        sets = list(sweep(T, phi))
        assert [q.m for q in sets] == list(range(1, 12))
        for q in sets:
            ref = two_sided(T, phi, q.m)
            assert norm2(q.gauss - ref.gauss) <= 1e-10 * norm2(ref.gauss)
            assert norm2(q.radau - ref.radau) <= 1e-10 * norm2(ref.radau)
            assert q.bound == pytest.approx(ref.bound, rel=1e-7, abs=1e-14)

    def test_sweep_matches_dense_inverse(self):
        _, _, T = _case(5, p=2, m=9)
        s = 1e-2
        for q in sweep(T, PhiSpec.resolvent(s), ms=[2, 5, 8]):
            Tm = assemble(T.truncate(q.m))
            Rm = assemble(radau_matrix(T.truncate(q.m + 1)))
            G = np.linalg.inv(Tm + s * np.eye(len(Tm)))[:2, :2]
            Gr = np.linalg.inv(Rm + s * np.eye(len(Rm)))[:2, :2]
            assert norm2(q.gauss - G) <= 1e-10 * norm2(G)
            assert norm2(q.radau - Gr) <= 1e-10 * norm2(Gr)

    def test_sweep_exponential(self):
        A, B, T = _case(6, p=2, m=10)
        phi = PhiSpec.exponential(0.5)
        sets = list(sweep(T, phi, ms=[3, 7]))
        assert [q.m for q in sets] == [3, 7]
        assert sets[0].check is None and sets[0].bar is None

    def test_sweep_stops_at_broken_floor(self):
        T = BlockTridiagonal.from_scalars([2.0, 2.0, 1.0, 1.0], [1.0, 2.0, 1.0])
        assert [q.m for q in sweep(T, PhiSpec.resolvent(1.0))] == [1]

    def test_leading_block(self):
        _, _, T = _case(7, p=3, m=5)
        q = two_sided(T, PhiSpec.resolvent(0.1), 2).leading(1)
        assert q.gauss.shape == (1, 1)
        assert q.bound == pytest.approx(abs(q.radau[0, 0] - q.gauss[0, 0]))

    @settings(max_examples=15, deadline=None)
    @given(seeds, st.integers(1, 3), st.sampled_from([1e-3, 1e-2, 1e-1, 1.0]))
    def test_sandwich_and_bound(self, seed, p, s):
        A, B, T = _case(seed, n=60, p=p, m=9)
        phi = PhiSpec.resolvent(s)
        F = reference_oracle(A, B, phi)
        prev = None
        for q in sweep(T, phi):
            assert loewner_geq(F, q.gauss, 1e-9)
            assert loewner_geq(q.radau, F, 1e-9)
            assert norm2(F - q.gauss) <= q.bound * (1 + 1e-9) + 1e-12
            assert norm2(F - q.radau) <= q.bound * (1 + 1e-9) + 1e-12
            if prev is not None:
                assert loewner_geq(q.gauss, prev.gauss, 1e-9)
                assert loewner_geq(prev.radau, q.radau, 1e-9)
            prev = q


class TestExtrapolate:
    def test_equal_arguments(self):
        G = np.array([[2.0, 0.5], [0.5, 1.0]])
        for M in extrapolate(G, G):
            np.testing.assert_allclose(M, G, rtol=1e-14)

    def test_scalar(self):
        hat, bar, check = extrapolate([[1 / 3]], [[3 / 7]])
        np.testing.assert_allclose(hat, [[8 / 21]], rtol=1e-15)
        np.testing.assert_allclose(bar, [[3 / 8]], rtol=1e-15)
        np.testing.assert_allclose(check, [[math.sqrt(1 / 7)]], rtol=1e-14)

    @pytest.mark.parametrize("a, b", [(1 / 3, 3 / 7), (0.01, 5.0), (2.0, 2.5)])
    def test_scalar_dual_invariance(self, a, b):
        _, _, check = extrapolate([[a]], [[b]])
        _, _, dual = extrapolate([[1 / b]], [[1 / a]])
        assert dual[0, 0] == pytest.approx(1 / check[0, 0], rel=1e-13)

    def test_complex_returns_mean_only(self):
        hat, bar, check = extrapolate(np.array([[1 + 1j]]), np.array([[1 - 1j]]))
        assert hat[0, 0] == pytest.approx(1.0)
        assert bar is None and check is None

    def test_indefinite_returns_mean_only(self):
        hat, bar, check = extrapolate(-np.eye(2), np.eye(2))
        np.testing.assert_array_equal(hat, np.zeros((2, 2)))
        assert bar is None and check is None


class TestOracle:
    def test_worked(self, worked):
        A, B = worked
        np.testing.assert_allclose(reference_oracle(A, B, PhiSpec.resolvent(1.0)), [[3 / 8]], rtol=1e-15)
        ref = 0.5 * (math.exp(-1) + math.exp(-3))
        np.testing.assert_allclose(reference_oracle(A, B, PhiSpec.exponential(1.0)), [[ref]], rtol=1e-14)

    def test_identity(self):
        A = SparseSym(sp.identity(10))
        B, _ = qr_thin(np.random.default_rng(0).standard_normal((10, 3)))
        np.testing.assert_allclose(reference_oracle(A, B, PhiSpec.resolvent(1.0)), 0.5 * np.eye(3), atol=1e-15)

    def test_complex_and_dense(self):
        rng = np.random.default_rng(1)
        M = random_spd(30, rng)
        B, _ = qr_thin(rng.standard_normal((30, 2)))
        s = 0.2 + 0.3j
        ref = B.T @ np.linalg.solve(M + s * np.eye(30), B)
        np.testing.assert_allclose(reference_oracle(M, B, PhiSpec.resolvent(s)), ref, rtol=1e-12)
        np.testing.assert_allclose(reference_oracle(SparseSym.from_dense(M), B, PhiSpec.resolvent(s)), ref, rtol=1e-12)

    def test_too_large(self):
        A = SparseSym(sp.identity(50))
        B = np.eye(50)[:, :1]
        with pytest.raises(TooLarge):
            reference_oracle(A, B, PhiSpec.exponential(1.0), max_dense=10)
        with pytest.raises(TooLarge):
            reference_oracle(A, B, PhiSpec.resolvent(1.0), max_sparse=10)

    def test_cache(self):
        A = SparseSym(sp.diags(np.arange(1.0, 6.0)))
        oracle = ReferenceOracle(A, np.eye(5)[:, :2])
        first = oracle(PhiSpec.resolvent(1.0))
        assert oracle(PhiSpec.resolvent(1.0)) is first


def _green_segment(lam, c):
    # complement of [-ic, ic]: rotate onto [-1, 1] and take the exterior
    # branch of the inverse Joukowski map
    z = -1j * lam / c
    root = cmath.sqrt(z * z - 1)
    return math.log(max(abs(z + root), abs(z - root)))


class TestPotentialRate:
    def test_closed_forms(self):
        assert potential_rate(2.0, 2.0) == pytest.approx(math.log(1 + math.sqrt(2)), rel=1e-15)
        assert potential_rate(1.0, 4.0) == pytest.approx(math.log(2 + math.sqrt(5)), rel=1e-15)

    @pytest.mark.parametrize("theta, s", [(8.0, 1e-3), (8.0, 1.0), (1.0, 100.0), (3.0, 1e-8)])
    def test_matches_conformal_map(self, theta, s):
        assert potential_rate(theta, s) == pytest.approx(_green_segment(math.sqrt(s), math.sqrt(theta)), rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-3, 1e3), st.floats(1e-8, 1e4), st.floats(1.001, 10.0))
    def test_monotone(self, theta, s, factor):
        assert potential_rate(theta, s * factor) > potential_rate(theta, s) > 0

    def test_errors(self):
        with pytest.raises(InvalidSpectrum):
            potential_rate(0.0, 1.0)
        with pytest.raises(InvalidSpec):
            potential_rate(1.0, 0.0)


@pytest.mark.parametrize("p, m", [(1, 6), (2, 5), (3, 4)])
def test_radau_moment_count(p, m):
    rng = np.random.default_rng(40 + p)
    n = 100
    A = random_spd(n, rng, lo=0.1, hi=2.0)
    B, _ = qr_thin(rng.standard_normal((n, p)))
    T, _ = lanczos_run(A, B, m, reorth=True)
    R = assemble(radau_matrix(T))
    AkB = B.copy()
    Rk = np.eye(m * p)[:, :p]
    for k in range(2 * m):
        ref = B.T @ AkB
        err = norm2(Rk[:p] - ref) / norm2(ref)
        if k <= 2 * m - 2:
            assert err <= 1e-8, k
        else:
            assert err > 1e-6
        AkB = A @ AkB
        Rk = R @ Rk


def test_quadrature_set_fields():
    q = QuadratureSet(1, np.eye(1), np.eye(1), 0.0, np.eye(1))
    assert q.bar is None and q.check is None
