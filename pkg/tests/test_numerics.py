import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from mixtopo.numerics import (AmbiguousTracking, NearExceptionalPoint, ResolutionTooCoarse,
                              as_matrix, eig_biorthogonal, finite_diff, matrix_sqrt_biortho,
                              monodromy, ordered_products, path_ordered_exp, track_bands)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def complex_matrices(n):
    return st.tuples(arrays(float, (n, n), elements=finite),
                     arrays(float, (n, n), elements=finite)).map(lambda p: p[0] + 1j * p[1])


class TestAsMatrix:
    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            as_matrix(np.zeros((5, 5)))
        with pytest.raises(ValueError):
            as_matrix(np.zeros((2, 3)))

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            as_matrix(np.array([[np.nan, 0], [0, 1]]))


class TestEigBiorthogonal:
    def test_jordan_block_is_exceptional(self):
        with pytest.raises(NearExceptionalPoint):
            eig_biorthogonal(np.array([[0, 1], [0, 0]]))

    def test_ep_of_two_band_model(self):
        # sigma_x + i sigma_z is defective
        h = np.array([[1j, 1], [1, -1j]])
        with pytest.raises(NearExceptionalPoint):
            eig_biorthogonal(h)

    def test_hermitian_matches_eigh(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        h = a + a.conj().T
        es = eig_biorthogonal(h)
        assert np.allclose(np.sort(es.energies.real), np.linalg.eigvalsh(h), atol=1e-12)
        # unitary right matrix: left covectors are conjugate rows
        assert np.allclose(es.left, es.right.conj().T, atol=1e-10)

    def test_degenerate_pair_grouped(self):
        h = np.diag([1.0, 1.0, -1.0, -1.0]) + 0j
        es = eig_biorthogonal(h)
        assert es.groups == ((0, 1), (2, 3))
        assert es.labels == ("a", "b", "a", "b")

    def test_sorted_by_real_part(self):
        es = eig_biorthogonal(np.diag([2.0, -1.0 + 1j, 0.5]))
        assert np.all(np.diff(es.energies.real) >= 0)

    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from([2, 3, 4]).flatmap(complex_matrices))
    def test_biorthonormal_and_reconstructs(self, h):
        try:
            es = eig_biorthogonal(h)
        except NearExceptionalPoint:
            return
        scale = max(1.0, np.abs(h).max())
        cond = np.linalg.cond(es.right)
        assert es.biorthonormality_residual() < 1e-10 * cond
        assert np.abs(es.reconstruct() - h).max() < 1e-9 * scale * cond

    @settings(max_examples=40, deadline=None)
    @given(complex_matrices(3), st.lists(st.floats(0, 1), min_size=3, max_size=3))
    def test_sqrt_squares_back(self, h, w):
        try:
            es = eig_biorthogonal(h)
        except NearExceptionalPoint:
            return
        w = np.asarray(w)
        sq = matrix_sqrt_biortho(w, es)
        cond = np.linalg.cond(es.right)
        assert np.abs(sq @ sq - es.function(w)).max() < 1e-10 * cond ** 2

    def test_sqrt_rejects_negative(self):
        es = eig_biorthogonal(np.diag([1.0, 2.0]))
        with pytest.raises(ValueError):
            matrix_sqrt_biortho([-0.1, 1.1], es)


class TestPathOrdering:
    def test_commuting_generators_give_plain_exponential(self):
        a = np.array([np.diag([1j * k, -1j * k]) for k in np.linspace(0, 1, 20)])
        u = path_ordered_exp(a, 0.1)
        assert np.allclose(u, expm(a.sum(0) * 0.1), atol=1e-12)

    def test_order_first_sample_applied_first(self):
        x = np.array([[0, 1], [1, 0]], dtype=complex)
        z = np.array([[1, 0], [0, -1]], dtype=complex)
        u = path_ordered_exp(np.array([x, z]), 0.5)
        assert np.allclose(u, expm(0.5 * z) @ expm(0.5 * x))

    def test_cumulative_products(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(5, 2, 2)) * 1j
        p = ordered_products(a, 0.2)
        assert np.allclose(p[-1], path_ordered_exp(a, 0.2))
        assert np.allclose(p[1], expm(0.2 * a[1]) @ expm(0.2 * a[0]))

    def test_coarse_check_raises(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(8, 3, 3)) * 20
        with pytest.raises(ResolutionTooCoarse):
            path_ordered_exp(a, 0.5, check=True)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            ordered_products(np.zeros((2, 2, 2)), 0.0)


class TestTracking:
    def test_swap_detected_as_monodromy(self):
        # eigenvectors of [[0, z], [1, 0]] around z = e^{i t}: the two roots exchange
        systems = [eig_biorthogonal(np.array([[0, np.exp(1j * t)], [1, 0]]))
                   for t in np.linspace(0, 2 * np.pi, 200)]
        perms = track_bands(systems)
        assert sorted(monodromy(perms)) == [0, 1]
        assert monodromy(perms) == [1, 0]

    def test_ambiguous_jump(self):
        a = eig_biorthogonal(np.diag([1.0, -1.0]))
        b = eig_biorthogonal(np.array([[0, 1], [1, 0]], dtype=complex))
        with pytest.raises(AmbiguousTracking):
            track_bands([a, b])

    def test_empty_monodromy(self):
        assert monodromy([], 3) == [0, 1, 2]


class TestFiniteDiff:
    def test_quadratic_exact(self):
        d = finite_diff(lambda x: x[0] ** 2 + 3 * x[1], np.array([1.5, 0.0]), 0, 1e-3)
        assert d == pytest.approx(3.0, abs=1e-9)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            finite_diff(lambda x: x, np.zeros(1), 0, 0.0)
