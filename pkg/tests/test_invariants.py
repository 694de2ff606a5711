import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixtopo.geometry import connection_generic
from mixtopo.invariants import (S3_BOUNDS, S4_BOUNDS, SPHERE2D_BOUNDS, QuadratureGrid,
                                berry_second_chern, bures_metric, bures_metric_batch,
                                dd_invariant, first_chern_4d, nt_chern_2d, second_chern,
                                second_chern_4d, second_chern_reduced, thermal_chern_2d,
                                three_form_density, trace_component_checks)
from mixtopo.models import ModelSpec, branch_energy, hamiltonian
from mixtopo.numerics import NearExceptionalPoint
from mixtopo.thermal import three_form_closed, three_form_profile

SPHERE = ModelSpec("NH2", "Sphere2D", gamma=1.0, R=2.0)
HERM3 = ModelSpec("Hermitian3", "S3", R=1.0)
NH3 = ModelSpec("NH3", "S3", gamma=1.0, R=2.0)
S4 = ModelSpec("NH4", "S4", gamma=1.0, R=2.0)

G2 = QuadratureGrid((80, 160), SPHERE2D_BOUNDS)
G3 = QuadratureGrid((24, 24, 24), S3_BOUNDS)
G4 = QuadratureGrid((16, 16, 8, 8), S4_BOUNDS)


class TestQuadratureGrid:
    def test_minimum_count(self):
        with pytest.raises(ValueError):
            QuadratureGrid((4, 16), SPHERE2D_BOUNDS)

    def test_simpson_needs_even(self):
        with pytest.raises(ValueError):
            QuadratureGrid((9, 16), SPHERE2D_BOUNDS, rule="simpson")

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            QuadratureGrid((8, 8), SPHERE2D_BOUNDS, rule="gauss")

    def test_midpoint_stays_off_poles(self):
        x, _ = QuadratureGrid((8, 8), SPHERE2D_BOUNDS).axis(0)
        assert x.min() > 0 and x.max() < np.pi

    @pytest.mark.parametrize("rule", ["midpoint", "trapezoid", "simpson"])
    def test_sphere_area(self, rule):
        g = QuadratureGrid((64, 64), SPHERE2D_BOUNDS, rule=rule)
        total = sum(np.sum(w * np.sin(c[0])) for c, w in g.chunks(1000))
        assert total == pytest.approx(4 * np.pi, rel=1e-3)

    def test_simpson_exact_on_cubics(self):
        g = QuadratureGrid((8,), ((0.0, 2.0),), rule="simpson")
        x, w = g.axis(0)
        assert np.sum(w * (x ** 3 - x)) == pytest.approx(2.0, abs=1e-13)

    def test_convergence_orders(self):
        def err(n, rule):
            x, w = QuadratureGrid((n,), ((0.0, 1.0),), rule=rule).axis(0)
            return abs(np.sum(w * np.exp(x)) - (np.e - 1))
        assert err(32, "trapezoid") < err(16, "trapezoid") / 3.9
        assert err(32, "simpson") < err(16, "simpson") / 15

    @settings(max_examples=20, deadline=None)
    @given(st.integers(8, 30), st.integers(8, 30), st.integers(1, 500))
    def test_chunks_cover_grid(self, n, m, size):
        g = QuadratureGrid((n, m), SPHERE2D_BOUNDS)
        blocks = list(g.chunks(size))
        assert sum(len(w) for _, w in blocks) == g.size
        assert sum(w.sum() for _, w in blocks) == pytest.approx(2 * np.pi ** 2)

    def test_coarsened(self):
        assert QuadratureGrid((200, 400), SPHERE2D_BOUNDS).coarsened().dims == (100, 200)


def _oracle_nt_chern(T, nodes=120):
    """Independent route: generic connection, finite-difference curvature at phi = 0,
    integrated over theta (the integrand does not depend on phi)."""
    h = 1e-4
    total = 0j
    for t in (np.arange(nodes) + 0.5) * np.pi / nodes:
        a = connection_generic(SPHERE, [t, 0.0], T)
        a_tp = connection_generic(SPHERE, [t + h, 0.0], T)[1]
        a_tm = connection_generic(SPHERE, [t - h, 0.0], T)[1]
        a_pp = connection_generic(SPHERE, [t, h], T)[0]
        a_pm = connection_generic(SPHERE, [t, -h], T)[0]
        f = (a_tp - a_tm) / (2 * h) - (a_pp - a_pm) / (2 * h) + a[0] @ a[1] - a[1] @ a[0]
        # two-band closed form with the upper-band energy and |E| in the weights
        e1 = branch_energy(SPHERE, [np.array([t]), np.zeros(1)])[0]
        rho = 0.5 * (np.eye(2) - np.tanh(abs(e1) / T) * hamiltonian(SPHERE, [t, 0.0]) / e1)
        total += np.trace(rho @ f)
    return float((1j * total * np.pi / nodes).real)


class TestChern2D:
    def test_topological_radius(self):
        res = thermal_chern_2d(SPHERE, 2.0, 0.5)
        assert res.value == pytest.approx(1.0, abs=1e-3)
        assert res.refinement_delta < 1e-3

    def test_trivial_radius(self):
        assert thermal_chern_2d(SPHERE, 0.5, 0.5, G2).value == pytest.approx(0.0, abs=1e-10)

    def test_hermitian_monopole(self):
        res = thermal_chern_2d(SPHERE.replace(gamma=0.0), 2.0, 0.01, G2)
        assert res.value == pytest.approx(1.0, abs=1e-3)

    def test_exceptional_radius_rejected(self):
        with pytest.raises(NearExceptionalPoint):
            thermal_chern_2d(SPHERE, 1.0, 0.5, G2)

    def test_weighted_independent_of_temperature(self):
        vals = [thermal_chern_2d(SPHERE, 2.0, T, G2, refine=False).value for T in (0.2, 1.0, 3.0)]
        assert np.ptp(vals) < 1e-10

    def test_nt_low_temperature(self):
        assert nt_chern_2d(SPHERE, 2.0, 0.01, G2).value == pytest.approx(1.0, abs=1e-3)

    def test_nt_decreases(self):
        vals = [nt_chern_2d(SPHERE, 2.0, T, G2, refine=False).value for T in (0.5, 1.0, 2.0, 5.0)]
        assert np.all(np.diff(vals) < 0)

    def test_nt_matches_independent_route(self):
        # the oracle uses the same 1D midpoint nodes as the 80-point theta axis
        oracle = _oracle_nt_chern(0.5, nodes=80)
        assert nt_chern_2d(SPHERE, 2.0, 0.5, G2, refine=False).value == pytest.approx(oracle, abs=1e-5)

    def test_thread_count_does_not_change_bits(self):
        g = QuadratureGrid((64, 128), SPHERE2D_BOUNDS)
        a = thermal_chern_2d(SPHERE, 2.0, 0.7, g, refine=False, threads=1).value
        b = thermal_chern_2d(SPHERE, 2.0, 0.7, g, refine=False, threads=3).value
        assert a == b


def _pure_state_metric(spec, x, h=1e-5):
    """1/2 Tr(dP dP) for the ground-state projector."""
    def proj(y):
        w, v = np.linalg.eigh(hamiltonian(spec, y))
        return np.outer(v[:, 0], v[:, 0].conj())
    d = []
    for mu in range(3):
        e = np.zeros(3)
        e[mu] = h
        d.append((proj(x + e) - proj(x - e)) / (2 * h))
    return np.array([[0.5 * np.trace(a @ b).real for b in d] for a in d])


class TestBures:
    def test_symmetric(self):
        rng = np.random.default_rng(0)
        for spec in (HERM3, NH3):
            for _ in range(50):
                x = rng.uniform([0.05, 0, 0], [1.5, 6.2, 6.2])
                g = bures_metric_batch(spec, [np.array([v]) for v in x], 0.7)[..., 0].real
                assert np.abs(g - g.T).max() < 1e-10

    def test_hermitian_positive_semidefinite(self):
        rng = np.random.default_rng(1)
        x = [rng.uniform(0.05, 1.5, 40), rng.uniform(0, 6, 40), rng.uniform(0, 6, 40)]
        g = bures_metric_batch(HERM3, x, 0.5).real
        eig = np.linalg.eigvalsh(np.moveaxis(g, -1, 0))
        assert eig.min() > -1e-10

    def test_infinite_temperature(self):
        assert np.abs(bures_metric(HERM3, [0.4, 1.0, 2.0], 1e8)).max() < 1e-12

    def test_pure_state_limit(self):
        x = np.array([0.6, 1.3, 0.4])
        assert np.allclose(bures_metric(HERM3, x, 0.01), _pure_state_metric(HERM3, x), atol=1e-7)

    @pytest.mark.parametrize("spec", [HERM3, NH3])
    def test_batch_matches_finite_difference(self, spec):
        x = np.array([0.6, 1.3, 0.4])
        fd = bures_metric(spec, x, 0.8)
        batch = bures_metric_batch(spec, [np.array([v]) for v in x], 0.8)[..., 0].real
        assert np.allclose(fd, batch, atol=1e-7)

    def test_hermitian_three_form_closed(self):
        rng = np.random.default_rng(4)
        x = [rng.uniform(0.05, 1.5, 30), rng.uniform(0, 6, 30), rng.uniform(0, 6, 30)]
        for T in (0.3, 1.0, 2.5):
            mb, neg = three_form_density(bures_metric_batch(HERM3, x, T))
            assert neg == 0
            assert np.allclose(mb, three_form_closed(1.0, T, x[0]), atol=1e-10)


class TestDD:
    @pytest.mark.parametrize("T", [0.2, 1.0, 2.0])
    def test_hermitian_weighted_is_one(self, T):
        assert dd_invariant(HERM3, 1.0, T, G3, refine=False).value == pytest.approx(1.0, abs=2e-3)

    @pytest.mark.parametrize("T", [0.5, 1.5])
    def test_hermitian_unweighted_closed_form(self, T):
        res = dd_invariant(HERM3, 1.0, T, G3, weighted=False, refine=False)
        assert res.value == pytest.approx(2 * three_form_profile(1.0 / T), rel=2e-3)

    def test_nonhermitian_unweighted_decreases(self):
        vals = [dd_invariant(NH3, 2.0, T, G3, weighted=False, refine=False).value
                for T in (0.1, 0.5, 1.0, 2.0)]
        assert np.all(np.diff(vals) < 0)

    def test_requires_three_level(self):
        with pytest.raises(ValueError):
            dd_invariant(SPHERE, 1.0, 0.5, G3)


class TestFourSphere:
    @pytest.mark.parametrize("R,gamma", [(2.0, 1.0), (0.5, 1.0), (2.0, 0.0)])
    def test_first_chern_vanishes(self, R, gamma):
        spec = S4.replace(gamma=gamma)
        for weighted in (True, False):
            res = first_chern_4d(spec, R, 0.5, G4, weighted=weighted)
            assert res.value < 1e-6
            assert len(res.extras["planes"]) == 6

    def test_second_chern_topological(self):
        res = second_chern_4d(S4, 2.0, 0.5, QuadratureGrid((32, 32, 8, 8), S4_BOUNDS))
        assert res.value == pytest.approx(2.0, abs=1e-3)

    def test_full_sum_equals_symmetry_reduction(self):
        a = second_chern_4d(S4, 2.0, 0.8, G4).value
        b = second_chern_4d(S4, 2.0, 0.8, G4, full=True).value
        assert a == pytest.approx(b, abs=1e-10)

    def test_second_chern_trivial(self):
        assert second_chern_4d(S4, 0.5, 0.5, G4).value == pytest.approx(0.0, abs=1e-10)

    def test_reduced_weighted_matches_4d(self):
        red = second_chern_reduced(S4, 2.0, 0.5, weighted=True).value
        assert red == pytest.approx(2.0, abs=1e-8)

    def test_unweighted_oracle_agreement(self):
        res = second_chern(S4, 2.0, 0.7, weighted=False)
        assert res.extras["oracle_delta"] < 1e-2

    def test_unweighted_decreases_and_low_temperature_limit(self):
        vals = [second_chern_reduced(S4, 2.0, T).value for T in (0.01, 0.5, 1.0, 2.0)]
        assert np.all(np.diff(vals) < 0)
        assert vals[0] == pytest.approx(second_chern_reduced(S4, 2.0, 0.01, weighted=True).value,
                                        abs=1e-2)

    def test_exceptional_radius_rejected(self):
        with pytest.raises(NearExceptionalPoint):
            second_chern_reduced(S4, 1.0, 0.5)

    def test_trace_displays(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            x = rng.uniform([0.1, 0.1, 0, 0], [3.0, 1.4, 6.2, 6.2])
            rep = trace_component_checks(S4, x, 0.5)
            assert rep["max_relative"] < 1e-4
            assert rep["ratio_2_1"] == pytest.approx(-rep["f"] / 2, abs=1e-10)

    def test_trace_displays_vanish_at_pole(self):
        rep = trace_component_checks(S4, [1e-3, 0.4, 1.0, 2.0], 0.5)
        assert np.abs(rep["traces"]).max() < 1e-8

    def test_berry_yang_monopole(self):
        assert berry_second_chern(S4.replace(gamma=0.0), 2.0).value == pytest.approx(1.0, abs=1e-2)

    def test_hermitian_uhlmann_is_twice_berry(self):
        # rho = P/2 carries half the trace of the band projector, while the
        # integrand counts all 24 orderings instead of the 6 of the Berry form
        spec = S4.replace(gamma=0.0)
        uhl = second_chern_4d(spec, 2.0, 0.01, QuadratureGrid((32, 32, 8, 8), S4_BOUNDS)).value
        berry = berry_second_chern(spec, 2.0).value
        assert uhl == pytest.approx(2 * berry, abs=1e-2)
