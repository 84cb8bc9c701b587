import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from scipy.linalg import expm

from dqdsim.analytic import (
    driven_steady_oracle,
    driven_steady_printed,
    eigenvalues,
    eval_populations,
    printed_b_constant,
    undriven_solution,
    undriven_steady,
)
from dqdsim.core import DensityMatrix
from dqdsim.errors import DomainError, UndefinedSteadyStateError
from dqdsim.model import REFERENCE_RATES, RateParams, build_undriven, population_rate_matrix
from dqdsim.propagator import integrate

from strategies import rate_params


def exact_driven_rho00(r: RateParams) -> float:
    """Stationary rho00 of the driven generator, solved symbolically offline.

    (l(l+m+n) + 4p^2) / ((l+2m)(l+m+n) + 12p^2); rho11 = rho22 = (1 - rho00)/2.
    """
    s = r.l + r.m + r.n
    return (r.l * s + 4 * r.p**2) / ((r.l + 2 * r.m) * s + 12 * r.p**2)


def expm_populations(rates, t):
    """Populations from |0> via the matrix exponential of the rate matrix."""
    return expm(population_rate_matrix(rates) * t) @ np.array([1.0, 0.0, 0.0])


class TestEigenvalues:
    def test_reference(self):
        e = eigenvalues(REFERENCE_RATES)
        numeric = np.sort(np.linalg.eigvals(population_rate_matrix(REFERENCE_RATES)).real)
        assert e.lambda0 == pytest.approx(numeric[0], abs=1e-12)
        assert e.lambda1 == pytest.approx(numeric[1], abs=1e-12)
        assert e.lambda0 == pytest.approx(-1.7403, abs=5e-5)
        assert e.lambda1 == pytest.approx(-0.4597, abs=5e-5)

    def test_no_tunneling(self):
        e = eigenvalues(RateParams(l=0.8, m=0.4, n=0.0))
        assert e.lambda0 == pytest.approx(-1.2, abs=1e-15)
        assert e.lambda1 == 0.0

    def test_zero_temperature_no_tunneling(self):
        e = eigenvalues(RateParams(l=0.8, m=0.0, n=0.0))
        assert (e.lambda0, e.lambda1) == (-0.8, 0.0)

    def test_requires_positive_l(self):
        with pytest.raises(DomainError):
            eigenvalues(SimpleNamespace(l=0.0, m=0.0, n=1.0))

    @settings(max_examples=300)
    @given(rate_params())
    def test_vieta_and_ordering(self, r):
        e = eigenvalues(r)
        assert e.lambda0 <= e.lambda1 <= 0
        assert e.lambda0 + e.lambda1 == pytest.approx(-(r.l + r.m + 2 * r.n), abs=1e-12)
        assert e.lambda0 * e.lambda1 == pytest.approx(r.l * r.n + 2 * r.m * r.n, abs=1e-12)

    @settings(max_examples=200)
    @given(rate_params())
    def test_match_rate_matrix_spectrum(self, r):
        e = eigenvalues(r)
        numeric = np.sort(np.linalg.eigvals(population_rate_matrix(r)).real)
        np.testing.assert_allclose(np.sort([e.lambda0, e.lambda1, 0.0]), numeric, atol=1e-12)


class TestUndrivenSolution:
    def test_initial_condition(self, ref_rates):
        sol = undriven_solution(ref_rates)
        assert sol.a_const + sol.b_const + sol.c_const == pytest.approx(1.0, abs=1e-12)
        assert eval_populations(sol, 0.0) == pytest.approx((1.0, 0.0, 0.0), abs=1e-10)

    def test_reference_constants(self, ref_rates):
        sol = undriven_solution(ref_rates)
        assert sol.a_const == 0.5
        # B = -m(l + 2(lambda1 + m)) / ((2m+l)(lambda0 - lambda1)), C likewise with lambda0
        lam0, lam1 = sol.eigs.lambda0, sol.eigs.lambda1
        assert sol.c_const == pytest.approx(0.4 * (0.8 + 2 * (lam0 + 0.4)) / (1.6 * (lam0 - lam1)), rel=1e-14)
        assert sol.b_const == pytest.approx(0.13286967858354543, rel=1e-12)
        assert sol.c_const == pytest.approx(0.3671303214164546, rel=1e-12)

    def test_printed_b_breaks_initial_condition(self, ref_rates):
        sol = undriven_solution(ref_rates)
        b = printed_b_constant(ref_rates)
        assert abs(sol.a_const + b + sol.c_const - 1.0) > 0.5

    def test_stationary_limit(self, ref_rates):
        pops = eval_populations(undriven_solution(ref_rates), 500.0)
        assert pops == pytest.approx((0.5, 0.25, 0.25), abs=1e-12)

    def test_matches_matrix_exponential(self, ref_rates):
        sol = undriven_solution(ref_rates)
        for t in (0.1, 1.0, 5.0, 12.5, 30.0):
            np.testing.assert_allclose(eval_populations(sol, t), expm_populations(ref_rates, t), atol=1e-12)

    def test_matches_integration_at_t5(self, ref_rates):
        traj = integrate(build_undriven(ref_rates), DensityMatrix.ground(), 5.0)
        np.testing.assert_allclose(eval_populations(undriven_solution(ref_rates), 5.0), traj.populations[-1], atol=1e-8)

    def test_level_one_leads_level_two(self, ref_rates):
        t = np.linspace(0.0, 40.0, 4001)
        pops = eval_populations(undriven_solution(ref_rates), t)
        assert np.all(pops.rho11 >= pops.rho22 - 1e-15)

    def test_array_input_and_sum(self, ref_rates):
        t = np.linspace(0, 10, 11)
        pops = eval_populations(undriven_solution(ref_rates), t)
        np.testing.assert_array_equal(pops.rho00 + pops.rho11 + pops.rho22, np.ones_like(t))
        for comp in pops:
            assert np.all((comp >= -1e-10) & (comp <= 1 + 1e-10))

    def test_negative_time(self, ref_rates):
        with pytest.raises(DomainError):
            eval_populations(undriven_solution(ref_rates), -1.0)

    @settings(max_examples=50, deadline=None)
    @given(rate_params(high=2.0, min_n=1e-3))
    def test_solves_rate_equations(self, r):
        sol = undriven_solution(r)
        mat = population_rate_matrix(r)
        h = 1e-5
        for t in (0.3, 2.0, 7.0):
            deriv = (np.array(eval_populations(sol, t + h)) - np.array(eval_populations(sol, t - h))) / (2 * h)
            np.testing.assert_allclose(deriv, mat @ np.array(eval_populations(sol, t)), atol=1e-6)


class TestUndrivenSteady:
    def test_reference(self):
        assert undriven_steady(RateParams(l=0.8, m=0.4)) == (0.5, 0.25, 0.25)

    def test_zero_temperature(self):
        assert undriven_steady(RateParams(l=0.8, m=0.0)) == (1.0, 0.0, 0.0)

    def test_infinite_temperature(self):
        assert undriven_steady(RateParams(l=0.8, m=0.8)) == pytest.approx((1 / 3,) * 3, abs=1e-15)

    def test_undefined(self):
        with pytest.raises(UndefinedSteadyStateError):
            undriven_steady(SimpleNamespace(l=0.0, m=0.0))

    @given(rate_params())
    def test_fixed_point_independent_of_n(self, r):
        ss = np.array(undriven_steady(r))
        assert np.max(np.abs(population_rate_matrix(r) @ ss)) <= 1e-12
        assert ss[1] == ss[2]
        assert math.fsum(ss) == pytest.approx(1.0, abs=1e-15)


class TestDrivenSteady:
    def test_printed_p0_inconsistency(self, ref_rates):
        rep = driven_steady_printed(ref_rates)
        assert rep.values.rho00 == pytest.approx(0.8 / 2.0)
        assert rep.undriven_reference == 0.5
        assert "p0-inconsistent" in rep.flags
        assert rep.label == "as-printed"

    @pytest.mark.parametrize("p", [0.4, 0.8, 8.0])
    def test_printed_not_normalized(self, ref_rates, p):
        rep = driven_steady_printed(ref_rates.with_p(p))
        assert "trace-not-normalized" in rep.flags
        assert rep.trace_defect == pytest.approx(1 - 3 * rep.values.rho00)

    def test_printed_limit(self, ref_rates):
        rep = driven_steady_printed(ref_rates.with_p(1e4))
        assert max(abs(v - 1 / 3) for v in rep.values) <= 1e-6

    def test_printed_domain(self):
        with pytest.raises(DomainError):
            driven_steady_printed(RateParams(l=1.0, m=0.0, n=0.0, p=1.0))

    def test_oracle_p0(self, ref_rates):
        assert driven_steady_oracle(ref_rates) == pytest.approx((0.5, 0.25, 0.25), abs=1e-10)

    def test_oracle_strong_drive(self, ref_rates):
        pops = driven_steady_oracle(ref_rates.with_p(8.0))
        assert max(abs(v - 1 / 3) for v in pops) <= 0.02

    def test_oracle_weak_drive(self, ref_rates):
        pops = driven_steady_oracle(ref_rates.with_p(0.4))
        assert 1 / 3 < pops.rho00 < 0.5
        assert pops.rho00 == pytest.approx(25 / 58, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(rate_params(high=5.0, driven=True, min_n=1e-3))
    def test_oracle_matches_exact_form(self, r):
        pops = driven_steady_oracle(r)
        exact = exact_driven_rho00(r)
        assert pops.rho00 == pytest.approx(exact, abs=1e-10)
        assert pops.rho11 == pytest.approx(pops.rho22, abs=1e-10)
        assert math.fsum(pops) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(rate_params(high=2.0, min_n=1e-3))
    def test_oracle_p0_equals_undriven(self, r):
        np.testing.assert_allclose(driven_steady_oracle(r), undriven_steady(r), atol=1e-10)

    def test_never_below_one_third(self, ref_rates):
        for p in (0.01, 0.4, 1.6, 8.0, 80.0, 800.0):
            assert driven_steady_oracle(ref_rates.with_p(p)).rho00 >= 1 / 3 - 1e-9

    def test_printed_and_oracle_agree_only_at_strong_drive(self, ref_rates):
        strong = ref_rates.with_p(10 * ref_rates.l)
        printed = driven_steady_printed(strong).values
        assert np.max(np.abs(np.array(printed) - np.array(driven_steady_oracle(strong)))) <= 0.05
        weak = ref_rates.with_p(0.4)
        assert abs(driven_steady_printed(weak).values.rho00 - driven_steady_oracle(weak).rho00) > 0.01
