import numpy as np
import pytest

import romkit
from romkit.errors import NumericalError
from romkit.truth import (DESK_SCALE_LIMIT, assemble_at, mu_norm, solve_fom,
                          stability_constants, v_norm)


def test_one_block_compliance_is_reciprocal(b1_small):
    # u(x, y) = (1 - y) / mu is nodal-exact, so s_delta(mu) = 1 / mu
    for mu in (0.25, 1.0, 4.0):
        sol = solve_fom(b1_small, [mu])
        assert abs(sol.s - 1.0 / mu) <= 1e-12 / mu
        assert sol.solve_residual <= 1e-12


def test_solution_is_linear_profile(b1_small):
    sol = solve_fom(b1_small, [1.0])
    # reconstruct nodal y-coordinates from the free dof layout: n=8 mesh,
    # rows y = 0..7/8 are free, so u = 1 - y row by row
    n = 8
    expected = np.repeat(1.0 - np.arange(n) / n, n + 1)
    np.testing.assert_allclose(sol.u, expected, atol=1e-12)


def test_assemble_at_is_affine(b2_small):
    mu = np.array([0.5, 1.0, 2.0, 4.0])
    A, f = assemble_at(b2_small, mu)
    manual = sum(m * Aq for m, Aq in zip(mu, b2_small.A_q))
    assert abs(A - manual).max() <= 1e-15
    np.testing.assert_array_equal(f, b2_small.f_q[0])


def test_homogeneity_of_compliance(b2_small):
    # a(.,.;c*mu) = c*a(.,.;mu) and f fixed implies s(c*mu) = s(mu)/c
    mu = np.array([0.5, 1.0, 2.0, 4.0])
    s1 = solve_fom(b2_small, mu).s
    s2 = solve_fom(b2_small, 2.0 * mu).s
    assert abs(s2 - 0.5 * s1) <= 1e-12 * abs(s1)


def test_norms_at_mu_bar_coincide(b2_small):
    rng = np.random.default_rng(0)
    u = rng.standard_normal(b2_small.n_free)
    assert abs(v_norm(b2_small, u) -
               mu_norm(b2_small, u, b2_small.mu_bar)) <= 1e-12 * v_norm(b2_small, u)


def test_compliance_equals_energy_norm_squared(b2_small):
    mu = [0.3, 2.0, 0.7, 5.0]
    sol = solve_fom(b2_small, mu)
    assert abs(sol.s - mu_norm(b2_small, sol.u, mu) ** 2) <= 1e-11 * abs(sol.s)


def test_stability_constants_at_mu_bar(b2_small):
    const = stability_constants(b2_small, b2_small.mu_bar)
    assert abs(const.alpha_delta - 1.0) <= 1e-10
    assert abs(const.gamma_delta - 1.0) <= 1e-10


def test_stability_constants_min_max_theta_sandwich(b2_small):
    mu = np.array([0.2, 1.0, 3.0, 8.0])
    const = stability_constants(b2_small, mu)
    assert mu.min() <= const.alpha_delta * (1 + 1e-10)
    assert const.alpha_delta <= const.gamma_delta
    assert const.gamma_delta <= mu.max() * (1 + 1e-10)


def test_one_block_stability_exact(b1_small):
    const = stability_constants(b1_small, [3.0])
    assert abs(const.alpha_delta - 3.0) <= 1e-10
    assert abs(const.gamma_delta - 3.0) <= 1e-10


def test_stability_constants_refuse_large_systems(b2_small):
    big = romkit.make_thermal_block(80, 2, 0.1, 10.0)
    assert big.n_free > DESK_SCALE_LIMIT
    with pytest.raises(NumericalError, match="desk scale|refuses"):
        stability_constants(big, big.mu_bar)


def test_pcg_reports_non_spd(b2_small):
    bad = romkit.make_thermal_block(4, 1, 0.1, 10.0)
    bad.A_q[0] = -bad.A_q[0]
    with pytest.raises(NumericalError, match="mu="):
        solve_fom(bad, [1.0])
