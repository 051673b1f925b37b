import json

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

import romkit
from romkit.errors import ConfigurationError
from romkit.problem import (ParameterDomain, eval_thetas, load_external,
                            make_thermal_block, sample_parameters)


def test_domain_validation():
    with pytest.raises(ConfigurationError, match="empty interval"):
        ParameterDomain(intervals=((2.0, 1.0),), scales=("lin",))
    with pytest.raises(ConfigurationError, match="log scale"):
        ParameterDomain(intervals=((0.0, 1.0),), scales=("log",))
    with pytest.raises(ConfigurationError, match="unknown scale"):
        ParameterDomain(intervals=((0.0, 1.0),), scales=("cubic",))


def test_domain_midpoint_scales():
    dom = ParameterDomain(intervals=((0.0, 2.0), (0.01, 100.0)),
                          scales=("lin", "log"))
    np.testing.assert_allclose(dom.midpoint(), [1.0, 1.0])


def test_thermal_block_shape():
    problem = make_thermal_block(8, 2, 0.1, 10.0)
    assert problem.Q_a == 4
    assert problem.Q_f == 1
    assert problem.p == 4
    assert problem.n_free == 9 * 8
    assert problem.parametrically_coercive
    np.testing.assert_array_equal(problem.mu_bar, np.ones(4))
    np.testing.assert_allclose(problem.theta_a_bar, np.ones(4))


def test_thermal_block_rejects_bad_range():
    with pytest.raises(ConfigurationError):
        make_thermal_block(8, 2, 0.0, 10.0)
    with pytest.raises(ConfigurationError):
        make_thermal_block(8, 2, 2.0, 1.0)


def test_eval_thetas_identity_coefficients(b2_small):
    mu = np.array([0.3, 1.0, 2.0, 5.0])
    theta_a, theta_f = eval_thetas(b2_small, mu)
    np.testing.assert_array_equal(theta_a, mu)
    np.testing.assert_array_equal(theta_f, [1.0])


def test_eval_thetas_warns_out_of_domain(b2_small):
    with pytest.warns(UserWarning, match="outside"):
        eval_thetas(b2_small, [20.0, 1.0, 1.0, 1.0])


def test_grid_sampling_counts_and_order(b2_small):
    points = sample_parameters(b2_small.domain, 16, "grid")
    assert len(points) == 16
    arr = np.array(points)
    # lexicographic: last axis varies fastest
    assert arr[0][3] < arr[1][3]
    np.testing.assert_allclose(arr[0], [0.1] * 4)
    np.testing.assert_allclose(arr[-1], [10.0] * 4)
    assert all(b2_small.domain.contains(mu) for mu in points)


def test_grid_sampling_log_spacing():
    dom = ParameterDomain(intervals=((0.1, 10.0),), scales=("log",))
    points = np.array(sample_parameters(dom, 3, "grid")).ravel()
    np.testing.assert_allclose(points, [0.1, 1.0, 10.0], rtol=1e-12)


def test_random_sampling_reproducible(b2_small):
    a = sample_parameters(b2_small.domain, 10, "random", seed=3)
    b = sample_parameters(b2_small.domain, 10, "random", seed=3)
    c = sample_parameters(b2_small.domain, 10, "random", seed=4)
    np.testing.assert_array_equal(np.array(a), np.array(b))
    assert not np.array_equal(np.array(a), np.array(c))
    assert all(b2_small.domain.contains(mu) for mu in a)


def test_sampling_rejects_bad_input(b2_small):
    with pytest.raises(ConfigurationError):
        sample_parameters(b2_small.domain, 0, "grid")
    with pytest.raises(ConfigurationError, match="strategy"):
        sample_parameters(b2_small.domain, 4, "sobol")


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=40))
def test_random_sampling_stays_inside(count):
    dom = ParameterDomain(intervals=((0.5, 2.0), (1e-3, 1e3)),
                          scales=("lin", "log"))
    points = sample_parameters(dom, count, "random", seed=count)
    assert len(points) == count
    assert all(dom.contains(mu) for mu in points)


def _write_manifest(tmp_path, problem, with_x=True, corrupt=None):
    spec = {
        "p": problem.p,
        "domain": [[lo, hi, scale] for (lo, hi), scale in
                   zip(problem.domain.intervals, problem.domain.scales)],
        "mu_bar": problem.mu_bar.tolist(),
        "theta_a": [t.text for t in problem.theta_a],
        "theta_f": [t.text for t in problem.theta_f],
        "A": [],
        "f": [],
    }
    for q, A in enumerate(problem.A_q):
        name = f"A{q}.mtx"
        scipy.io.mmwrite(str(tmp_path / name), A.tocoo())
        spec["A"].append(name)
    for q, f in enumerate(problem.f_q):
        name = f"f{q}.mtx"
        scipy.io.mmwrite(str(tmp_path / name), f.reshape(-1, 1))
        spec["f"].append(name)
    if with_x:
        scipy.io.mmwrite(str(tmp_path / "X.mtx"), problem.X.tocoo())
        spec["X"] = "X.mtx"
    if corrupt == "asymmetric":
        A = problem.A_q[0].toarray()
        A[0, 1] += 1.0
        scipy.io.mmwrite(str(tmp_path / "A0.mtx"), sp.coo_matrix(A))
    if corrupt == "dimension":
        scipy.io.mmwrite(str(tmp_path / "f0.mtx"),
                         np.ones((problem.n_free + 1, 1)))
    if corrupt == "missing":
        (tmp_path / "A0.mtx").unlink()
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(spec, indent=2))
    return path


def test_external_round_trip(tmp_path, b2_small):
    path = _write_manifest(tmp_path, b2_small)
    loaded = load_external(path)
    assert loaded.Q_a == b2_small.Q_a
    assert loaded.parametrically_coercive
    mu = [0.5, 1.0, 2.0, 4.0]
    s_ref = romkit.solve_fom(b2_small, mu).s
    s_loaded = romkit.solve_fom(loaded, mu).s
    assert abs(s_loaded - s_ref) <= 1e-10 * abs(s_ref)


def test_external_builds_x_from_mu_bar(tmp_path, b2_small):
    path = _write_manifest(tmp_path, b2_small, with_x=False)
    loaded = load_external(path)
    diff = abs(loaded.X - b2_small.X)
    assert (diff.max() if diff.nnz else 0.0) <= 1e-12


def test_external_rejects_asymmetric(tmp_path, b2_small):
    path = _write_manifest(tmp_path, b2_small, corrupt="asymmetric")
    with pytest.raises(ConfigurationError, match="symmetric"):
        load_external(path)


def test_external_rejects_dimension_mismatch(tmp_path, b2_small):
    path = _write_manifest(tmp_path, b2_small, corrupt="dimension")
    with pytest.raises(ConfigurationError, match="dimension mismatch"):
        load_external(path)


def test_external_rejects_missing_file(tmp_path, b2_small):
    path = _write_manifest(tmp_path, b2_small, corrupt="missing")
    with pytest.raises(ConfigurationError, match="missing matrix file"):
        load_external(path)


def test_external_flags_non_coercive_thetas(tmp_path, b2_small):
    path = _write_manifest(tmp_path, b2_small)
    spec = json.loads(path.read_text())
    spec["theta_a"][0] = "mu[0] - 1.0"  # changes sign on the domain
    path.write_text(json.dumps(spec))
    loaded = load_external(path)
    assert not loaded.parametrically_coercive
