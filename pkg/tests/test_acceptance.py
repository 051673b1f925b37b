"""End-to-end acceptance gate.

Ten criteria at the benchmark configuration (thermal block B=2, mesh n=32,
mu in [0.5, 2]^4 unless stated otherwise). Each test prints exactly one
pass/fail line; run with ``pytest -s tests/test_acceptance.py`` to see them
on success.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest
import scipy.sparse.linalg as spla

import romkit
from romkit.cli import main as cli_main
from romkit.truth import assemble_at


@contextmanager
def criterion(num, label):
    try:
        yield
    except Exception:
        print(f"[FAIL] criterion {num}: {label}")
        raise
    print(f"[PASS] criterion {num}: {label}")


@pytest.fixture(scope="module")
def prob32():
    return romkit.make_thermal_block(32, 2, 0.5, 2.0)


@pytest.fixture(scope="module")
def pod_stack(prob32):
    points = romkit.sample_parameters(prob32.domain, 49, "grid")
    snapshots = romkit.collect_snapshots(prob32, points)
    basis = romkit.pod_basis(snapshots, energy_tol=1e-10)
    model = romkit.project(prob32, basis)
    data = romkit.riesz_offline(prob32, basis)
    return snapshots, basis, model, data


@pytest.fixture(scope="module")
def greedy_stack(prob32):
    training = romkit.sample_parameters(prob32.domain, 500, "random", seed=7)
    basis, history, model, data = romkit.greedy_build(
        prob32, training, tol=1e-6, n_max=30)
    return training, basis, history, model, data


@pytest.fixture(scope="module")
def audit_points(prob32):
    """20 seeded test parameters with their exact stability constants."""
    mus = romkit.sample_parameters(prob32.domain, 20, "random", seed=101)
    constants = [romkit.stability_constants(prob32, mu) for mu in mus]
    return mus, constants


def test_criterion_1_analytic_regression():
    with criterion(1, "B=1 analytic law s(mu) = 1/mu, truth and RB"):
        problem = romkit.make_thermal_block(32, 1, 0.1, 10.0)
        basis, history, model, _ = romkit.greedy_build(
            problem, [np.array([1.0])], tol=1e-10, n_max=1)
        assert basis.N == 1
        for mu in romkit.sample_parameters(problem.domain, 25, "grid"):
            exact = 1.0 / mu[0]
            s_delta = romkit.solve_fom(problem, mu).s
            s_rb = romkit.rb_solve(model, mu).s_rb
            assert abs(s_delta - exact) <= 1e-8 * exact
            assert abs(s_rb - exact) <= 1e-8 * exact


def test_criterion_2_pod_identity(prob32, pod_stack):
    with criterion(2, "POD neglected-eigenvalue and trace identities"):
        snapshots, basis, _, _ = pod_stack
        w = basis.provenance.eigenvalues
        total = w.sum()
        for N in range(1, basis.provenance.rank + 1):
            sub = romkit.pod_basis(snapshots, n_modes=N)
            errors = []
            for psi in snapshots.snapshots:
                _, proj = romkit.project_onto_basis(sub, psi)
                errors.append(romkit.v_norm(prob32, psi - proj) ** 2)
            assert abs(np.mean(errors) - w[N:].sum()) <= 1e-9 * total
        C = romkit.correlation_matrix(snapshots)
        mean_energy = np.mean([romkit.v_norm(prob32, psi) ** 2
                               for psi in snapshots.snapshots])
        assert abs(np.trace(C) - mean_energy) <= 1e-12 * mean_energy


def test_criterion_3_orthonormality(prob32, pod_stack, greedy_stack):
    with criterion(3, "X-orthonormality of POD and greedy bases"):
        snapshots, pod_full, _, _ = pod_stack
        _, greedy_basis, _, _, _ = greedy_stack
        tested = [pod_full.vectors,
                  romkit.pod_basis(snapshots, n_modes=5).vectors,
                  greedy_basis.vectors,
                  greedy_basis.vectors[:5]]
        for V in tested:
            G = V @ (prob32.X @ V.T)
            assert np.abs(G - np.eye(V.shape[0])).max() <= 1e-10


def test_criterion_4_rigor_suite(prob32, greedy_stack):
    with criterion(4, "estimator rigor on 100 seeded random parameters"):
        _, basis, _, model, data = greedy_stack
        model5, data5 = model.truncate(5), data.truncate(5)
        vectors5 = basis.vectors[:5]
        slack = 1e-10
        for mu in romkit.sample_parameters(prob32.domain, 100, "random",
                                           seed=11):
            truth = romkit.solve_fom(prob32, mu)
            rb = romkit.rb_solve(model5, mu)
            cert = romkit.certificate(model5, data5, mu)
            e = truth.u - rb.coefficients @ vectors5
            err_mu = romkit.mu_norm(prob32, e, mu)
            err_v = romkit.v_norm(prob32, e)
            gap = truth.s - rb.s_rb
            assert truth.s >= rb.s_rb - 1e-12
            assert err_mu <= cert.eta_en + slack
            assert gap <= cert.eta_s + slack
            assert gap / truth.s <= cert.eta_s_rel + slack
            assert err_v <= cert.eta_v + slack
            if cert.eta_v_rel_valid:
                assert (err_v / romkit.v_norm(prob32, truth.u)
                        <= cert.eta_v_rel + slack)
            if gap > 1e-6:
                assert abs(gap - err_mu ** 2) <= 1e-8 * gap


def test_criterion_5_effectivity_ceilings(prob32, greedy_stack, audit_points):
    with criterion(5, "effectivity ceilings against the eigensolve oracle"):
        _, basis, _, model, data = greedy_stack
        model5, data5 = model.truncate(5), data.truncate(5)
        basis5 = romkit.ReducedBasis(vectors=basis.vectors[:5],
                                     provenance=None, problem=prob32)
        mus, constants = audit_points
        slack = 1.0 + 1e-8
        for mu, const in zip(mus, constants):
            rep = romkit.effectivities(prob32, model5, data5, basis5, mu,
                                       constants=const)
            assert not rep.indeterminate
            cert = rep.certificate
            ratio = const.gamma_delta / cert.alpha_lb
            assert rep.eff_en >= 1.0 - 1e-10
            assert rep.eff_s >= 1.0 - 1e-10
            assert rep.eff_v >= 1.0 - 1e-10
            assert rep.eff_en <= np.sqrt(ratio) * slack
            assert rep.eff_s <= ratio * slack
            assert rep.eff_s_rel <= (1.0 + cert.eta_s_rel) * ratio * slack
            assert rep.eff_v <= ratio * slack
            if cert.eta_v_rel_valid:
                assert rep.eff_v_rel <= 3.0 * ratio * slack
            assert abs(rep.eff_s - rep.eff_en ** 2) <= 1e-10 * rep.eff_s


def test_criterion_6_riesz_oracle(prob32, pod_stack, greedy_stack):
    with criterion(6, "offline/online dual norm vs full-order Riesz oracle"):
        _, basis, model, data = pod_stack
        solve_x = spla.factorized(prob32.X.tocsc())
        rng = np.random.default_rng(202)
        lo, hi = np.log(0.5), np.log(2.0)
        for _ in range(50):
            mu = np.exp(rng.uniform(lo, hi, size=4))
            N = int(rng.integers(1, 7))
            cert = romkit.certificate(model.truncate(N), data.truncate(N), mu)
            rb = romkit.rb_solve(model.truncate(N), mu)
            A, f = assemble_at(prob32, mu)
            r_hat = solve_x(f - A @ (rb.coefficients @ basis.vectors[:N]))
            direct = romkit.v_norm(prob32, r_hat)
            assert direct >= cert.r_floor  # pair is above the 1e-7 floor
            assert abs(cert.r_norm - direct) <= 1e-9 * direct
        # clamped / floor cases are flagged: converged greedy model at its
        # own selected parameters
        _, _, history, gmodel, gdata = greedy_stack
        for mu in history.selected_parameters[:5]:
            cert = romkit.certificate(gmodel, gdata, mu)
            assert cert.below_floor or cert.cancellation


def test_criterion_7_greedy_behavior(prob32, greedy_stack):
    with criterion(7, "greedy convergence, reproduction, determinism"):
        training, basis, history, model, _ = greedy_stack
        assert history.stopping_reason == "tolerance"
        assert basis.N <= 25
        assert history.max_estimator_per_iteration[-1] <= 1e-6
        trace = np.log(history.max_estimator_per_iteration)
        slope = np.polyfit(np.arange(trace.size), trace, 1)[0]
        assert slope < 0
        for mu in history.selected_parameters:
            truth = romkit.solve_fom(prob32, mu)
            rb = romkit.rb_solve(model, mu)
            err = romkit.v_norm(prob32,
                                truth.u - rb.coefficients @ basis.vectors)
            assert err <= 1e-9 * romkit.v_norm(prob32, truth.u)
        # determinism: a second run over the same training set is identical
        basis2, history2, _, _ = romkit.greedy_build(
            prob32, training, tol=1e-6, n_max=30)
        assert np.array_equal(basis2.vectors, basis.vectors)
        assert (history2.max_estimator_per_iteration
                == history.max_estimator_per_iteration)
        assert all(np.array_equal(a, b) for a, b in
                   zip(history2.selected_parameters,
                       history.selected_parameters))


def test_criterion_8_min_theta_sandwich(prob32, audit_points):
    with criterion(8, "min-theta bounds sandwich the exact constants"):
        mus, constants = audit_points
        for mu, const in zip(mus, constants):
            bounds = romkit.stability_bounds(prob32, mu)
            assert bounds.rigorous
            assert bounds.alpha_lb <= const.alpha_delta * (1 + 1e-10)
            assert const.gamma_delta <= bounds.gamma_ub * (1 + 1e-10)


def test_criterion_9_persistence(prob32, greedy_stack, tmp_path):
    with criterion(9, "byte-identical archives, bitwise online round-trip"):
        _, basis, _, model, data = greedy_stack
        romkit.save_model(tmp_path / "one", model, data, basis)
        loaded = romkit.load_model(tmp_path / "one")
        romkit.save_model(tmp_path / "two", loaded.model, loaded.data,
                          loaded.reduced_basis(prob32))
        for child in sorted((tmp_path / "one").iterdir()):
            assert child.read_bytes() == \
                (tmp_path / "two" / child.name).read_bytes()
        for mu in romkit.sample_parameters(prob32.domain, 20, "random",
                                           seed=303):
            ref = romkit.rb_solve(model, mu)
            new = romkit.rb_solve(loaded.model, mu)
            assert new.s_rb == ref.s_rb
            assert np.array_equal(new.coefficients, ref.coefficients)


def test_criterion_10_online_independence(tmp_path, capsys):
    with criterion(10, "online cost independent of the truth dimension"):
        truth_seconds = {}
        for n in (16, 64):
            code = cli_main([
                "offline", "--problem", "thermal", "--blocks", "2",
                "--mesh-n", str(n), "--mu-lo", "0.5", "--mu-hi", "2.0",
                "--method", "pod", "--snapshots", "16", "--n", "8",
                "--out", str(tmp_path / f"arch{n}"),
            ])
            assert code == 0
            truth_seconds[n] = json.loads(
                capsys.readouterr().out)["truth_solve_seconds"]
        assert truth_seconds[64] > 5.0 * truth_seconds[16]

        online_seconds = {}
        for n in (16, 64):
            archive = romkit.load_model(tmp_path / f"arch{n}",
                                        online_only=True)
            # structural guarantee: no truth-size payload was opened
            assert archive.basis_vectors is None
            assert "basis" not in archive.accessed_payloads
            mu = [0.7, 1.3, 1.9, 0.6]
            romkit.certificate(archive.model, archive.data, mu)  # warm-up
            samples = []
            for _ in range(200):
                t0 = time.perf_counter()
                romkit.certificate(archive.model, archive.data, mu)
                samples.append(time.perf_counter() - t0)
            online_seconds[n] = float(np.median(samples))
        assert online_seconds[64] < 2.0 * online_seconds[16]
