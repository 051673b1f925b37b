"""Full-order solves, norms, and exact discrete stability constants.

The truth solver is a Jacobi-preconditioned conjugate gradient iteration;
SPD systems are guaranteed by the problem class, and the solve is accepted
only when the relative algebraic residual reaches 1e-12. The stability
constants are validation-only and use a dense generalized symmetric
eigensolve, refused beyond desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import NumericalError
from .problem import AffineProblem, eval_thetas

TRUTH_RESIDUAL_TOL = 1e-13
TRUTH_RESIDUAL_LIMIT = 1e-12
DESK_SCALE_LIMIT = 5000


@dataclass
class TruthSolution:
    mu: np.ndarray
    u: np.ndarray
    s: float
    solve_residual: float


@dataclass
class StabilityConstants:
    alpha_delta: float
    gamma_delta: float


def assemble_at(problem: AffineProblem, mu):
    """Parameter-dependent operator and load: A^mu = sum theta_a^q A_q, f^mu."""
    theta_a, theta_f = eval_thetas(problem, mu)
    A = theta_a[0] * problem.A_q[0]
    for t, Aq in zip(theta_a[1:], problem.A_q[1:]):
        A = A + t * Aq
    f = theta_f[0] * problem.f_q[0]
    for t, fq in zip(theta_f[1:], problem.f_q[1:]):
        f = f + t * fq
    return A.tocsr(), f


def _pcg(A, b, rtol, maxiter, mu):
    """Jacobi-preconditioned CG; raises on non-SPD breakdown."""
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise NumericalError(
            f"system at mu={np.asarray(mu).tolist()} is not SPD: "
            f"smallest diagonal entry {diag.min():.3e}"
        )
    inv_diag = 1.0 / diag
    b_norm = np.linalg.norm(b)
    if b_norm == 0:
        return np.zeros_like(b), 0.0
    x = np.zeros_like(b)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for _ in range(maxiter):
        Ap = A @ p
        curvature = p @ Ap
        if curvature <= 0:
            raise NumericalError(
                f"CG breakdown at mu={np.asarray(mu).tolist()}: "
                f"non-positive curvature {curvature:.3e}"
            )
        alpha = rz / curvature
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= rtol * b_norm:
            break
        z = inv_diag * r
        rz_new = r @ z
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    true_res = np.linalg.norm(b - A @ x) / b_norm
    return x, true_res


def solve_fom(problem: AffineProblem, mu) -> TruthSolution:
    """Solve the full-order system A^mu u = f^mu and evaluate s = u^T f^mu."""
    mu = np.asarray(mu, dtype=float)
    A, f = assemble_at(problem, mu)
    u, residual = _pcg(A, f, TRUTH_RESIDUAL_TOL, 10 * A.shape[0], mu)
    f_norm = np.linalg.norm(f)
    for _ in range(3):
        # restarted refinement: the CG recurrence residual drifts from the
        # true residual on larger systems
        if residual <= TRUTH_RESIDUAL_TOL or f_norm == 0:
            break
        d, _ = _pcg(A, f - A @ u, TRUTH_RESIDUAL_TOL, 10 * A.shape[0], mu)
        u = u + d
        residual = np.linalg.norm(f - A @ u) / f_norm
    if residual > TRUTH_RESIDUAL_LIMIT and f_norm > 0:
        # high-contrast coefficients pin the attainable double-precision
        # residual near the limit, and evaluating f - A u in double adds
        # noise of the same size; polish with a direct factorization and
        # extended-precision residuals
        solve = scipy.sparse.linalg.factorized(A.tocsc())
        A_ext = A.astype(np.longdouble)
        f_ext = f.astype(np.longdouble)
        best_u, best_res = u, residual
        u = solve(f)
        for _ in range(30):
            r_ext = f_ext - A_ext @ u.astype(np.longdouble)
            r_now = float(np.linalg.norm(r_ext.astype(np.float64))) / f_norm
            if r_now < best_res:
                best_res, best_u = r_now, u.copy()
            if best_res <= TRUTH_RESIDUAL_LIMIT:
                break
            u = u + solve(r_ext.astype(np.float64))
        u, residual = best_u, best_res
    if residual > TRUTH_RESIDUAL_LIMIT:
        raise NumericalError(
            f"truth solve at mu={mu.tolist()} stalled at relative "
            f"residual {residual:.3e}"
        )
    s = float(u @ f)
    return TruthSolution(mu=mu, u=u, s=s, solve_residual=float(residual))


def _quadratic_norm(M, u, what):
    q = float(u @ (M @ u))
    if q < 0:
        scale = float(np.abs(u) @ (abs(M) @ np.abs(u)))
        if q < -1e-14 * max(scale, 1e-300):
            raise NumericalError(
                f"negative {what} quadratic form {q:.3e} beyond symmetry tolerance"
            )
        q = 0.0
    return np.sqrt(q)


def v_norm(problem: AffineProblem, u) -> float:
    """Norm induced by the reference inner product X."""
    return _quadratic_norm(problem.X, np.asarray(u, dtype=float), "X")


def mu_norm(problem: AffineProblem, u, mu) -> float:
    """Energy norm at mu, induced by A^mu."""
    A, _ = assemble_at(problem, mu)
    return _quadratic_norm(A, np.asarray(u, dtype=float), "energy")


def stability_constants(problem: AffineProblem, mu) -> StabilityConstants:
    """Exact discrete coercivity/continuity constants of (A^mu, X).

    Dense generalized symmetric eigensolve; validation-only, refused above
    desk scale.
    """
    n = problem.n_free
    if n > DESK_SCALE_LIMIT:
        raise NumericalError(
            f"stability_constants is a dense eigensolve and refuses "
            f"N={n} > {DESK_SCALE_LIMIT}; use the sampled min/max-theta bounds"
        )
    A, _ = assemble_at(problem, mu)
    w = scipy.linalg.eigh(A.toarray(), problem.X.toarray(), eigvals_only=True)
    return StabilityConstants(alpha_delta=float(w[0]), gamma_delta=float(w[-1]))
