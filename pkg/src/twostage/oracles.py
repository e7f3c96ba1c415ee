"""
Independent reference computations used to check the fast paths.

None of these touch the maintained inverse or the solvers' internals: the
objective is rebuilt with explicit determinants and inverses, gradients
come from finite differences, and optima from exhaustive grids.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import detector
from .detector import DetectionProblem
from .system_model import complex_gaussian, trial_rng


def naive_sample_covariance(y) -> np.ndarray:
    y = np.asarray(y)
    L, M = y.shape
    out = np.zeros((L, L), dtype=complex)
    for m in range(M):
        for i in range(L):
            for j in range(L):
                out[i, j] += y[i, m] * np.conj(y[j, m])
    return out / M


def naive_covariance(problem: DetectionProblem, gamma) -> np.ndarray:
    L, N = problem.preambles.shape
    sigma = problem.sigma2 * np.eye(L, dtype=complex)
    for n in range(N):
        s = problem.preambles[:, n:n + 1]
        sigma = sigma + gamma[n] * (s @ s.conj().T)
    return sigma


def naive_objective(problem: DetectionProblem, gamma) -> float:
    sigma = naive_covariance(problem, gamma)
    return float(np.log(np.linalg.det(sigma).real) + np.trace(np.linalg.inv(sigma) @ problem.sigma_hat).real)


def finite_difference_gradient(problem: DetectionProblem, gamma, n: int, h: float = 1e-6) -> float:
    up = np.array(gamma, dtype=float)
    down = up.copy()
    up[n] += h
    down[n] -= h
    return (naive_objective(problem, up) - naive_objective(problem, down)) / (2 * h)


def batched_objective(problem: DetectionProblem, gammas) -> np.ndarray:
    """Objective at many points at once (rows of ``gammas``)."""
    S = problem.preambles
    outer = np.einsum("in,jn->nij", S, S.conj())
    sigma = np.einsum("bn,nij->bij", gammas, outer) + problem.sigma2 * np.eye(S.shape[0])
    _, logdet = np.linalg.slogdet(sigma)
    rhs = np.broadcast_to(problem.sigma_hat, sigma.shape)
    trace = np.trace(np.linalg.solve(sigma, rhs), axis1=1, axis2=2).real
    return logdet + trace


def grid_search(problem: DetectionProblem, step: float = 0.01):
    """Exhaustive minimum over ``{0, step, ..., 1}^N``; practical for N <= 4."""
    N = problem.n_devices
    axis = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    best_val, best_gamma = np.inf, None
    # chunk over the first coordinate to bound memory
    rest = np.array(list(itertools.product(axis, repeat=N - 1))) if N > 1 else np.zeros((1, 0))
    for g0 in axis:
        pts = np.column_stack([np.full(len(rest), g0), rest])
        vals = batched_objective(problem, pts)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_gamma = float(vals[i]), pts[i].copy()
    return best_gamma, best_val


def random_problem(rng, n_devices: int, l_phase2: int, sigma2: float = 0.5, n_active: int = None,
                   population: bool = True, n_antennas: int = 64) -> tuple:
    """Small random instance and its ground truth.

    With ``population`` the sample covariance is replaced by the exact
    covariance of the true activity pattern.
    """
    S = complex_gaussian(rng, (l_phase2, n_devices))
    if n_active is None:
        n_active = int(rng.integers(1, n_devices + 1))
    truth = np.zeros(n_devices)
    truth[rng.choice(n_devices, n_active, replace=False)] = 1.0
    if population:
        sigma_hat = (S * truth) @ S.conj().T + sigma2 * np.eye(l_phase2)
    else:
        y = (S * truth) @ complex_gaussian(rng, (n_devices, n_antennas)) \
            + complex_gaussian(rng, (l_phase2, n_antennas), sigma2)
        sigma_hat = y @ y.conj().T / n_antennas
    return DetectionProblem(S, sigma_hat, sigma2), truth


@dataclass
class OracleResult:
    name: str
    passed: bool
    worst: float
    tolerance: float


def check_gradient(seed: int = 0, instances: int = 50) -> OracleResult:
    rng = trial_rng(seed, 1)
    worst = 0.0
    for _ in range(instances):
        problem, _ = random_problem(rng, 6, 4, sigma2=1.0, population=False)
        gamma = rng.uniform(0.05, 0.95, 6)
        state = detector.SolverState.initial(problem)
        state.gamma = gamma.copy()
        state.sigma_inv = np.linalg.inv(naive_covariance(problem, gamma))
        n = int(rng.integers(6))
        g = detector.gradient_component(problem, state, n)
        fd = finite_difference_gradient(problem, gamma, n)
        worst = max(worst, abs(g - fd) / max(abs(fd), 1e-12))
    return OracleResult("gradient vs finite differences", worst <= 1e-5, worst, 1e-5)


def check_grid(seed: int = 0, instances: int = 20, tol: float = 1e-3) -> OracleResult:
    rng = trial_rng(seed, 2)
    worst = 0.0
    for _ in range(instances):
        problem, truth = random_problem(rng, 3, 2, sigma2=0.5)
        _, best = grid_search(problem)
        # alpha = 0 disables freezing, which can stop early on tiny instances
        for report in (detector.solve_cd(problem), detector.solve_active_set_cd(problem, omega=1e-3),
                       detector.solve_kcd(problem, alpha=0.0, k_hat=int(truth.sum()))):
            worst = max(worst, abs(report.objective - best))
    return OracleResult("solvers vs 0.01 grid search", worst <= tol, worst, tol)


def check_inverse(seed: int = 0) -> OracleResult:
    rng = trial_rng(seed, 3)
    problem, _ = random_problem(rng, 50, 16, sigma2=1.0, n_active=8, population=False)
    report = detector.solve_cd(problem)
    direct = np.linalg.inv(problem.covariance(report.gamma))
    err = np.linalg.norm(report.sigma_inv - direct) / np.linalg.norm(direct)
    return OracleResult("maintained inverse vs direct inverse", bool(err <= 1e-6), float(err), 1e-6)


def check_sample_covariance(seed: int = 0) -> OracleResult:
    from .estimator import sample_covariance
    y = complex_gaussian(trial_rng(seed, 4), (4, 8))
    err = float(np.abs(sample_covariance(y) - naive_sample_covariance(y)).max())
    return OracleResult("sample covariance vs double loop", err <= 1e-12, err, 1e-12)


def run_oracle_suite(seed: int = 0) -> list:
    return [check_sample_covariance(seed), check_gradient(seed), check_inverse(seed), check_grid(seed)]
