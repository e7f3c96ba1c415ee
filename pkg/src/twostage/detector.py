"""
Phase II activity detection by covariance maximum likelihood.

The detector minimises ``f(gamma) = log det Sigma + tr(Sigma^-1 Sigma_hat)``
over the box ``[0, 1]^N`` with ``Sigma = S diag(gamma) S^H + sigma2 I``.
Three coordinate-descent solvers share one state object and one step:

* :func:`solve_cd`: cyclic sweeps over every coordinate.
* :func:`solve_active_set_cd`: updates coordinates whose violation is at
  least ``omega``; needs the full gradient every iteration.
* :func:`solve_kcd`: updates only the ``k_hat`` most violating coordinates
  and stops computing the gradient of coordinates whose violation stayed
  below ``alpha`` more than ``big_d`` times.

Cost is tracked in FLOPs with two units: ``5 L^2`` per coordinate update and
``4 L^2`` per gradient component. Sorting and set bookkeeping are free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

UPDATE_FLOPS = 5
GRADIENT_FLOPS = 4
DEFAULT_MAX_ITER = 10_000
_DENOM_GUARD = 1e-12


@dataclass
class DetectionProblem:
    preambles: np.ndarray
    sigma_hat: np.ndarray
    sigma2: float

    def __post_init__(self):
        self.preambles = np.asarray(self.preambles, dtype=complex)
        self.sigma_hat = np.asarray(self.sigma_hat, dtype=complex)
        if self.preambles.ndim != 2:
            raise ValueError("preambles must be an L x N matrix")
        L = self.preambles.shape[0]
        if self.sigma_hat.shape != (L, L):
            raise ValueError(f"sigma_hat has shape {self.sigma_hat.shape}, expected ({L}, {L})")
        if not np.allclose(self.sigma_hat, self.sigma_hat.conj().T, atol=1e-10 * max(1.0, np.abs(self.sigma_hat).max())):
            raise ValueError("sigma_hat must be Hermitian")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @classmethod
    def from_signal(cls, preambles, y, sigma2: float) -> "DetectionProblem":
        y = np.asarray(y)
        return cls(preambles, (y @ y.conj().T) / y.shape[1], sigma2)

    @property
    def n_devices(self) -> int:
        return self.preambles.shape[1]

    @property
    def l_phase2(self) -> int:
        return self.preambles.shape[0]

    def covariance(self, gamma) -> np.ndarray:
        S = self.preambles
        return (S * np.asarray(gamma, dtype=float)) @ S.conj().T + self.sigma2 * np.eye(self.l_phase2)


@dataclass
class SolverState:
    gamma: np.ndarray
    sigma_inv: np.ndarray
    violations: np.ndarray
    stall_counts: np.ndarray
    candidates: np.ndarray
    iteration: int = 0
    flops: int = 0
    coord_updates: int = 0
    grad_computations: int = 0

    @classmethod
    def initial(cls, problem: DetectionProblem) -> "SolverState":
        N, L = problem.n_devices, problem.l_phase2
        return cls(
            gamma=np.zeros(N),
            sigma_inv=np.eye(L, dtype=complex) / problem.sigma2,
            violations=np.full(N, np.inf),
            stall_counts=np.zeros(N, dtype=np.int64),
            candidates=np.ones(N, dtype=bool),
        )

    def charge(self, problem: DetectionProblem, updates: int = 0, gradients: int = 0) -> None:
        L2 = problem.l_phase2**2
        self.coord_updates += updates
        self.grad_computations += gradients
        self.flops += UPDATE_FLOPS * L2 * updates + GRADIENT_FLOPS * L2 * gradients


@dataclass
class SolverReport:
    gamma: np.ndarray
    converged: bool
    status: str
    iterations: int
    coord_updates: int
    grad_computations: int
    flops: int
    objective: float
    sigma_inv: np.ndarray = field(repr=False)
    # (|C|, |A|) per iteration; only K-CD fills this in
    set_sizes: list = field(default_factory=list, repr=False)


StepCallback = Callable[[SolverState, int], None]


def objective(problem: DetectionProblem, gamma) -> float:
    """Negative log-likelihood (up to constants), from a fresh Cholesky factorisation."""
    gamma = np.asarray(gamma, dtype=float)
    c, lower = scipy.linalg.cho_factor(problem.covariance(gamma))
    logdet = 2.0 * np.sum(np.log(np.abs(np.diag(c))))
    trace = np.trace(scipy.linalg.cho_solve((c, lower), problem.sigma_hat)).real
    return float(logdet + trace)


def _quadratic_forms(problem, sigma_inv, idx):
    # q_n = s_n^H Sigma^-1 s_n and p_n = s_n^H Sigma^-1 Sigma_hat Sigma^-1 s_n
    S = problem.preambles[:, idx]
    A = sigma_inv @ S
    q = np.einsum("ij,ij->j", S.conj(), A).real
    p = np.einsum("ij,ij->j", A.conj(), problem.sigma_hat @ A).real
    return q, p


def gradient_components(problem: DetectionProblem, state: SolverState, idx) -> np.ndarray:
    """Gradient entries ``idx`` using the maintained inverse; charged per entry."""
    idx = np.atleast_1d(np.asarray(idx, dtype=np.intp))
    q, p = _quadratic_forms(problem, state.sigma_inv, idx)
    state.charge(problem, gradients=idx.size)
    return q - p


def gradient_component(problem: DetectionProblem, state: SolverState, n: int) -> float:
    return float(gradient_components(problem, state, [n])[0])


def violations(gamma, grad) -> np.ndarray:
    """Distance of each coordinate from the box-constrained stationarity condition.

    At the lower bound only a negative gradient counts, at the upper bound
    only a positive one, and in the interior the full magnitude.
    """
    gamma = np.asarray(gamma, dtype=float)
    grad = np.asarray(grad, dtype=float)
    v = np.abs(grad)
    v = np.where(gamma <= 0.0, np.maximum(-grad, 0.0), v)
    v = np.where(gamma >= 1.0, np.maximum(grad, 0.0), v)
    return v


def violation(gamma_n: float, grad_n: float) -> float:
    return float(violations(gamma_n, grad_n))


def clipped_step(gamma_n: float, q: float, p: float) -> float:
    return min(max((p - q) / q**2, -gamma_n), 1.0 - gamma_n)


def coordinate_step(problem: DetectionProblem, state: SolverState, n: int) -> float:
    """Exact minimisation along coordinate ``n`` and rank-one inverse update.

    Returns the step actually taken.
    """
    s = problem.preambles[:, n]
    u = state.sigma_inv @ s
    q = np.vdot(s, u).real
    p = np.vdot(u, problem.sigma_hat @ u).real
    g = state.gamma[n]
    eta = clipped_step(g, q, p)
    state.charge(problem, updates=1)
    if eta == 0.0:
        return 0.0
    state.gamma[n] = 1.0 if eta == 1.0 - g else min(max(g + eta, 0.0), 1.0)
    denom = 1.0 + eta * q
    if abs(denom) < _DENOM_GUARD:
        state.sigma_inv = np.linalg.inv(problem.covariance(state.gamma))
    else:
        state.sigma_inv -= (eta / denom) * np.outer(u, u.conj())
    return eta


def _report(problem, state, status, set_sizes=None) -> SolverReport:
    return SolverReport(
        gamma=state.gamma.copy(),
        converged=status == "converged",
        status=status,
        iterations=state.iteration,
        coord_updates=state.coord_updates,
        grad_computations=state.grad_computations,
        flops=state.flops,
        objective=objective(problem, state.gamma),
        sigma_inv=state.sigma_inv.copy(),
        set_sizes=set_sizes or [],
    )


def _refresh(problem, state, idx):
    state.violations[idx] = violations(state.gamma[idx], gradient_components(problem, state, idx))


def solve_cd(problem: DetectionProblem, epsilon: float = 1e-3, max_iter: int = DEFAULT_MAX_ITER,
             callback: Optional[StepCallback] = None) -> SolverReport:
    """Cyclic coordinate descent from ``gamma = 0``.

    The violation vector is computed once at the start and after every
    sweep, and those gradient evaluations are charged like any other.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    state = SolverState.initial(problem)
    everyone = np.arange(problem.n_devices)
    _refresh(problem, state, everyone)
    while True:
        if state.violations.max(initial=0.0) <= epsilon:
            status = "converged"
            break
        if state.iteration >= max_iter:
            status = "max_iter"
            break
        state.iteration += 1
        for n in everyone:
            coordinate_step(problem, state, n)
            if callback is not None:
                callback(state, n)
        _refresh(problem, state, everyone)
    return _report(problem, state, status)


def solve_active_set_cd(problem: DetectionProblem, epsilon: float = 1e-3, omega: float = 1e-2,
                        omega_shrink: Optional[float] = None, max_iter: int = DEFAULT_MAX_ITER,
                        callback: Optional[StepCallback] = None) -> SolverReport:
    """Coordinate descent restricted to coordinates with violation ``>= omega``.

    When no coordinate reaches ``omega`` while the largest violation is
    still above ``epsilon``, the solver stops with status ``"stall"``, or,
    if ``omega_shrink`` is given, lowers ``omega`` to
    ``max(omega_shrink * omega, epsilon)`` and carries on. The shrink step
    costs nothing since the violations are already known.
    """
    if not epsilon > 0 or not omega > 0:
        raise ValueError("epsilon and omega must be positive")
    if omega_shrink is not None and not 0 < omega_shrink < 1:
        raise ValueError("omega_shrink must lie in (0, 1)")
    state = SolverState.initial(problem)
    everyone = np.arange(problem.n_devices)
    _refresh(problem, state, everyone)
    while True:
        if state.violations.max(initial=0.0) <= epsilon:
            status = "converged"
            break
        if state.iteration >= max_iter:
            status = "max_iter"
            break
        active = np.flatnonzero(state.violations >= omega)
        if active.size == 0:
            if omega_shrink is None:
                status = "stall"
                break
            omega = max(omega * omega_shrink, epsilon)
            continue
        state.iteration += 1
        for n in active:
            coordinate_step(problem, state, n)
            if callback is not None:
                callback(state, n)
        _refresh(problem, state, everyone)
    return _report(problem, state, status)


def initial_max_violation(problem: DetectionProblem) -> float:
    """Largest violation at ``gamma = 0``; not charged to any solver."""
    state = SolverState.initial(problem)
    grad = gradient_components(problem, state, np.arange(problem.n_devices))
    return float(violations(state.gamma, grad).max(initial=0.0))


def rank_by_violation(values, idx) -> np.ndarray:
    """``idx`` sorted by decreasing violation, ties by increasing index."""
    idx = np.asarray(idx)
    return idx[np.lexsort((idx, -np.asarray(values)[idx]))]


def solve_kcd(problem: DetectionProblem, epsilon: float = 1e-3, alpha: float = 0.01, big_d: int = 2,
              k_hat: Optional[int] = None, max_iter: int = DEFAULT_MAX_ITER,
              callback: Optional[StepCallback] = None) -> SolverReport:
    """Coordinate descent that updates at most ``k_hat`` coordinates per iteration.

    A coordinate's stall counter grows each time its freshly computed
    violation is below ``alpha``; once the counter exceeds ``big_d`` the
    coordinate leaves the candidate set for good and its gradient is no
    longer evaluated. Termination checks the largest violation over the
    remaining candidates.
    """
    N = problem.n_devices
    if k_hat is None:
        k_hat = N
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if alpha < 0 or big_d < 0:
        raise ValueError("alpha and big_d must be nonnegative")
    if not 0 <= k_hat <= N:
        raise ValueError(f"k_hat={k_hat} must lie in [0, {N}]")

    state = SolverState.initial(problem)
    _refresh(problem, state, np.arange(N))
    if k_hat == 0:
        status = "converged" if state.violations.max(initial=0.0) <= epsilon else "not_run"
        return _report(problem, state, status)
    state.stall_counts += state.violations < alpha
    set_sizes = []
    while True:
        state.candidates = state.stall_counts <= big_d
        live = np.flatnonzero(state.candidates)
        if state.violations[live].max(initial=0.0) <= epsilon:
            status = "converged"
            break
        if state.iteration >= max_iter:
            status = "max_iter"
            break
        state.iteration += 1
        n_update = min(live.size, k_hat)
        for n in rank_by_violation(state.violations, live)[:n_update]:
            coordinate_step(problem, state, n)
            if callback is not None:
                callback(state, n)
        _refresh(problem, state, live)
        state.stall_counts[live] += state.violations[live] < alpha
        set_sizes.append((live.size, n_update))
    return _report(problem, state, status, set_sizes)


def threshold_activities(gamma, theta: float) -> np.ndarray:
    return (np.asarray(gamma) > theta).astype(np.int64)
