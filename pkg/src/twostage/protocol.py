"""
Two-stage random access: count estimation, table lookup, identity detection.

Each trial owns a generator; it is split into four child streams (activity,
Phase I, Phase II, spare) so that a grant-free trial and a two-stage trial
with the same seed see the same activity pattern and the same Phase II
channel and noise.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .detector import (DEFAULT_MAX_ITER, DetectionProblem, SolverReport, initial_max_violation,
                       solve_active_set_cd, solve_cd, solve_kcd)
from .estimator import estimate_count, sample_covariance
from .metrics import pooled_equal_error_rate
from .system_model import (SystemConfig, generate_common_preamble, generate_phase1_signal,
                           generate_phase2_signal, generate_preambles, sample_activity, trial_rng)

SOLVERS = ("cd", "active-set", "kcd")


class TableRangeError(LookupError):
    pass


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LookupTable:
    entries: tuple
    threshold: float = float("nan")
    m_antennas: int = 0
    n_devices: int = 0

    def __post_init__(self):
        entries = tuple((int(k), int(l2)) for k, l2 in self.entries)
        if not entries:
            raise ValueError("lookup table needs at least one entry")
        ks = [k for k, _ in entries]
        l2s = [l2 for _, l2 in entries]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("table K values must be strictly increasing")
        if any(b < a for a, b in zip(l2s, l2s[1:])):
            raise ValueError("table L2 values must be nondecreasing in K")
        if min(l2s) < 1 or min(ks) < 1:
            raise ValueError("table entries must be positive")
        object.__setattr__(self, "entries", entries)

    @property
    def ks(self) -> list:
        return [k for k, _ in self.entries]

    @property
    def max_l2(self) -> int:
        return self.entries[-1][1]

    def to_text(self) -> str:
        lines = [f"# threshold={self.threshold:g} M={self.m_antennas} N={self.n_devices}"]
        lines += [f"{k},{l2}" for k, l2 in self.entries]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LookupTable":
        meta, entries = {}, []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, value = item.partition("=")
                    meta[key] = value
                continue
            k, l2 = line.split(",")
            entries.append((int(k), int(l2)))
        return cls(tuple(entries), float(meta.get("threshold", "nan")),
                   int(meta.get("M", 0)), int(meta.get("N", 0)))

    def write(self, path) -> None:
        with open(path, "w", newline="\n") as f:
            f.write(self.to_text())

    @classmethod
    def read(cls, path) -> "LookupTable":
        with open(path) as f:
            return cls.from_text(f.read())


# Relationship between K and L_II at threshold 1e-2, M = 32, N = 1000
REFERENCE_TABLE = LookupTable(
    tuple(zip(range(10, 301, 10),
              (15, 25, 35, 45, 55, 65, 75, 76, 77, 78,
               80, 90, 100, 110, 120, 130, 140, 150, 160, 170,
               180, 190, 200, 210, 220, 230, 240, 250, 260, 270))),
    threshold=1e-2, m_antennas=32, n_devices=1000)


def lookup_l2(table: LookupTable, k_hat: int) -> int:
    """Preamble length for ``k_hat``: an exact key, else the next larger key.

    Anything at or below the smallest key maps to the first entry.
    """
    if k_hat < 0:
        raise ValueError("k_hat must be nonnegative")
    pos = bisect_left(table.ks, k_hat)
    if pos == len(table.entries):
        raise TableRangeError(f"k_hat={k_hat} exceeds the largest tabulated K={table.ks[-1]}")
    return table.entries[pos][1]


@dataclass(frozen=True)
class SolverParams:
    solver: str = "kcd"
    epsilon: float = 1e-3
    alpha: float = 0.01
    stall_limit: int = 2
    omega: Optional[float] = None
    omega_rel: float = 0.0
    omega_shrink: Optional[float] = 0.1
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")

    def with_solver(self, solver: str) -> "SolverParams":
        return SolverParams(solver, self.epsilon, self.alpha, self.stall_limit, self.omega,
                            self.omega_rel, self.omega_shrink, self.max_iter)


def run_detector(problem: DetectionProblem, params: SolverParams, k_hat: Optional[int] = None) -> SolverReport:
    """Dispatch to one of the three solvers.

    Active Set CD without an explicit ``omega`` uses ``omega_rel`` times the
    largest violation at the starting point, but never less than
    ``epsilon``; the default ``omega_rel = 0`` gives ``omega = epsilon``, for
    which the active set is empty only at convergence.
    """
    if params.solver == "cd":
        return solve_cd(problem, params.epsilon, params.max_iter)
    if params.solver == "active-set":
        omega = params.omega
        if omega is None:
            omega = max(params.omega_rel * initial_max_violation(problem), params.epsilon)
        return solve_active_set_cd(problem, params.epsilon, omega, params.omega_shrink, params.max_iter)
    if k_hat is None:
        k_hat = problem.n_devices
    return solve_kcd(problem, params.epsilon, params.alpha, params.stall_limit,
                     min(k_hat, problem.n_devices), params.max_iter)


@dataclass
class TrialOutcome:
    k_true: int
    k_hat: Optional[int]
    k_hat_raw: Optional[float]
    l1: int
    l2_allocated: int
    truth: np.ndarray
    soft_scores: np.ndarray
    solver_report: SolverReport
    out_of_table: bool = False
    total_preamble: int = field(init=False)

    def __post_init__(self):
        self.total_preamble = self.l1 + self.l2_allocated


@dataclass(frozen=True)
class Codebook:
    """Preambles fixed for a whole experiment.

    Both blocks are drawn at their largest length; a shorter allocation uses
    the leading symbols.
    """
    phase1: np.ndarray
    phase2: np.ndarray

    @classmethod
    def draw(cls, l1: int, max_l2: int, n_devices: int, rng: np.random.Generator) -> "Codebook":
        p1_rng, p2_rng = rng.spawn(2)
        return cls(generate_common_preamble(l1, p1_rng) if l1 > 0 else np.zeros(0, complex),
                   generate_preambles(n_devices, max_l2, p2_rng))

    def common(self, l1: int) -> np.ndarray:
        if l1 > self.phase1.shape[0]:
            raise ValueError(f"codebook holds {self.phase1.shape[0]} Phase I symbols, {l1} requested")
        return self.phase1[:l1]

    def preambles(self, l2: int) -> np.ndarray:
        if l2 > self.phase2.shape[0]:
            raise ValueError(f"codebook holds {self.phase2.shape[0]} Phase II symbols, {l2} requested")
        return self.phase2[:l2]


def split_streams(rng: np.random.Generator):
    """Activity, Phase I, Phase II and spare child generators of a trial."""
    return rng.spawn(4)


def phase1_estimate(config: SystemConfig, activity, s, rng: np.random.Generator):
    y = generate_phase1_signal(config, activity, s, rng)
    return estimate_count(sample_covariance(y), s, config.sigma2, config.n_devices)


def _phase2(config, activity, S, rng, params, k_hat):
    y = generate_phase2_signal(config, activity, S, rng)
    return run_detector(DetectionProblem.from_signal(S, y, config.sigma2), params, k_hat)


def run_two_stage(config: SystemConfig, table: LookupTable, solver_params: SolverParams,
                  rng: np.random.Generator, codebook: Optional[Codebook] = None) -> TrialOutcome:
    """One slot of the two-stage protocol.

    An estimate beyond the table is clamped to the largest key and the
    outcome is flagged ``out_of_table``. Without a codebook, preambles are
    drawn from the trial's spare stream.
    """
    act_rng, p1_rng, p2_rng, spare_rng = split_streams(rng)
    if codebook is None:
        codebook = Codebook.draw(config.l_phase1, table.max_l2, config.n_devices, spare_rng)
    truth = sample_activity(config.n_devices, config.n_active, act_rng)
    est = phase1_estimate(config, truth, codebook.common(config.l_phase1), p1_rng)
    out_of_table = est.k_hat > table.ks[-1]
    l2 = lookup_l2(table, min(est.k_hat, table.ks[-1]))
    report = _phase2(config, truth, codebook.preambles(l2), p2_rng, solver_params, est.k_hat)
    return TrialOutcome(config.n_active, est.k_hat, est.k_hat_raw, config.l_phase1, l2, truth,
                        report.gamma, report, out_of_table)


def run_grant_free(config: SystemConfig, l2_fixed: int, solver_params: Optional[SolverParams],
                   rng: np.random.Generator, codebook: Optional[Codebook] = None) -> TrialOutcome:
    """Baseline: fixed Phase II length, no count estimate, CD unless told otherwise."""
    if l2_fixed < 1:
        raise ValueError("l2_fixed must be positive")
    params = solver_params if solver_params is not None else SolverParams("cd")
    act_rng, _, p2_rng, spare_rng = split_streams(rng)
    if codebook is None:
        codebook = Codebook.draw(0, l2_fixed, config.n_devices, spare_rng)
    truth = sample_activity(config.n_devices, config.n_active, act_rng)
    report = _phase2(config, truth, codebook.preambles(l2_fixed), p2_rng, params, None)
    return TrialOutcome(config.n_active, None, None, 0, l2_fixed, truth, report.gamma, report)


def detection_eer(config: SystemConfig, l2: int, trials: int, codebook: Codebook, seed: int,
                  seed_key: Sequence[int] = (), params: Optional[SolverParams] = None) -> float:
    """Pooled equal-error rate of a fixed-length detector over seeded trials.

    Trial ``t`` uses stream ``trial_rng(seed, *seed_key, t)`` whatever ``l2``
    is, so different lengths are compared on common random numbers.
    """
    params = params or SolverParams("cd")
    truths, scores = [], []
    for t in range(trials):
        out = run_grant_free(config, l2, params, trial_rng(seed, *seed_key, t), codebook)
        truths.append(out.truth)
        scores.append(out.soft_scores)
    return pooled_equal_error_rate(truths, scores).equal_error


def calibrate_table(k_grid: Iterable[int], l2_search_range: Iterable[int], threshold: float, trials: int,
                    base_config: SystemConfig, rng: Optional[np.random.Generator] = None,
                    codebook: Optional[Codebook] = None, params: Optional[SolverParams] = None,
                    log=None) -> LookupTable:
    """Smallest preamble length meeting ``threshold`` for every K in ``k_grid``.

    Uses bisection over the sorted search range, which presumes the
    equal-error rate falls with the preamble length; common random numbers
    across lengths keep the Monte Carlo curve close to monotone. The result
    is made nondecreasing by a running maximum.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    k_grid = [int(k) for k in k_grid]
    if any(b <= a for a, b in zip(k_grid, k_grid[1:])) or not k_grid:
        raise ValueError("k_grid must be nonempty and strictly increasing")
    lengths = sorted(set(int(l) for l in l2_search_range))
    if not lengths:
        raise ValueError("empty L2 search range")
    if rng is None:
        rng = trial_rng(base_config.master_seed)
    seed = int(rng.integers(2**63))
    if codebook is None:
        codebook = Codebook.draw(0, lengths[-1], base_config.n_devices, rng)

    entries = []
    running = 0
    for k in k_grid:
        config = SystemConfig(base_config.n_devices, base_config.n_antennas, k, base_config.l_phase1,
                              base_config.l_phase2, base_config.sigma2, base_config.master_seed)
        cache = {}

        def passes(i):
            if i not in cache:
                cache[i] = detection_eer(config, lengths[i], trials, codebook, seed, (k,), params)
                if log is not None:
                    log(f"K={k} L2={lengths[i]} eer={cache[i]:.4g}")
            return cache[i] <= threshold

        if not passes(len(lengths) - 1):
            raise CalibrationError(f"no L2 in [{lengths[0]}, {lengths[-1]}] reaches threshold {threshold} at K={k}")
        lo, hi = 0, len(lengths) - 1
        # invariant: lengths[hi] passes; everything below lo fails
        while lo < hi:
            mid = (lo + hi) // 2
            if passes(mid):
                hi = mid
            else:
                lo = mid + 1
        running = max(running, lengths[hi])
        entries.append((k, running))
    return LookupTable(tuple(entries), threshold, base_config.n_antennas, base_config.n_devices)

