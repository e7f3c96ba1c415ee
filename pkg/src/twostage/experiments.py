"""
Seeded Monte Carlo sweeps and their CSV / JSON result tables.

Modes
-----
``estimate``
    Phase I only: normalised count-estimation error per (M, L_I, K).
``detect``
    Phase II detectors side by side on identical trials, per
    (M, L_I, L_II, K). K-CD gets the Phase I estimate when ``L_I > 0`` and
    the true K otherwise.
``two-stage``
    The protocol driven by a lookup table, next to the grant-free baseline
    at every fixed L_II in the grid, on identical trials.

Trial ``t`` of a grid point draws from ``trial_rng(seed, mode, *point, t)``;
preambles come from one codebook per experiment. Floats in the result table
are rounded to 9 significant digits so a written CSV reads back unchanged.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .estimator import estimation_error
from .metrics import binomial_se, pooled_equal_error_rate
from .protocol import (Codebook, LookupTable, SolverParams, phase1_estimate, run_detector, run_grant_free,
                       run_two_stage, split_streams)
from .detector import DetectionProblem
from .system_model import (REFERENCE_SIGMA2, SystemConfig, generate_phase2_signal, sample_activity, trial_rng)

log = logging.getLogger(__name__)

MODES = ("estimate", "detect", "two-stage")
_MODE_KEY = {"estimate": 1, "detect": 2, "two-stage": 3}
_CODEBOOK_KEY = 0xC0DE

COLUMNS = (
    "mode", "protocol", "solver", "n_devices", "n_antennas", "n_active", "l1", "l2", "sigma2", "trials",
    "excluded", "mdp", "fap", "equal_error", "equal_error_se", "mdp_se", "fap_se", "threshold",
    "mean_k_hat", "e_k", "e_k_se", "mean_l2", "mean_total_preamble", "out_of_table",
    "iterations", "coord_updates", "grad_computations", "flops", "converged_frac",
)
_INT_COLUMNS = {"n_devices", "n_antennas", "n_active", "l1", "trials", "excluded", "out_of_table"}
_STR_COLUMNS = {"mode", "protocol", "solver", "l2"}


@dataclass
class ExperimentSpec:
    mode: str
    n_devices: int = 1000
    antennas: tuple = (16,)
    active: tuple = (100,)
    l1: tuple = (4,)
    l2: tuple = (40,)
    sigma2: float = REFERENCE_SIGMA2
    solvers: tuple = ("cd",)
    params: SolverParams = field(default_factory=SolverParams)
    trials: int = 100
    seed: int = 0
    table: Optional[LookupTable] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for name in ("antennas", "active", "l1", "l2", "solvers"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"grid {name!r} is empty")
            setattr(self, name, value)
        if self.mode != "detect" and min(self.l1) < 1:
            raise ValueError(f"{self.mode} mode needs L1 >= 1")
        if self.mode == "two-stage" and self.table is None:
            raise ValueError("two-stage mode needs a lookup table")


def _round9(x):
    if x is None:
        return None
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return int(x)
    x = float(x)
    return x if not np.isfinite(x) else float(f"{x:.9g}")


def _row(**values) -> dict:
    row = dict.fromkeys(COLUMNS)
    for key, value in values.items():
        if key not in row:
            raise KeyError(key)
        row[key] = value if key in _STR_COLUMNS else _round9(value)
    return row


def _detection_columns(truths, scores, reports, n_devices):
    usable = [i for i, t in enumerate(truths) if 0 < np.sum(t) < n_devices]
    out = {"excluded": len(truths) - len(usable)}
    if usable:
        rates = pooled_equal_error_rate([truths[i] for i in usable], [scores[i] for i in usable])
        n_act = sum(int(np.sum(truths[i])) for i in usable)
        n_idle = len(usable) * n_devices - n_act
        mdp_se, fap_se = binomial_se(rates.mdp, n_act), binomial_se(rates.fap, n_idle)
        out.update(mdp=rates.mdp, fap=rates.fap, equal_error=rates.equal_error, threshold=rates.threshold_used,
                   mdp_se=mdp_se, fap_se=fap_se, equal_error_se=0.5 * np.hypot(mdp_se, fap_se))
    if reports:
        out.update(
            iterations=np.mean([r.iterations for r in reports]),
            coord_updates=np.mean([r.coord_updates for r in reports]),
            grad_computations=np.mean([r.grad_computations for r in reports]),
            flops=np.mean([r.flops for r in reports]),
            converged_frac=np.mean([r.converged for r in reports]),
        )
    return out


def _estimate_columns(k_true, raw_estimates, rounded):
    out = {"mean_k_hat": np.mean(rounded)}
    if k_true > 0:
        errs = [estimation_error(k_true, k) for k in raw_estimates]
        out["e_k"] = np.mean(errs)
        out["e_k_se"] = np.std(errs, ddof=1) / np.sqrt(len(errs)) if len(errs) > 1 else None
    return out


def _config(spec, m, k, l1=1, l2=1):
    return SystemConfig(spec.n_devices, m, k, max(l1, 1), l2, spec.sigma2, spec.seed)


def _codebook(spec) -> Codebook:
    max_l2 = max(spec.l2)
    if spec.table is not None:
        max_l2 = max(max_l2, spec.table.max_l2)
    return Codebook.draw(max(spec.l1), max_l2, spec.n_devices, trial_rng(spec.seed, _CODEBOOK_KEY))


def _run_estimate(spec, codebook):
    rows = []
    for m, l1, k in itertools.product(spec.antennas, spec.l1, spec.active):
        config = _config(spec, m, k, l1)
        raw, rounded = [], []
        for t in range(spec.trials):
            act_rng, p1_rng, _, _ = split_streams(trial_rng(spec.seed, _MODE_KEY["estimate"], m, l1, k, t))
            truth = sample_activity(spec.n_devices, k, act_rng)
            est = phase1_estimate(config, truth, codebook.common(l1), p1_rng)
            raw.append(est.k_hat_raw)
            rounded.append(est.k_hat)
        rows.append(_row(mode="estimate", n_devices=spec.n_devices, n_antennas=m, n_active=k, l1=l1,
                         sigma2=spec.sigma2, trials=spec.trials, **_estimate_columns(k, raw, rounded)))
        log.info("estimate M=%d L1=%d K=%d done", m, l1, k)
    return rows


def _run_detect(spec, codebook):
    rows = []
    for m, l1, l2, k in itertools.product(spec.antennas, spec.l1, spec.l2, spec.active):
        config = _config(spec, m, k, l1, l2)
        S = codebook.preambles(l2)
        problems, truths, k_hats, raw = [], [], [], []
        for t in range(spec.trials):
            act_rng, p1_rng, p2_rng, _ = split_streams(trial_rng(spec.seed, _MODE_KEY["detect"], m, l1, l2, k, t))
            truth = sample_activity(spec.n_devices, k, act_rng)
            if l1 > 0:
                est = phase1_estimate(config, truth, codebook.common(l1), p1_rng)
                k_hats.append(est.k_hat)
                raw.append(est.k_hat_raw)
            else:
                k_hats.append(k)
            y = generate_phase2_signal(config, truth, S, p2_rng)
            problems.append(DetectionProblem.from_signal(S, y, spec.sigma2))
            truths.append(truth)
        est_cols = _estimate_columns(k, raw, k_hats) if raw else {"mean_k_hat": np.mean(k_hats)}
        for solver in spec.solvers:
            params = spec.params.with_solver(solver)
            reports = [run_detector(p, params, kh) for p, kh in zip(problems, k_hats)]
            rows.append(_row(mode="detect", protocol="raw", solver=solver, n_devices=spec.n_devices,
                             n_antennas=m, n_active=k, l1=l1, l2=str(l2), sigma2=spec.sigma2, trials=spec.trials,
                             mean_l2=l2, mean_total_preamble=l1 + l2, **est_cols,
                             **_detection_columns(truths, [r.gamma for r in reports], reports, spec.n_devices)))
            log.info("detect M=%d L1=%d L2=%d K=%d %s done", m, l1, l2, k, solver)
    return rows


def _run_two_stage(spec, codebook):
    rows = []
    protocol_solver = spec.solvers[0]
    for m, l1, k in itertools.product(spec.antennas, spec.l1, spec.active):
        config = _config(spec, m, k, l1)
        seeds = [(spec.seed, _MODE_KEY["two-stage"], m, l1, k, t) for t in range(spec.trials)]
        outs = [run_two_stage(config, spec.table, spec.params.with_solver(protocol_solver),
                              trial_rng(*s), codebook) for s in seeds]
        reports = [o.solver_report for o in outs]
        rows.append(_row(mode="two-stage", protocol="two-stage", solver=protocol_solver, n_devices=spec.n_devices,
                         n_antennas=m, n_active=k, l1=l1, l2="table", sigma2=spec.sigma2, trials=spec.trials,
                         mean_l2=np.mean([o.l2_allocated for o in outs]),
                         mean_total_preamble=np.mean([o.total_preamble for o in outs]),
                         out_of_table=sum(o.out_of_table for o in outs),
                         **_estimate_columns(k, [o.k_hat_raw for o in outs], [o.k_hat for o in outs]),
                         **_detection_columns([o.truth for o in outs], [o.soft_scores for o in outs],
                                              reports, spec.n_devices)))
        for l2 in spec.l2:
            outs = [run_grant_free(config, l2, spec.params.with_solver("cd"), trial_rng(*s), codebook)
                    for s in seeds]
            reports = [o.solver_report for o in outs]
            rows.append(_row(mode="two-stage", protocol="grant-free", solver="cd", n_devices=spec.n_devices,
                             n_antennas=m, n_active=k, l1=0, l2=str(l2), sigma2=spec.sigma2, trials=spec.trials,
                             mean_l2=l2, mean_total_preamble=l2,
                             **_detection_columns([o.truth for o in outs], [o.soft_scores for o in outs],
                                                  reports, spec.n_devices)))
        log.info("two-stage M=%d K=%d done", m, k)
    return rows


def run_experiment(spec: ExperimentSpec) -> list:
    """Run every grid point of ``spec``; one dict per output row, keys in ``COLUMNS`` order."""
    codebook = _codebook(spec)
    runner = {"estimate": _run_estimate, "detect": _run_detect, "two-stage": _run_two_stage}[spec.mode]
    return runner(spec, codebook)


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_format(row[c]) for c in COLUMNS])
    return buf.getvalue()


def from_csv(text: str) -> list:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ValueError("unexpected CSV header")
    rows = []
    for raw in reader:
        row = {}
        for c in COLUMNS:
            value = raw[c]
            if value == "":
                row[c] = None
            elif c in _STR_COLUMNS:
                row[c] = value
            elif c in _INT_COLUMNS:
                row[c] = int(value)
            else:
                row[c] = float(value)
        rows.append(row)
    return rows


def to_json(rows) -> str:
    return json.dumps({"columns": list(COLUMNS), "rows": [[row[c] for c in COLUMNS] for row in rows]},
                      indent=1, allow_nan=True) + "\n"


def from_json(text: str) -> list:
    data = json.loads(text)
    return [dict(zip(data["columns"], values)) for values in data["rows"]]


def write_table(rows, path, fmt: str = "csv") -> None:
    text = to_csv(rows) if fmt == "csv" else to_json(rows)
    with open(path, "w", newline="") as f:
        f.write(text)
