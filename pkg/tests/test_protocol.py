import numpy as np
import pytest

from twostage.detector import DetectionProblem
from twostage.metrics import mdp_fap
from twostage.protocol import (REFERENCE_TABLE, CalibrationError, Codebook, LookupTable, SolverParams,
                               TableRangeError, calibrate_table, detection_eer, lookup_l2, run_detector,
                               run_grant_free, run_two_stage)
from twostage.system_model import SystemConfig, generate_phase2_signal, trial_rng


@pytest.mark.parametrize("k_hat, l2", [
    (0, 15), (3, 15), (10, 15), (11, 25), (15, 25), (20, 25), (65, 75), (100, 78), (101, 80), (200, 170), (300, 270),
])
def test_lookup_boundary_rule(k_hat, l2):
    assert lookup_l2(REFERENCE_TABLE, k_hat) == l2


def test_lookup_out_of_range():
    with pytest.raises(TableRangeError):
        lookup_l2(REFERENCE_TABLE, 301)
    with pytest.raises(ValueError):
        lookup_l2(REFERENCE_TABLE, -1)


def test_lookup_monotone():
    values = [lookup_l2(REFERENCE_TABLE, k) for k in range(0, 301)]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_table_validation():
    with pytest.raises(ValueError):
        LookupTable(((10, 5), (10, 6)))
    with pytest.raises(ValueError):
        LookupTable(((10, 5), (20, 4)))
    with pytest.raises(ValueError):
        LookupTable(((10, 0),))
    with pytest.raises(ValueError):
        LookupTable(())


def test_table_file_round_trip(tmp_path):
    path = tmp_path / "table.csv"
    REFERENCE_TABLE.write(path)
    text = path.read_text()
    assert text.splitlines()[0] == "# threshold=0.01 M=32 N=1000"
    assert text.splitlines()[1] == "10,15"
    assert LookupTable.read(path) == REFERENCE_TABLE


def _config(k, n=60, m=8, l1=4, sigma2=1.0):
    return SystemConfig(n, m, k, l_phase1=l1, sigma2=sigma2)


def test_calibrate_vacuous_threshold():
    table = calibrate_table([2, 4, 6], range(3, 9), 1.0, 3, _config(0), trial_rng(1))
    assert table.entries == ((2, 3), (4, 3), (6, 3))
    assert (table.threshold, table.m_antennas, table.n_devices) == (1.0, 8, 60)


def test_calibrate_monotone_and_minimal():
    base = _config(0)
    table = calibrate_table([2, 6, 10], range(2, 25), 0.15, 20, base, trial_rng(2))
    l2s = [l2 for _, l2 in table.entries]
    assert l2s == sorted(l2s)
    # the first entry is the smallest passing length on the same random numbers
    rng = trial_rng(2)
    seed = int(rng.integers(2**63))
    codebook = Codebook.draw(0, 24, 60, rng)
    cfg = _config(2)
    first = table.entries[0][1]
    assert detection_eer(cfg, first, 20, codebook, seed, (2,)) <= 0.15
    if first > 2:
        assert detection_eer(cfg, first - 1, 20, codebook, seed, (2,)) > 0.15


def test_calibrate_failure_names_k():
    with pytest.raises(CalibrationError, match="K=10"):
        calibrate_table([10], [2], 1e-3, 5, _config(0), trial_rng(3))


def test_calibrate_argument_checks():
    with pytest.raises(ValueError):
        calibrate_table([5, 3], [4], 0.1, 5, _config(0))
    with pytest.raises(ValueError):
        calibrate_table([3], [4], 0.0, 5, _config(0))
    with pytest.raises(ValueError):
        calibrate_table([3], [], 0.1, 5, _config(0))


def test_two_stage_with_no_active_devices():
    out = run_two_stage(_config(0, sigma2=1e-6), REFERENCE_TABLE, SolverParams("kcd"), trial_rng(4))
    assert out.k_hat == 0 and out.k_true == 0
    assert out.l2_allocated == 15 and out.total_preamble == 19
    assert np.all(out.soft_scores <= 1e-3)
    assert mdp_fap(out.truth, out.soft_scores, 0.5).mdp is None
    assert mdp_fap(out.truth, out.soft_scores, 0.5).fap == 0.0


def test_grant_free_with_no_active_devices():
    out = run_grant_free(_config(0, sigma2=0.5), 12, None, trial_rng(5))
    assert out.total_preamble == 12 and out.l1 == 0 and out.k_hat is None
    assert out.solver_report.converged
    assert mdp_fap(out.truth, out.soft_scores, 0.5).fap <= 0.02
    with pytest.raises(ValueError):
        run_grant_free(_config(0), 0, None, trial_rng(5))


def test_two_stage_is_deterministic():
    table = LookupTable(((5, 12), (10, 16), (20, 24)))
    a = run_two_stage(_config(8), table, SolverParams(), trial_rng(6, 1))
    b = run_two_stage(_config(8), table, SolverParams(), trial_rng(6, 1))
    assert a.k_hat == b.k_hat and a.l2_allocated == b.l2_allocated
    assert a.soft_scores.tobytes() == b.soft_scores.tobytes()
    assert a.truth.tobytes() == b.truth.tobytes()
    assert a.solver_report.flops == b.solver_report.flops


def test_two_stage_allocation_follows_estimate():
    table = LookupTable(((5, 12), (10, 16), (20, 24)))
    for t in range(20):
        out = run_two_stage(_config(8), table, SolverParams(), trial_rng(7, t))
        assert out.l2_allocated == lookup_l2(table, min(out.k_hat, 20))
        assert out.total_preamble == out.l1 + out.l2_allocated
        assert out.out_of_table == (out.k_hat > 20)


def test_out_of_table_is_clamped_and_flagged():
    table = LookupTable(((1, 10),))
    out = run_two_stage(_config(20), table, SolverParams(), trial_rng(8))
    assert out.k_hat > 1 and out.out_of_table and out.l2_allocated == 10


def test_vacuous_table_matches_grant_free():
    cfg = _config(6)
    table = LookupTable(((cfg.n_devices, 14),))
    cd = SolverParams("cd")
    codebook = Codebook.draw(4, 14, cfg.n_devices, trial_rng(9, 0))
    for t in range(10):
        two = run_two_stage(cfg, table, cd, trial_rng(9, t), codebook)
        free = run_grant_free(cfg, 14, cd, trial_rng(9, t), codebook)
        assert two.l2_allocated == free.l2_allocated == 14
        np.testing.assert_array_equal(two.truth, free.truth)
        np.testing.assert_array_equal(two.soft_scores, free.soft_scores)
        assert two.total_preamble == free.total_preamble + 4


def test_codebook_prefix_and_bounds():
    cb = Codebook.draw(4, 30, 10, trial_rng(10))
    assert cb.preambles(12).shape == (12, 10)
    np.testing.assert_array_equal(cb.preambles(12), cb.preambles(30)[:12])
    with pytest.raises(ValueError):
        cb.preambles(31)
    with pytest.raises(ValueError):
        cb.common(5)


def test_solver_params():
    with pytest.raises(ValueError):
        SolverParams("newton")
    p = SolverParams("kcd", epsilon=1e-4).with_solver("cd")
    assert p.solver == "cd" and p.epsilon == 1e-4


def test_run_detector_dispatch():
    cfg = _config(5)
    codebook = Codebook.draw(0, 16, cfg.n_devices, trial_rng(11))
    out = run_grant_free(cfg, 16, SolverParams("cd"), trial_rng(11, 1), codebook)
    S = codebook.preambles(16)
    y = generate_phase2_signal(cfg, out.truth, S, trial_rng(11, 2))
    problem = DetectionProblem.from_signal(S, y, cfg.sigma2)
    for name in ("cd", "active-set", "kcd"):
        report = run_detector(problem, SolverParams(name), 5)
        assert report.converged, name
    # K-CD clamps an oversized estimate to N
    assert run_detector(problem, SolverParams("kcd"), 10_000).converged


@pytest.mark.slow
def test_calibration_agrees_with_rescan():
    # rescan a window around each calibrated length at four times the trials, on independent seeds
    base = SystemConfig(200, 16, 0, l_phase1=4, sigma2=4.0738)
    table = calibrate_table([10, 20, 30], range(4, 41), 0.1, 200, base, trial_rng(21))
    codebook = Codebook.draw(0, 40, 200, trial_rng(22))
    for k, found in table.entries:
        cfg = SystemConfig(200, 16, k, sigma2=4.0738)
        window = range(max(found - 2, 4), found + 3)
        passing = [detection_eer(cfg, l2, 800, codebook, 23, (k,)) <= 0.1 for l2 in window]
        # smallest length from which every longer one in the window passes
        rescan = next(l2 for i, l2 in enumerate(window) if all(passing[i:]))
        assert abs(rescan - found) <= 1, (k, found, rescan, passing)
