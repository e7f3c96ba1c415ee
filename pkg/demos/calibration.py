"""
Building and reading a lookup table
===================================

The table is built by Monte Carlo: for each K, the shortest Phase II length
whose equal-error rate meets the target. Reading it uses the next larger
key when the estimate falls between two rows.
"""

from twostage import REFERENCE_TABLE, SystemConfig, calibrate_table, lookup_l2, trial_rng

for k_hat in (0, 10, 15, 100, 101, 200):
    print(f"K_hat={k_hat:4d} -> L_II={lookup_l2(REFERENCE_TABLE, k_hat)}")

###############################################################################
# A quick, coarse calibration (few trials, so expect Monte Carlo noise).

base = SystemConfig(100, 16, 0, l_phase1=4, sigma2=4.0738)
table = calibrate_table([5, 10, 20], range(4, 41), 0.1, 40, base, trial_rng(7),
                        log=print)
print(table.to_text())
