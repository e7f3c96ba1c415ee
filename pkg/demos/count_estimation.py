"""
Counting active devices with four symbols
=========================================

Every device sends the same short preamble. The received covariance then
carries the number of active devices along one direction, and a single
quadratic form reads it back.
"""

import numpy as np

from twostage import (LinkBudget, SystemConfig, estimate_count, generate_phase1_signal, normalized_noise_power,
                      sample_activity, sample_covariance, trial_rng)
from twostage.system_model import generate_common_preamble

# Noise power after normalising by the received signal power at 1 km.
sigma2 = normalized_noise_power(LinkBudget(distance_km=1.0))
print(f"normalised noise power: {sigma2:.4f}")

s = generate_common_preamble(4, trial_rng(0, 0))

###############################################################################
# The estimate is unbiased; its spread shrinks as antennas are added.

for m in (15, 32, 128):
    for k in (50, 200):
        cfg = SystemConfig(1000, m, k, l_phase1=4, sigma2=sigma2)
        rng = trial_rng(0, m, k)
        est = []
        for _ in range(500):
            truth = sample_activity(1000, k, rng)
            y = generate_phase1_signal(cfg, truth, s, rng)
            est.append(estimate_count(sample_covariance(y), s, sigma2, 1000).k_hat_raw)
        est = np.array(est)
        print(f"M={m:4d} K={k:4d}  mean K_hat {est.mean():7.2f}  mean |K-K_hat|/K {np.mean(np.abs(est - k)) / k:.3f}")
