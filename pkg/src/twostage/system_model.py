"""
Signal generation for both protocol phases.

All random draws go through an explicit ``numpy.random.Generator``. Arrays
are filled row by row, so a preamble or noise block of length ``L`` is
always the prefix of the block of length ``L + 1`` drawn from the same
stream. Devices therefore own a consistent preamble at every candidate
Phase II length.

Complex Gaussian convention: unit variance means the real and imaginary
parts each have variance 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np


@dataclass(frozen=True)
class LinkBudget:
    tx_power_dBm: float = 23.0
    noise_psd_dBm_per_Hz: float = -169.0
    bandwidth_Hz: float = 10e6
    distance_km: float = 1.0
    pathloss_intercept_dB: float = 128.1
    pathloss_slope_dB_per_decade: float = 37.6

    def __post_init__(self):
        if self.bandwidth_Hz <= 0:
            raise ValueError("bandwidth_Hz must be positive")
        if self.distance_km <= 0:
            raise ValueError("distance_km must be positive")

    @property
    def pathloss_dB(self) -> float:
        return self.pathloss_intercept_dB + self.pathloss_slope_dB_per_decade * math.log10(self.distance_km)

    @property
    def noise_power_dBm(self) -> float:
        return self.noise_psd_dBm_per_Hz + 10.0 * math.log10(self.bandwidth_Hz)


@dataclass(frozen=True)
class SystemConfig:
    """Scenario parameters shared by both phases.

    ``sigma2`` is the noise power after normalising by the power-controlled
    received signal power, in linear scale.
    """
    n_devices: int
    n_antennas: int
    n_active: int
    l_phase1: int = 4
    l_phase2: int = 40
    sigma2: float = 1.0
    master_seed: int = 0

    def __post_init__(self):
        for name in ("n_devices", "n_antennas", "l_phase1", "l_phase2"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.n_active <= self.n_devices:
            raise ValueError("n_active must lie in [0, n_devices]")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    @property
    def total_preamble(self) -> int:
        return self.l_phase1 + self.l_phase2


def db_to_linear(x_dB):
    return 10.0 ** (np.asarray(x_dB, dtype=float) / 10.0)


def normalized_noise_power(budget: LinkBudget) -> float:
    """Noise power divided by the power-controlled received power, linear scale."""
    beta_dBm = budget.tx_power_dBm - budget.pathloss_dB
    return float(db_to_linear(budget.noise_power_dBm - beta_dBm))


REFERENCE_SIGMA2 = normalized_noise_power(LinkBudget())


def trial_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one trial (or any other keyed sub-stream).

    The key is mixed with the master seed by ``numpy.random.SeedSequence``,
    so streams do not depend on how trials are scheduled.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key)))


def complex_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    shape = tuple(np.atleast_1d(shape))
    parts = rng.standard_normal(shape + (2,))
    return np.sqrt(variance / 2.0) * (parts[..., 0] + 1j * parts[..., 1])


def sample_activity(n_devices: int, n_active: int, rng: np.random.Generator) -> np.ndarray:
    """0/1 vector with ``n_active`` ones at uniformly random positions."""
    if not 0 <= n_active <= n_devices:
        raise ValueError(f"n_active={n_active} must lie in [0, {n_devices}]")
    gamma = np.zeros(n_devices, dtype=np.int64)
    gamma[rng.choice(n_devices, size=n_active, replace=False)] = 1
    return gamma


def generate_common_preamble(l_phase1: int, rng: np.random.Generator) -> np.ndarray:
    return complex_gaussian(rng, l_phase1)


def generate_preambles(n_devices: int, l_phase2: int, rng: np.random.Generator) -> np.ndarray:
    """``l_phase2 x n_devices`` matrix of unit-variance complex Gaussian preambles."""
    if n_devices < 1 or l_phase2 < 1:
        raise ValueError("dimensions must be positive")
    return complex_gaussian(rng, (l_phase2, n_devices))


def _check_activity(config: SystemConfig, activity) -> np.ndarray:
    activity = np.asarray(activity)
    if activity.shape != (config.n_devices,):
        raise ValueError(f"activity has shape {activity.shape}, expected ({config.n_devices},)")
    return activity


def generate_phase1_signal(config: SystemConfig, activity, s, rng: np.random.Generator) -> np.ndarray:
    """Received ``L_I x M`` block when every active device sends the common preamble ``s``.

    Channels are drawn for all N devices (rows of an ``N x M`` matrix) so the
    stream layout does not depend on the activity pattern.
    """
    activity = _check_activity(config, activity)
    s = np.asarray(s)
    if s.shape != (config.l_phase1,):
        raise ValueError(f"common preamble has shape {s.shape}, expected ({config.l_phase1},)")
    h = complex_gaussian(rng, (config.n_devices, config.n_antennas))
    z = complex_gaussian(rng, (config.l_phase1, config.n_antennas), config.sigma2)
    return np.outer(s, activity @ h) + z


def generate_phase2_signal(config: SystemConfig, activity, S, rng: np.random.Generator) -> np.ndarray:
    """Received ``L_II x M`` block ``S diag(activity)^(1/2) H + Z``.

    ``L_II`` is taken from the number of rows of ``S``, which lets callers
    allocate the Phase II length per trial.
    """
    activity = _check_activity(config, activity)
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[1] != config.n_devices:
        raise ValueError(f"preamble matrix has shape {S.shape}, expected (L, {config.n_devices})")
    h = complex_gaussian(rng, (config.n_devices, config.n_antennas))
    z = complex_gaussian(rng, (S.shape[0], config.n_antennas), config.sigma2)
    return (S * np.sqrt(activity)) @ h + z
