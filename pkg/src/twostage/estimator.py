"""Phase I: maximum-likelihood estimate of the number of active devices."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np


@dataclass(frozen=True)
class CountEstimate:
    k_hat_raw: float
    k_hat: int


def sample_covariance(y) -> np.ndarray:
    """``(1/M) Y Y^H`` for an ``L x M`` block of received samples."""
    y = np.asarray(y)
    if y.ndim != 2 or y.size == 0:
        raise ValueError("received block must be a nonempty 2-D array")
    return (y @ y.conj().T) / y.shape[1]


def round_count(k_raw: float, n_devices: int) -> int:
    # round half up after clamping to the feasible range
    return int(math.floor(min(max(k_raw, 0.0), n_devices) + 0.5))


def estimate_count(sigma_hat, s, sigma2: float, n_devices: int) -> CountEstimate:
    """Stationary point of the Phase I likelihood in K, then clamped to ``[0, N]``.

    With ``sigma_hat = K s s^H + sigma2 I`` the raw estimate is exactly ``K``.
    """
    s = np.asarray(s)
    energy = float(np.vdot(s, s).real)
    if energy <= 0:
        raise ValueError("common preamble must be nonzero")
    quad = float(np.vdot(s, np.asarray(sigma_hat) @ s).real)
    k_raw = quad / energy**2 - sigma2 / energy
    return CountEstimate(k_raw, round_count(k_raw, n_devices))


def estimation_error(k_true: int, k_hat_raw: float) -> float:
    """Per-trial normalised error ``|K - K_hat| / K``."""
    if k_true <= 0:
        raise ValueError("normalised estimation error is undefined for k_true = 0")
    return abs(k_true - k_hat_raw) / k_true
