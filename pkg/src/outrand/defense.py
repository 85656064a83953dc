"""Output randomization d(p) = p + eps: sampling, flip rates, calibration.

The released vector is the raw sum; it is never clipped or renormalized, so
entries may be negative and need not sum to one. Calibration maps a target
flip rate K onto a Gaussian variance through the probit.

Two calibration conventions ship side by side. The printed derivation
standardizes the pairwise comparison by the variance sigma_i^2 + sigma_1^2
where the CDF of a Gaussian difference requires the standard deviation
sqrt(sigma_i^2 + sigma_1^2). ``PAPER_FAITHFUL`` reproduces the printed form
verbatim; ``CORRECTED`` uses the square root and is the default because only
it survives Monte Carlo validation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .stats import normal_cdf, normal_quantile


class CalibrationMode(Enum):
    PAPER_FAITHFUL = "paper"
    CORRECTED = "corrected"


@dataclass(frozen=True)
class NoiseModel:
    """Per-class Gaussian parameters for the additive output noise."""

    mu: np.ndarray      # (C,)
    sigma2: np.ndarray  # (C,), each >= 0

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma2 = np.atleast_1d(np.asarray(self.sigma2, dtype=float))
        if mu.shape != sigma2.shape or mu.ndim != 1:
            raise ValueError("mu and sigma2 must be 1-D with matching length")
        if np.any(sigma2 < 0.0):
            raise ValueError("variances must be non-negative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma2", sigma2)

    @classmethod
    def isotropic(cls, sigma2: float, num_classes: int) -> "NoiseModel":
        """Zero-mean noise with one shared variance across classes."""
        return cls(np.zeros(num_classes), np.full(num_classes, float(sigma2)))

    @property
    def num_classes(self) -> int:
        return self.mu.shape[0]

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.sigma2 == 0.0) and np.all(self.mu == 0.0))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Draw eps; shape (C,) or (size, C)."""
        shape = self.mu.shape if size is None else (size, self.num_classes)
        return rng.normal(self.mu, np.sqrt(self.sigma2), size=shape)


def randomize_output(p: np.ndarray, noise: NoiseModel,
                     rng: np.random.Generator) -> np.ndarray:
    """d(p) = p + eps with a fresh draw; no clipping, no renormalization."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != noise.num_classes:
        raise ValueError(f"output has {p.shape[-1]} classes, noise expects {noise.num_classes}")
    return p + noise.sample(rng)


def pairwise_flip_probability(delta: float, sigma2_top: float, sigma2_other: float,
                              mu_top: float = 0.0, mu_other: float = 0.0,
                              mode: CalibrationMode = CalibrationMode.CORRECTED) -> float:
    """P(d(p_i) > d(p_1)) for one competitor class at confidence gap delta.

    The noise difference e_i = eps_i - eps_1 is Gaussian with mean
    mu_other - mu_top and variance sigma2_other + sigma2_top, so the flip
    probability is Phi(-(delta - mu_other + mu_top) / s) with s the combined
    standard deviation (CORRECTED) or the combined variance as printed
    (PAPER_FAITHFUL).
    """
    if delta < 0.0:
        raise ValueError("confidence gap delta must be >= 0")
    num = delta - mu_other + mu_top
    var = sigma2_other + sigma2_top
    if var == 0.0:
        if num == 0.0:
            return 0.5
        return 0.0 if num > 0.0 else 1.0
    denom = var if mode is CalibrationMode.PAPER_FAITHFUL else np.sqrt(var)
    return normal_cdf(-num / denom)


def calibrate_variance(k: float, delta: float,
                       mode: CalibrationMode = CalibrationMode.CORRECTED) -> float:
    """Variance of zero-mean isotropic noise that flips the pair at rate K.

    PAPER_FAITHFUL inverts the printed expression, -delta / (2 probit(K));
    CORRECTED inverts the standard-deviation-normalized flip probability,
    giving delta^2 / (2 probit(K)^2).
    """
    if not 0.0 < k < 0.5:
        raise ValueError(f"target misclassification rate must lie in (0, 0.5), got {k}")
    if delta <= 0.0:
        raise ValueError(f"confidence gap must be positive, got {delta}")
    q = normal_quantile(k)  # negative for k < 0.5
    if mode is CalibrationMode.PAPER_FAITHFUL:
        return -delta / (2.0 * q)
    return delta * delta / (2.0 * q * q)


def misclassification_rate(p: np.ndarray, noise: NoiseModel,
                           method: str = "union_bound",
                           mode: CalibrationMode = CalibrationMode.CORRECTED,
                           n_samples: int = 100_000, seed: int = 0) -> float:
    """Probability that the noise alone moves the argmax of the released vector.

    ``monte_carlo`` measures the flip fraction over ``n_samples`` fresh draws
    (exact in the limit, mode-independent). ``union_bound`` sums the pairwise
    flip probabilities against the top class and caps at 1 (Bonferroni).
    """
    p = np.asarray(p, dtype=float)
    top = int(np.argmax(p))
    if method == "monte_carlo":
        if n_samples < 1:
            raise ValueError("monte_carlo needs n_samples >= 1")
        rng = np.random.default_rng(seed)
        draws = p + noise.sample(rng, size=n_samples)
        return float(np.mean(np.argmax(draws, axis=1) != top))
    if method == "union_bound":
        total = 0.0
        for j in range(p.shape[0]):
            if j == top:
                continue
            total += pairwise_flip_probability(
                float(p[top] - p[j]), float(noise.sigma2[top]), float(noise.sigma2[j]),
                float(noise.mu[top]), float(noise.mu[j]), mode)
        return min(1.0, total)
    raise ValueError(f"unknown method {method!r}")
