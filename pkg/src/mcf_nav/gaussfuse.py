"""Closed-form fusion of independent Gaussian action distributions.

Actions are two-dimensional (linear velocity ``v``, angular velocity ``w``)
and every distribution is a product of two independent 1-D Gaussians, so all
fusion rules below act dimension by dimension.

Plain product (deployment)::

    mu'  = (mu_t * var_p + mu_p * var_t) / (var_p + var_t)
    var' = var_t * var_p / (var_p + var_t)

Gated product ``pi_t ** (1 - a) * pi_p ** a`` (training)::

    mu'  = (mu_t * var_p * (1 - a) + mu_p * var_t * a) / (var_p * (1 - a) + var_t * a)
    var' = var_t * var_p / (var_p * (1 - a) + var_t * a)
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientEnsembleError, InvalidDistributionError, ParameterError

ENSEMBLE_EPSILON = 1e-6
ACTION_LOW = -1.0
ACTION_HIGH = 1.0


@dataclass(frozen=True)
class Gaussian1:
    """A 1-D Gaussian in normalized action units."""

    mean: float
    var: float

    def validate(self) -> None:
        if not math.isfinite(self.mean) or not math.isfinite(self.var):
            raise InvalidDistributionError(f"non-finite Gaussian: N({self.mean}, {self.var})")
        if self.var <= 0.0:
            raise InvalidDistributionError(f"variance must be positive, got {self.var}")

    @property
    def std(self) -> float:
        return math.sqrt(self.var)


@dataclass(frozen=True)
class DiagGaussian2:
    """Independent Gaussians over the (linear, angular) action dimensions."""

    v: Gaussian1
    w: Gaussian1

    @classmethod
    def from_arrays(cls, mean: Sequence[float], var: Sequence[float]) -> "DiagGaussian2":
        return cls(Gaussian1(float(mean[0]), float(var[0])), Gaussian1(float(mean[1]), float(var[1])))

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.v.mean, self.w.mean])

    @property
    def var(self) -> np.ndarray:
        return np.array([self.v.var, self.w.var])

    def validate(self) -> None:
        self.v.validate()
        self.w.validate()

    def to_row(self) -> tuple[float, float, float, float]:
        """Serialized form: (mean_v, var_v, mean_w, var_w)."""
        return (self.v.mean, self.v.var, self.w.mean, self.w.var)

    @classmethod
    def from_row(cls, row: Sequence[float]) -> "DiagGaussian2":
        return cls(Gaussian1(float(row[0]), float(row[1])), Gaussian1(float(row[2]), float(row[3])))


def _product_1d(policy: Gaussian1, prior: Gaussian1) -> Gaussian1:
    denom = prior.var + policy.var
    mean = (policy.mean * prior.var + prior.mean * policy.var) / denom
    var = policy.var * prior.var / denom
    # rounding can leave the mean a hair outside the bracket
    lo, hi = min(policy.mean, prior.mean), max(policy.mean, prior.mean)
    return Gaussian1(min(max(mean, lo), hi), var)


def _gated_1d(policy: Gaussian1, prior: Gaussian1, alpha: float) -> Gaussian1:
    if alpha == 0.0:
        return policy
    if alpha == 1.0:
        return prior
    w_policy = prior.var * (1.0 - alpha)
    w_prior = policy.var * alpha
    denom = w_policy + w_prior
    mean = (policy.mean * w_policy + prior.mean * w_prior) / denom
    var = policy.var * prior.var / denom
    return Gaussian1(mean, var)


def fuse_product(policy: DiagGaussian2, prior: DiagGaussian2) -> DiagGaussian2:
    """Normalized product of two Gaussian action distributions."""
    policy.validate()
    prior.validate()
    return DiagGaussian2(_product_1d(policy.v, prior.v), _product_1d(policy.w, prior.w))


def fuse_gated(policy: DiagGaussian2, prior: DiagGaussian2, alpha: float) -> DiagGaussian2:
    """Product of ``policy ** (1 - alpha)`` and ``prior ** alpha``.

    ``alpha = 1`` returns the prior and ``alpha = 0`` the policy, exactly.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    policy.validate()
    prior.validate()
    return DiagGaussian2(_gated_1d(policy.v, prior.v, alpha), _gated_1d(policy.w, prior.w, alpha))


def aggregate_ensemble(
    means: Sequence[Sequence[float]], epsilon: float = ENSEMBLE_EPSILON
) -> DiagGaussian2:
    """Collapse ensemble member mean actions into one Gaussian.

    Mean is the average of the member means; variance is their population
    variance, floored at ``epsilon``.
    """
    if len(means) < 2:
        raise InsufficientEnsembleError(f"need at least 2 ensemble members, got {len(means)}")
    stacked = np.asarray(means, dtype=np.float64)
    if stacked.ndim != 2 or stacked.shape[1] != 2:
        raise ParameterError(f"expected (n, 2) member means, got shape {stacked.shape}")
    if not np.all(np.isfinite(stacked)):
        raise InvalidDistributionError("non-finite ensemble member mean")
    mean = stacked.mean(axis=0)
    var = np.maximum(stacked.var(axis=0), epsilon)
    return DiagGaussian2.from_arrays(mean, var)


@dataclass(frozen=True)
class GatingSchedule:
    """Reverse-logistic gate ``alpha(t) = 1 / (1 + exp(k * (t - t0)))``."""

    midpoint_step: int
    steepness: float
    total_steps: int

    def __post_init__(self) -> None:
        if self.total_steps <= 0:
            raise ParameterError("total_steps must be positive")
        if self.midpoint_step < 0:
            raise ParameterError("midpoint_step must be non-negative")
        if self.steepness <= 0.0:
            raise ParameterError("steepness must be positive")
        if not alpha_at(self, 0) > 0.5 or not alpha_at(self, self.total_steps) < 0.5:
            raise ParameterError(
                "schedule must start above 0.5 and end below 0.5 "
                f"(midpoint {self.midpoint_step}, total {self.total_steps})"
            )

    @classmethod
    def default(cls, total_steps: int) -> "GatingSchedule":
        return cls(
            midpoint_step=max(1, round(0.4 * total_steps)),
            steepness=10.0 / total_steps,
            total_steps=total_steps,
        )


def alpha_at(schedule: GatingSchedule, step: int) -> float:
    """Prior weight at training ``step``; 1 is pure prior, 0 pure policy."""
    if step < 0:
        raise ParameterError(f"step must be non-negative, got {step}")
    z = schedule.steepness * (step - schedule.midpoint_step)
    if z >= 0.0:
        e = math.exp(-z)
        value = e / (1.0 + e)
    else:
        value = 1.0 / (1.0 + math.exp(z))
    return min(1.0, max(0.0, value))


def apply_noise(dist: DiagGaussian2, noise: Sequence[float]) -> tuple[float, float]:
    """Turn standard-normal draws into an action clamped to the action box."""
    v = dist.v.mean + dist.v.std * float(noise[0])
    w = dist.w.mean + dist.w.std * float(noise[1])
    return (
        min(max(v, ACTION_LOW), ACTION_HIGH),
        min(max(w, ACTION_LOW), ACTION_HIGH),
    )


def sample(dist: DiagGaussian2, rng: np.random.Generator) -> tuple[float, float]:
    """Draw an action from ``dist`` and clamp it to [-1, 1] per dimension."""
    return apply_noise(dist, rng.standard_normal(2))


def sample_with_noise(
    dist: DiagGaussian2, rng: np.random.Generator
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Like :func:`sample` but also returns the raw draws, for trace replay."""
    noise = rng.standard_normal(2)
    return apply_noise(dist, noise), (float(noise[0]), float(noise[1]))


def disagreement(policy: DiagGaussian2, prior: DiagGaussian2) -> tuple[float, float]:
    """Per-dimension absolute gap between the two means."""
    return (abs(policy.v.mean - prior.v.mean), abs(policy.w.mean - prior.w.mean))
