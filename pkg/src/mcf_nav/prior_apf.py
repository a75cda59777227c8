"""Artificial-potential-field prior controller and its action distributions.

The field is evaluated in the robot frame: a unit attraction toward the goal
bearing plus, for every lidar beam closer than ``influence_radius``, a push
away from the beam direction of magnitude ``k_rep * (1/r - 1/R)**2``. The
heading error to the net force drives the turn rate; forward speed follows
its cosine, scaled down when the nearest range in the frontal sector
(bearings within 45 degrees of the heading) drops below ``slowdown_radius``.
Obstacles beside or behind the robot only act through the repulsive term.
"""

import logging
import math
from typing import NamedTuple

import numpy as np

from .config import ApfConfig
from .gaussfuse import ENSEMBLE_EPSILON, DiagGaussian2, Gaussian1

logger = logging.getLogger("mcf_nav.prior")

LIDAR_BEAMS = 180
MIN_RANGE = 1e-3
_DEGENERATE_FORCE = 1e-12
FRONT_SECTOR = math.pi / 4.0


class ApfAction(NamedTuple):
    v: float
    w: float
    heading_error: float
    degenerate: bool


class PriorEstimate(NamedTuple):
    """Monte Carlo prior and the share of samples whose field cancelled exactly."""

    distribution: DiagGaussian2
    degenerate: float


def _bearings(n: int = LIDAR_BEAMS) -> np.ndarray:
    return -math.pi / 2.0 + np.arange(n) * (math.pi / (n - 1))


_BEARINGS = _bearings()
_COS = np.cos(_BEARINGS)
_SIN = np.sin(_BEARINGS)
_FRONT = np.abs(_BEARINGS) <= FRONT_SECTOR


def _apf_batch(
    scans: np.ndarray, angle_to_goal: float, cfg: ApfConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Field law over a batch of scans (B, 180) → (v, w, heading_error, degenerate)."""
    r = np.maximum(scans, MIN_RANGE)
    inside = r < cfg.influence_radius
    magnitude = np.where(inside, cfg.k_rep * (1.0 / r - 1.0 / cfg.influence_radius) ** 2, 0.0)
    fx = cfg.k_att * math.cos(angle_to_goal) - magnitude @ _COS
    fy = cfg.k_att * math.sin(angle_to_goal) - magnitude @ _SIN

    degenerate = np.hypot(fx, fy) < _DEGENERATE_FORCE
    heading_error = np.arctan2(fy, fx)
    w = np.clip(cfg.k_heading * heading_error, -1.0, 1.0)
    caution = np.minimum(1.0, r[:, _FRONT].min(axis=1) / cfg.slowdown_radius)
    v = np.clip(np.cos(heading_error) * caution, 0.0, 1.0)

    v = np.where(degenerate, 0.0, v)
    w = np.where(degenerate, 0.0, w)
    heading_error = np.where(degenerate, 0.0, heading_error)
    return v, w, heading_error, degenerate


def _check_scan(scan: np.ndarray) -> np.ndarray:
    scan = np.asarray(scan, dtype=np.float64)
    if scan.shape != (LIDAR_BEAMS,):
        raise ValueError(f"scan must have {LIDAR_BEAMS} ranges, got {scan.shape}")
    return scan


def apf_action(scan: np.ndarray, angle_to_goal: float, cfg: ApfConfig) -> ApfAction:
    """Deterministic (v, w) in [0, 1] x [-1, 1] for one scan.

    ``angle_to_goal`` is the goal bearing in radians. An exactly cancelling
    field yields (0, 0) with ``degenerate`` set.
    """
    scan = _check_scan(scan)
    v, w, heading, degenerate = _apf_batch(scan[None, :], angle_to_goal, cfg)
    if degenerate[0]:
        logger.debug("Potential field cancelled exactly; holding still")
    return ApfAction(float(v[0]), float(w[0]), float(heading[0]), bool(degenerate[0]))


def prior_distribution_mc(
    scan: np.ndarray,
    angle_to_goal: float,
    cfg: ApfConfig,
    rng: np.random.Generator,
    max_range: float = 5.0,
) -> PriorEstimate:
    """Propagate laser noise through the field law by Monte Carlo sampling.

    Each dimension's variance is ``max(sample variance, variance_floor_c)``.
    Degenerate samples contribute a (0, 0) action.
    """
    scan = _check_scan(scan)
    noise = rng.normal(0.0, cfg.sensor_sigma, size=(cfg.mc_samples, LIDAR_BEAMS))
    noisy = np.clip(scan[None, :] + noise, MIN_RANGE, max_range)
    v, w, _, degenerate = _apf_batch(noisy, angle_to_goal, cfg)
    if degenerate.any():
        logger.debug("%d of %d MC samples hit a cancelling field", int(degenerate.sum()), len(v))
    floor = max(cfg.variance_floor_c, ENSEMBLE_EPSILON)
    distribution = DiagGaussian2(
        Gaussian1(float(v.mean()), max(float(v.var()), floor)),
        Gaussian1(float(w.mean()), max(float(w.var()), floor)),
    )
    return PriorEstimate(distribution, float(degenerate.mean()))


def prior_distribution_train(
    scan: np.ndarray, angle_to_goal: float, cfg: ApfConfig
) -> DiagGaussian2:
    """Fixed-width exploration distribution around the deterministic action."""
    action = apf_action(scan, angle_to_goal, cfg)
    var = cfg.train_sigma * cfg.train_sigma
    return DiagGaussian2(Gaussian1(action.v, var), Gaussian1(action.w, var))
