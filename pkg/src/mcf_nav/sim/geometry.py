"""Vectorized 2-D geometry: ray casting and clearance against segments and circles."""

import math

import numpy as np

_PARALLEL_EPS = 1e-12


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def ray_segment_distances(
    origin: np.ndarray, directions: np.ndarray, segments: np.ndarray
) -> np.ndarray:
    """Distance along each ray to the nearest segment hit (``inf`` when none).

    ``directions`` is (R, 2) of unit vectors; ``segments`` is (S, 4) rows of
    ``x1, y1, x2, y2``.
    """
    n_rays = directions.shape[0]
    if segments.size == 0:
        return np.full(n_rays, np.inf)
    a = segments[:, 0:2]
    e = segments[:, 2:4] - a
    ap = a - origin  # (S, 2)
    dx = directions[:, 0:1]
    dy = directions[:, 1:2]
    denom = dx * e[:, 1] - dy * e[:, 0]  # (R, S) cross(d, e)
    t_num = ap[:, 0] * e[:, 1] - ap[:, 1] * e[:, 0]  # cross(ap, e), (S,)
    u_num = ap[:, 0] * dy - ap[:, 1] * dx  # cross(ap, d), (R, S)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num / denom
        u = u_num / denom
    valid = (np.abs(denom) > _PARALLEL_EPS) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    t = np.where(valid, t, np.inf)
    result: np.ndarray = t.min(axis=1)
    return result


def ray_circle_distances(
    origin: np.ndarray, directions: np.ndarray, circles: np.ndarray
) -> np.ndarray:
    """Distance along each ray to the nearest circle boundary (``inf`` when none).

    ``circles`` is (C, 3) rows of ``cx, cy, r``.
    """
    n_rays = directions.shape[0]
    if circles.size == 0:
        return np.full(n_rays, np.inf)
    f = origin - circles[:, 0:2]  # (C, 2)
    b = directions @ f.T  # (R, C)
    c = np.sum(f * f, axis=1) - circles[:, 2] ** 2  # (C,)
    disc = b * b - c
    hit = disc >= 0.0
    root = np.sqrt(np.where(hit, disc, 0.0))
    near = -b - root
    far = -b + root
    t = np.where(near >= 0.0, near, far)
    t = np.where(hit & (t >= 0.0), t, np.inf)
    result: np.ndarray = t.min(axis=1)
    return result


def point_segment_distances(points: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Distance from each point (P, 2) to the nearest segment; ``inf`` without segments."""
    if segments.size == 0:
        return np.full(points.shape[0], np.inf)
    a = segments[:, 0:2]
    e = segments[:, 2:4] - a
    length_sq = np.sum(e * e, axis=1)
    safe_len = np.where(length_sq > 0.0, length_sq, 1.0)
    rel = points[:, None, :] - a[None, :, :]  # (P, S, 2)
    t = np.clip(np.sum(rel * e[None, :, :], axis=2) / safe_len, 0.0, 1.0)
    t = np.where(length_sq > 0.0, t, 0.0)
    closest = a[None, :, :] + t[:, :, None] * e[None, :, :]
    dist = np.linalg.norm(points[:, None, :] - closest, axis=2)
    result: np.ndarray = dist.min(axis=1)
    return result


def point_circle_distances(points: np.ndarray, circles: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest circle surface (negative inside)."""
    if circles.size == 0:
        return np.full(points.shape[0], np.inf)
    centers = np.linalg.norm(points[:, None, :] - circles[None, :, 0:2], axis=2)
    result: np.ndarray = (centers - circles[None, :, 2]).min(axis=1)
    return result
