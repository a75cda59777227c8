"""Static arena description and its JSON loader."""

import json
import logging
import math
import re
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import ArenaConfigError
from .geometry import point_circle_distances, point_segment_distances

logger = logging.getLogger("mcf_nav.sim")

Rect = tuple[float, float, float, float]
Segment = tuple[float, float, float, float]
Circle = tuple[float, float, float]

LIDAR_BEAMS = 180
LIDAR_FOV = math.pi


class LidarSpec(BaseModel):
    """Planar range sensor, fixed to a 180-beam half circle."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    max_range: float = Field(default=5.0, gt=0.0)
    beams: int = LIDAR_BEAMS
    fov: float = LIDAR_FOV
    noise_sigma: float = Field(default=0.0, ge=0.0)

    @field_validator("beams")
    @classmethod
    def validate_beams(cls, v: int) -> int:
        if v != LIDAR_BEAMS:
            raise ValueError(f"lidar must have exactly {LIDAR_BEAMS} beams")
        return v

    @field_validator("fov")
    @classmethod
    def validate_fov(cls, v: float) -> float:
        if not math.isclose(v, LIDAR_FOV, rel_tol=1e-9):
            raise ValueError("lidar field of view must be pi radians")
        return LIDAR_FOV


def _rect_ok(rect: Rect) -> bool:
    return rect[0] < rect[2] and rect[1] < rect[3]


def _rect_inside(inner: Rect, outer: Rect) -> bool:
    return (
        inner[0] >= outer[0] and inner[1] >= outer[1] and inner[2] <= outer[2] and inner[3] <= outer[3]
    )


class WorldSpec(BaseModel):
    """Immutable 2-D arena: walls, circular obstacles, sampling regions and robot limits.

    Rectangles are ``[xmin, ymin, xmax, ymax]`` in meters.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = "arena"
    bounds: Rect
    walls: list[Segment] = Field(default_factory=list)
    circles: list[Circle] = Field(default_factory=list)
    start_region: Rect
    goal_region: Rect
    robot_radius: float = Field(default=0.2, gt=0.0)
    lidar: LidarSpec = Field(default_factory=LidarSpec)
    dt: float = Field(default=0.1, gt=0.0)
    v_max: float = Field(default=0.5, gt=0.0)
    w_max: float = Field(default=1.0, gt=0.0)
    d_threshold: float = Field(default=0.2, gt=0.0)
    max_steps: int = Field(default=500, gt=0)

    @field_validator("circles")
    @classmethod
    def validate_circles(cls, v: list[Circle]) -> list[Circle]:
        for circle in v:
            if circle[2] <= 0.0:
                raise ValueError(f"circle radius must be positive: {list(circle)}")
        return v

    @model_validator(mode="after")
    def validate_regions(self) -> "WorldSpec":
        if not _rect_ok(self.bounds):
            raise ValueError("bounds must satisfy xmin < xmax and ymin < ymax")
        for label, region in (("start_region", self.start_region), ("goal_region", self.goal_region)):
            if not _rect_ok(region):
                raise ValueError(f"{label} must satisfy xmin < xmax and ymin < ymax")
            if not _rect_inside(region, self.bounds):
                raise ValueError(f"{label} must lie inside bounds")
            corners = np.array(
                [
                    [region[0], region[1]],
                    [region[0], region[3]],
                    [region[2], region[1]],
                    [region[2], region[3]],
                    [(region[0] + region[2]) / 2.0, (region[1] + region[3]) / 2.0],
                ]
            )
            if np.any(self.clearance(corners) < self.robot_radius):
                raise ValueError(f"{label} overlaps an inflated obstacle")
        return self

    @cached_property
    def segment_array(self) -> np.ndarray:
        """Walls plus the four boundary edges as an (S, 4) array."""
        x0, y0, x1, y1 = self.bounds
        border = [(x0, y0, x1, y0), (x1, y0, x1, y1), (x1, y1, x0, y1), (x0, y1, x0, y0)]
        return np.array(list(self.walls) + border, dtype=np.float64)

    @cached_property
    def circle_array(self) -> np.ndarray:
        return np.array(self.circles, dtype=np.float64).reshape(-1, 3)

    @cached_property
    def diagonal(self) -> float:
        return math.hypot(self.bounds[2] - self.bounds[0], self.bounds[3] - self.bounds[1])

    def clearance(self, points: np.ndarray) -> np.ndarray:
        """Distance from each point (P, 2) to the nearest obstacle surface."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.minimum(
            point_segment_distances(points, self.segment_array),
            point_circle_distances(points, self.circle_array),
        )

    def is_free(self, x: float, y: float) -> bool:
        """True when a robot disc centred at (x, y) touches nothing."""
        x0, y0, x1, y1 = self.bounds
        if not (x0 < x < x1 and y0 < y < y1):
            return False
        return bool(self.clearance(np.array([[x, y]]))[0] >= self.robot_radius)

    def to_json_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = self.model_dump(mode="json")
        return data


def _line_of_key(text: str, key: str) -> int | None:
    match = re.search(rf'"{re.escape(key)}"\s*:', text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def parse_world(text: str, source: str = "<arena>") -> WorldSpec:
    """Parse and validate an arena JSON document.

    Errors carry the line of the offending top-level key when it can be found.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ArenaConfigError(f"{source}: invalid JSON: {e.msg}", line=e.lineno) from e
    if not isinstance(data, dict):
        raise ArenaConfigError(f"{source}: arena must be a JSON object", line=1)
    try:
        return WorldSpec(**data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = [str(part) for part in first["loc"]]
        line = _line_of_key(text, loc[0]) if loc else None
        location = ".".join(loc) or "<root>"
        raise ArenaConfigError(f"{source}: {location}: {first['msg']}", line=line) from e


def load_world(path: Path) -> WorldSpec:
    """Load an arena JSON file."""
    if not path.exists():
        raise ArenaConfigError(f"Arena file not found: {path}")
    return parse_world(path.read_text(encoding="utf-8"), source=str(path))
