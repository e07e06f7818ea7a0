"""Planar poses and angle arithmetic.

World frame convention used everywhere: x right, y up, theta counter-clockwise
from +x, radians, normalized to (-pi, pi].
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    r = math.remainder(a, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized wrap to [-pi, pi); the open/closed boundary is irrelevant
    for array math (weights, residuals)."""
    return np.mod(np.asarray(a) + math.pi, TWO_PI) - math.pi


class Pose(NamedTuple):
    x: float
    y: float
    theta: float

    def compose(self, other: "Pose") -> "Pose":
        """Pose of `other` (given in this pose's frame) in the world frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            wrap_angle(self.theta + other.theta),
        )

    def inverse_transform(self, point_x: float, point_y: float) -> tuple[float, float]:
        """World point expressed in this pose's frame."""
        dx, dy = point_x - self.x, point_y - self.y
        c, s = math.cos(self.theta), math.sin(self.theta)
        return c * dx + s * dy, -s * dx + c * dy

    def relative_pose(self, other: "Pose") -> "Pose":
        """`other` expressed in this pose's frame (inverse of compose)."""
        rx, ry = self.inverse_transform(other.x, other.y)
        return Pose(rx, ry, wrap_angle(other.theta - self.theta))


def distance(a: Pose | tuple[float, float], b: Pose | tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def heading_to(from_x: float, from_y: float, to_x: float, to_y: float) -> float:
    return math.atan2(to_y - from_y, to_x - from_x)
