"""Pinhole projection of a planar marker and the feature interaction matrix.

Conventions follow the usual computer-vision camera frame: x right, y down,
z along the optical axis.  Features are normalized image coordinates
``(X/Z, Y/Z)``; pixel coordinates are only used for the field-of-view test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics plus the sensor extent in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: float
    height: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("sensor extent must be positive")

    def to_pixels(self, features: np.ndarray) -> np.ndarray:
        """Normalized (y1, y2) pairs, shape (m, 2), to pixel coordinates."""
        feats = np.asarray(features, dtype=float).reshape(-1, 2)
        out = np.empty_like(feats)
        out[:, 0] = self.fx * feats[:, 0] + self.cx
        out[:, 1] = self.fy * feats[:, 1] + self.cy
        return out


@dataclass(frozen=True)
class Marker:
    """Planar fiducial given by its corner points in the world frame."""

    corners_world: np.ndarray

    def __init__(self, corners_world):
        pts = np.asarray(corners_world, dtype=float).reshape(-1, 3).copy()
        if pts.shape[0] < 3:
            raise ValueError("a marker needs at least 3 corners")
        object.__setattr__(self, "corners_world", pts)

    @staticmethod
    def square(size: float, center=(0.0, 0.0, 0.0)) -> "Marker":
        """Axis-aligned square of side ``size`` in the world z=0 plane."""
        if size <= 0:
            raise ValueError("marker size must be positive")
        h = 0.5 * size
        cx, cy, cz = center
        corners = np.array(
            [
                [cx - h, cy + h, cz],
                [cx + h, cy + h, cz],
                [cx + h, cy - h, cz],
                [cx - h, cy - h, cz],
            ]
        )
        return Marker(corners)

    @property
    def count(self) -> int:
        return self.corners_world.shape[0]


@dataclass(frozen=True)
class FeatureObservation:
    """Projection result for one tick.

    ``features`` is the stacked normalized-coordinate vector
    ``(y1, y2, y3, ..., y_2m)`` and ``depths`` the per-corner camera-frame
    Z.  ``visible`` is False when any corner is behind the camera, outside
    the pixel bounds, or the marker is occluded; invisibility is data, not
    an error, so the numeric fields stay populated whenever the geometry is
    defined (all Z > 0).
    """

    features: np.ndarray | None
    depths: np.ndarray | None
    visible: bool


def project(marker: Marker, camera_pose: Pose, intrinsics: Intrinsics,
            occluded: bool = False) -> FeatureObservation:
    """Project marker corners through the pinhole model.

    ``camera_pose`` is the camera pose in the world frame (from world, to
    camera).  Corners are mapped to the camera frame, divided by depth and
    bounds-checked in pixels.
    """
    pts_cam = camera_pose.inverse().transform(marker.corners_world)
    depths = pts_cam[:, 2].copy()
    if np.any(depths <= 0.0):
        return FeatureObservation(None, None, False)
    feats = pts_cam[:, :2] / depths[:, None]
    pixels = intrinsics.to_pixels(feats)
    in_fov = bool(
        np.all(pixels[:, 0] >= 0.0)
        and np.all(pixels[:, 0] <= intrinsics.width)
        and np.all(pixels[:, 1] >= 0.0)
        and np.all(pixels[:, 1] <= intrinsics.height)
    )
    visible = in_fov and not occluded
    return FeatureObservation(feats.reshape(-1), depths, visible)


def interaction_matrix(features: np.ndarray, depths: np.ndarray) -> np.ndarray:
    """Stacked 2m x 6 interaction matrix for point features.

    Row pair j relates the normalized-coordinate velocity of feature j to
    the camera twist (v, omega) written in the camera frame:

        [y1_dot]   [-1/Z    0    y1/Z   y1 y2    -(1+y1^2)   y2 ]
        [y2_dot] = [  0   -1/Z   y2/Z   1+y2^2   -y1 y2     -y1 ] . xi
    """
    feats = np.asarray(features, dtype=float).reshape(-1, 2)
    Z = np.asarray(depths, dtype=float).reshape(-1)
    if feats.shape[0] != Z.shape[0]:
        raise ValueError("features and depths disagree on the feature count")
    if np.any(Z <= 0.0):
        raise ValueError("interaction matrix undefined for non-positive depth")
    m = feats.shape[0]
    L = np.zeros((2 * m, 6))
    y1 = feats[:, 0]
    y2 = feats[:, 1]
    L[0::2, 0] = -1.0 / Z
    L[0::2, 2] = y1 / Z
    L[0::2, 3] = y1 * y2
    L[0::2, 4] = -(1.0 + y1 * y1)
    L[0::2, 5] = y2
    L[1::2, 1] = -1.0 / Z
    L[1::2, 2] = y2 / Z
    L[1::2, 3] = 1.0 + y2 * y2
    L[1::2, 4] = -y1 * y2
    L[1::2, 5] = -y1
    return L
