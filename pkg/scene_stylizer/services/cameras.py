"""
Pinhole cameras and camera paths.

Camera space is +x right, +y down, +z forward into the scene. Pixel (u, v)
(column, row) is centred at image coordinate (u + 0.5, v + 0.5).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from scene_stylizer.exceptions import ValidationError

RIGID_TOL = 1e-6
WORLD_UP = np.array([0.0, 0.0, 1.0])

_POSE_PATH = re.compile(r"^(circle|arc)(\d+)$")


@dataclass
class Camera:
	fx: float
	fy: float
	cx: float
	cy: float
	width: int
	height: int
	c2w: np.ndarray = field(default_factory=lambda: np.eye(4))
	near: float = 0.5
	far: float = 6.0

	def __post_init__(self):
		self.c2w = np.array(self.c2w, dtype=np.float64)
		if self.c2w.shape == (3, 4):
			self.c2w = np.vstack([self.c2w, [0.0, 0.0, 0.0, 1.0]])
		if self.c2w.shape != (4, 4):
			raise ValidationError(f"camera pose must be 4x4, got {self.c2w.shape}", module="renderer")
		if self.fx <= 0 or self.fy <= 0:
			raise ValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}", module="renderer")
		if not 0 < self.near < self.far:
			raise ValidationError(f"need 0 < near < far, got near={self.near}, far={self.far}", module="renderer")
		if self.width < 1 or self.height < 1:
			raise ValidationError(f"image size must be positive, got {self.width}x{self.height}", module="renderer")
		rotation = self.c2w[:3, :3]
		residual = np.max(np.abs(rotation.T @ rotation - np.eye(3)))
		if residual >= RIGID_TOL or not np.allclose(self.c2w[3], [0.0, 0.0, 0.0, 1.0]):
			raise ValidationError(f"camera pose is not rigid (|R^T R - I| = {residual:.3g})", module="renderer")

	@property
	def rotation(self) -> np.ndarray:
		return self.c2w[:3, :3]

	@property
	def center(self) -> np.ndarray:
		return self.c2w[:3, 3]

	@property
	def forward(self) -> np.ndarray:
		return self.c2w[:3, 2]

	@property
	def shape(self) -> tuple[int, int]:
		return self.height, self.width

	def resized(self, width: int, height: int) -> "Camera":
		"""Same pose, intrinsics scaled to a new image size."""
		sx, sy = width / self.width, height / self.height
		return Camera(
			self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height, self.c2w.copy(), self.near, self.far
		)

	def with_pose(self, c2w: np.ndarray) -> "Camera":
		return Camera(self.fx, self.fy, self.cx, self.cy, self.width, self.height, c2w, self.near, self.far)

	def world_to_camera(self, points: np.ndarray) -> np.ndarray:
		return (np.asarray(points, dtype=np.float64) - self.center) @ self.rotation

	def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
		"""
		Project world points.

		Returns:
			(uv, z, dist): continuous image coordinates (N, 2), optical-axis depth (N,)
			and distance from the camera centre (N,). uv is NaN where z <= 0.
		"""
		cam = self.world_to_camera(points)
		z = cam[:, 2]
		with np.errstate(divide="ignore", invalid="ignore"):
			u = self.fx * cam[:, 0] / z + self.cx
			v = self.fy * cam[:, 1] / z + self.cy
		uv = np.stack([u, v], axis=1)
		uv[z <= 0] = np.nan
		return uv, z, np.linalg.norm(cam, axis=1)

	def to_dict(self) -> Dict[str, Any]:
		return {
			"fx": self.fx,
			"fy": self.fy,
			"cx": self.cx,
			"cy": self.cy,
			"width": self.width,
			"height": self.height,
			"near": self.near,
			"far": self.far,
			"c2w": self.c2w.tolist(),
		}

	@classmethod
	def from_dict(cls, data: Dict[str, Any]) -> "Camera":
		try:
			return cls(
				float(data["fx"]),
				float(data["fy"]),
				float(data["cx"]),
				float(data["cy"]),
				int(data["width"]),
				int(data["height"]),
				np.array(data["c2w"], dtype=np.float64),
				float(data["near"]),
				float(data["far"]),
			)
		except KeyError as e:
			raise ValidationError(f"camera record is missing '{e.args[0]}'", module="renderer")


def look_at(eye: Sequence[float], target: Sequence[float], up: Sequence[float] = WORLD_UP) -> np.ndarray:
	"""4x4 camera-to-world pose at eye with +z towards target and +y pointing away from up."""
	eye = np.asarray(eye, dtype=np.float64)
	forward = np.asarray(target, dtype=np.float64) - eye
	norm = np.linalg.norm(forward)
	if norm == 0:
		raise ValidationError("look_at: eye and target coincide", module="renderer")
	z = forward / norm
	x = np.cross(z, up)
	if np.linalg.norm(x) < 1e-12:
		raise ValidationError("look_at: view direction is parallel to up", module="renderer")
	x /= np.linalg.norm(x)
	y = np.cross(z, x)
	pose = np.eye(4)
	pose[:3, 0], pose[:3, 1], pose[:3, 2], pose[:3, 3] = x, y, z, eye
	return pose


def intrinsics_from_fov(width: int, height: int, fov_x: float) -> tuple[float, float, float, float]:
	"""(fx, fy, cx, cy) for a horizontal field of view in radians and square pixels."""
	fx = 0.5 * width / math.tan(0.5 * fov_x)
	return fx, fx, 0.5 * width, 0.5 * height


def orbit_eye(target: np.ndarray, radius: float, azimuth: float, elevation: float) -> np.ndarray:
	"""Point on a sphere around target; azimuth about +z, elevation above the xy-plane."""
	return np.asarray(target, dtype=np.float64) + radius * np.array(
		[math.cos(elevation) * math.cos(azimuth), math.cos(elevation) * math.sin(azimuth), math.sin(elevation)]
	)


def parse_pose_path(spec: str) -> tuple[str, int]:
	"""Split "circle60" / "arc24" into (kind, count)."""
	match = _POSE_PATH.match(spec.strip())
	if not match or int(match.group(2)) < 1:
		raise ValidationError(f"pose path must look like circle<N> or arc<N>, got '{spec}'", module="renderer")
	return match.group(1), int(match.group(2))


def pose_path(spec: str, template: Camera, target: Optional[Sequence[float]] = None, arc_degrees: float = 30.0) -> List[Camera]:
	"""
	Cameras along a named path around target, at the template's radius and elevation.

	circle<N> sweeps a full turn starting at the template's azimuth; arc<N> sweeps
	arc_degrees centred on it.
	"""
	kind, count = parse_pose_path(spec)
	target = np.zeros(3) if target is None else np.asarray(target, dtype=np.float64)
	offset = template.center - target
	radius = float(np.linalg.norm(offset))
	if radius == 0:
		raise ValidationError("pose path template camera sits on the target", module="renderer")
	azimuth0 = math.atan2(offset[1], offset[0])
	elevation = math.asin(max(-1.0, min(1.0, offset[2] / radius)))
	if kind == "circle":
		azimuths = azimuth0 + np.arange(count) * (2.0 * math.pi / count)
	else:
		half = math.radians(arc_degrees) / 2.0
		azimuths = azimuth0 + (np.linspace(-half, half, count) if count > 1 else np.zeros(1))
	return [template.with_pose(look_at(orbit_eye(target, radius, a, elevation), target)) for a in azimuths]
