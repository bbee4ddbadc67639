"""
Analytic scenes and the oracle renderer.

Rays are intersected exactly with spheres and axis-aligned boxes; the nearest
hit is shaded Lambertian under an ambient term plus one directional light.
Depth is the hit distance along the unit ray, +inf where nothing is hit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from scene_stylizer.exceptions import DatasetError
from scene_stylizer.services.cameras import Camera
from scene_stylizer.services.fields import SceneBounds
from scene_stylizer.services.renderer import generate_rays
from scene_stylizer.services.scenes.base_scene import Primitive

HIT_EPS = 1e-9


class Sphere(Primitive):
	def __init__(self, center: Sequence[float], radius: float, albedo):
		super().__init__(albedo)
		self.center = np.asarray(center, dtype=np.float64).reshape(3)
		self.radius = float(radius)
		if self.radius <= 0:
			raise DatasetError(f"sphere radius must be positive, got {radius}")

	def intersect(self, origins, directions):
		oc = origins - self.center
		b = np.einsum("ij,ij->i", oc, directions)
		c = np.einsum("ij,ij->i", oc, oc) - self.radius**2
		disc = b * b - c
		t = np.full(len(origins), np.inf)
		hit = disc >= 0
		root = np.sqrt(np.where(hit, disc, 0.0))
		near_t = -b - root
		far_t = -b + root
		t_hit = np.where(near_t > HIT_EPS, near_t, far_t)
		valid = hit & (t_hit > HIT_EPS)
		t[valid] = t_hit[valid]
		normals = np.zeros_like(origins)
		points = origins[valid] + t[valid, None] * directions[valid]
		normals[valid] = (points - self.center) / self.radius
		return t, normals

	def bounds(self):
		return self.center - self.radius, self.center + self.radius


class Box(Primitive):
	def __init__(self, lo: Sequence[float], hi: Sequence[float], albedo):
		super().__init__(albedo)
		self.lo = np.asarray(lo, dtype=np.float64).reshape(3)
		self.hi = np.asarray(hi, dtype=np.float64).reshape(3)
		if np.any(self.hi <= self.lo):
			raise DatasetError(f"box needs hi > lo, got {self.lo.tolist()} / {self.hi.tolist()}")

	def intersect(self, origins, directions):
		with np.errstate(divide="ignore", invalid="ignore"):
			inv = 1.0 / directions
			t0 = (self.lo - origins) * inv
			t1 = (self.hi - origins) * inv
		parallel = np.isnan(t0) | np.isnan(t1)
		t_small = np.where(parallel, -np.inf, np.minimum(t0, t1))
		t_large = np.where(parallel, np.inf, np.maximum(t0, t1))
		t_enter = t_small.max(axis=1)
		t_exit = t_large.min(axis=1)
		hit = (t_enter <= t_exit) & (t_exit > HIT_EPS)
		inside = t_enter <= HIT_EPS
		t_hit = np.where(inside, t_exit, t_enter)
		t = np.where(hit, t_hit, np.inf)

		normals = np.zeros_like(origins)
		rows = np.flatnonzero(hit)
		if rows.size:
			axis = np.where(inside[rows], t_large[rows].argmin(axis=1), t_small[rows].argmax(axis=1))
			sign = -np.sign(directions[rows, axis])
			sign = np.where(inside[rows], -sign, sign)
			normals[rows, axis] = np.where(sign == 0, 1.0, sign)
		return t, normals

	def bounds(self):
		return self.lo.copy(), self.hi.copy()


@dataclass
class AnalyticScene:
	"""Primitives under ambient plus directional light, inside a bounding box."""

	name: str
	primitives: List[Primitive]
	bounds: SceneBounds
	ambient: float = 0.25
	light_direction: np.ndarray = field(default_factory=lambda: np.array([0.4, -0.5, 0.75]))

	def __post_init__(self):
		if not self.primitives:
			raise DatasetError(f"scene '{self.name}' has no primitives")
		for k, primitive in enumerate(self.primitives):
			if not primitive.within(self.bounds):
				raise DatasetError(f"scene '{self.name}': primitive {k} leaves the scene bounds")
		if not 0 <= self.ambient <= 1:
			raise DatasetError(f"ambient must lie in [0, 1], got {self.ambient}")
		light = np.asarray(self.light_direction, dtype=np.float64)
		self.light_direction = light / np.linalg.norm(light)


def trace(scene: AnalyticScene, origins: np.ndarray, directions: np.ndarray):
	"""Nearest hit over all primitives: (t, normals, albedo), +inf / zeros on a miss."""
	n = len(origins)
	t = np.full(n, np.inf)
	normals = np.zeros((n, 3))
	albedo = np.zeros((n, 3))
	for primitive in scene.primitives:
		t_p, n_p = primitive.intersect(origins, directions)
		closer = t_p < t
		t[closer] = t_p[closer]
		normals[closer] = n_p[closer]
		albedo[closer] = primitive.albedo
	return t, normals, albedo


def shade(scene: AnalyticScene, normals: np.ndarray, albedo: np.ndarray) -> np.ndarray:
	lambert = np.clip(normals @ scene.light_direction, 0.0, None)
	return np.clip(albedo * (scene.ambient + (1.0 - scene.ambient) * lambert)[:, None], 0.0, 1.0)


def oracle_render(scene: AnalyticScene, camera: Camera, background) -> tuple[np.ndarray, np.ndarray]:
	"""
	Exact render of an analytic scene.

	Returns:
		(image, depth): (H, W, 3) colors and (H, W) distances along the unit ray,
		background and +inf where a pixel's ray misses everything
	"""
	rays = generate_rays(camera)
	t, normals, albedo = trace(scene, rays.origins, rays.directions)
	hit = np.isfinite(t)
	rgb = np.empty((len(t), 3))
	rgb[:] = np.asarray(background, dtype=np.float64).reshape(3)
	rgb[hit] = shade(scene, normals[hit], albedo[hit])
	h, w = camera.shape
	return rgb.reshape(h, w, 3), t.reshape(h, w)
