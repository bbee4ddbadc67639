"""
Base Scene Types

Every analytic primitive inherits from Primitive and implements intersect().
SceneDataset is the common currency of the loaders: posed images, optional
per-view depth, a disjoint train/held-out split and the scene bounds.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from scene_stylizer.exceptions import DatasetError
from scene_stylizer.services.cameras import Camera
from scene_stylizer.services.fields import SceneBounds


class Primitive(ABC):
	"""
	Abstract base class for analytic scene primitives.

	Each primitive must:
	1. Inherit from this class
	2. Implement intersect() for batches of unit rays
	3. Report its axis-aligned extent through bounds()
	"""

	def __init__(self, albedo):
		self.albedo = np.asarray(albedo, dtype=np.float64).reshape(3)
		if self.albedo.min() < 0 or self.albedo.max() > 1:
			raise DatasetError(f"albedo must lie in [0, 1]^3, got {self.albedo.tolist()}")

	@abstractmethod
	def intersect(self, origins: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
		"""
		Nearest positive hit along each ray.

		Args:
			origins: (N, 3) ray origins
			directions: (N, 3) unit directions

		Returns:
			(t, normals): hit distances (N,) with +inf on a miss, and outward unit normals (N, 3)
		"""

	@abstractmethod
	def bounds(self) -> tuple[np.ndarray, np.ndarray]:
		"""(lo, hi) corners of the primitive's bounding box."""

	def within(self, scene_bounds: SceneBounds) -> bool:
		lo, hi = self.bounds()
		return bool(np.all(lo >= scene_bounds.lo) and np.all(hi <= scene_bounds.hi))


@dataclass
class SceneDataset:
	"""Posed views of one scene."""

	name: str
	images: List[np.ndarray]
	cameras: List[Camera]
	bounds: SceneBounds
	train_indices: List[int]
	heldout_indices: List[int] = field(default_factory=list)
	depths: Optional[List[np.ndarray]] = None
	object_scene: bool = True

	def __post_init__(self):
		self.validate()

	def validate(self) -> None:
		if not self.images or len(self.images) != len(self.cameras):
			raise DatasetError(f"dataset '{self.name}' needs one camera per image, got {len(self.images)} / {len(self.cameras)}")
		shape = self.images[0].shape
		for k, (image, camera) in enumerate(zip(self.images, self.cameras)):
			if image.shape != shape or image.ndim != 3 or image.shape[2] != 3:
				raise DatasetError(f"dataset '{self.name}': view {k} has shape {image.shape}, expected {shape}")
			if camera.shape != image.shape[:2]:
				raise DatasetError(f"dataset '{self.name}': view {k} camera is {camera.shape}, image {image.shape[:2]}")
		if self.depths is not None and len(self.depths) != len(self.images):
			raise DatasetError(f"dataset '{self.name}': {len(self.depths)} depth maps for {len(self.images)} views")
		if not self.train_indices:
			raise DatasetError(f"dataset '{self.name}' has no training views")
		if set(self.train_indices) & set(self.heldout_indices):
			raise DatasetError(f"dataset '{self.name}': train and held-out views overlap")
		every = list(self.train_indices) + list(self.heldout_indices)
		if min(every) < 0 or max(every) >= len(self.images):
			raise DatasetError(f"dataset '{self.name}': split index out of range")

	def train_views(self) -> list[tuple[np.ndarray, Camera]]:
		return [(self.images[i], self.cameras[i]) for i in self.train_indices]

	def heldout_views(self) -> list[tuple[np.ndarray, Camera]]:
		return [(self.images[i], self.cameras[i]) for i in self.heldout_indices]

	def depth(self, index: int) -> Optional[np.ndarray]:
		return None if self.depths is None else self.depths[index]
