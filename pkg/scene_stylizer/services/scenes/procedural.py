"""
Procedural scenes and dataset generation.

Preset scenes are small arrangements of spheres and boxes inside a cube of
half-width 1.5. make_dataset photographs a scene with the oracle renderer
from poses on a narrow arc (forward-facing captures, black background) or
scattered over the upper hemisphere (object captures, white background).
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from scene_stylizer.exceptions import DatasetError
from scene_stylizer.services.cameras import Camera, intrinsics_from_fov, look_at, orbit_eye
from scene_stylizer.services.fields import SceneBounds
from scene_stylizer.services.scenes.analytic import AnalyticScene, Box, Sphere, oracle_render
from scene_stylizer.services.scenes.base_scene import SceneDataset
from scene_stylizer.utils.logger import logger

POSE_PATTERNS = ("arc", "hemisphere")
DEFAULT_BOUNDS = SceneBounds(np.full(3, -1.5), np.full(3, 1.5))
ARC_BASE_AZIMUTH = -math.pi / 2
HEMISPHERE_ELEVATION = (math.radians(15.0), math.radians(60.0))


def sphere_scene() -> AnalyticScene:
	return AnalyticScene("sphere", [Sphere((0.0, 0.0, 0.0), 0.8, (0.85, 0.35, 0.25))], DEFAULT_BOUNDS)


def spheres_scene() -> AnalyticScene:
	return AnalyticScene(
		"spheres",
		[
			Box((-1.2, -1.2, -1.0), (1.2, 1.2, -0.8), (0.7, 0.7, 0.65)),
			Sphere((-0.45, 0.1, -0.3), 0.5, (0.85, 0.3, 0.25)),
			Sphere((0.55, 0.25, -0.4), 0.4, (0.25, 0.45, 0.85)),
			Sphere((0.05, -0.45, -0.55), 0.25, (0.95, 0.85, 0.3)),
		],
		DEFAULT_BOUNDS,
	)


def blocks_scene() -> AnalyticScene:
	return AnalyticScene(
		"blocks",
		[
			Box((-1.2, -1.2, -1.0), (1.2, 1.2, -0.8), (0.6, 0.65, 0.7)),
			Box((-0.8, -0.3, -0.8), (-0.2, 0.3, 0.2), (0.8, 0.4, 0.2)),
			Box((0.1, -0.6, -0.8), (0.7, 0.0, -0.2), (0.3, 0.7, 0.4)),
			Sphere((0.4, 0.5, -0.4), 0.4, (0.4, 0.4, 0.9)),
		],
		DEFAULT_BOUNDS,
	)


def _pose_angles(pattern: str, n: int, rng: np.random.Generator, arc: float, elevation: float, train: bool):
	"""(azimuth, elevation) pairs in radians."""
	if pattern == "arc":
		half = 0.5 * arc
		if train:
			offsets = np.linspace(-half, half, n) if n > 1 else np.zeros(1)
			return [(ARC_BASE_AZIMUTH + a, elevation) for a in offsets]
		jitter = math.radians(5.0)
		return [
			(ARC_BASE_AZIMUTH + rng.uniform(-half, half), elevation + rng.uniform(-jitter, jitter)) for _ in range(n)
		]
	lo, hi = HEMISPHERE_ELEVATION
	if train:
		step = 2.0 * math.pi / n
		return [(ARC_BASE_AZIMUTH + k * step + rng.uniform(-0.25, 0.25) * step, rng.uniform(lo, hi)) for k in range(n)]
	return [(rng.uniform(0.0, 2.0 * math.pi), rng.uniform(lo, hi)) for _ in range(n)]


def make_dataset(
	scene: AnalyticScene,
	n_train: int = 3,
	n_heldout: int = 4,
	pattern: str = "arc",
	image_size: int = 64,
	seed: int = 0,
	radius: float = 4.0,
	elevation_degrees: float = 20.0,
	fov_degrees: float = 40.0,
	arc_degrees: float = 30.0,
	near: float = 2.0,
	far: float = 6.0,
	background: Optional[np.ndarray] = None,
) -> SceneDataset:
	"""
	Render a posed dataset of an analytic scene.

	Training poses on an arc are evenly spaced over arc_degrees; every other
	pose is drawn from a generator seeded with seed, so the dataset is a pure
	function of its arguments.

	Args:
		scene: Analytic scene to photograph
		pattern: "arc" (forward-facing) or "hemisphere" (object-centred)
		background: Override of the pattern's default background color

	Returns:
		SceneDataset with oracle depths and train views first
	"""
	if n_train < 1:
		raise DatasetError(f"need at least one training view, got {n_train}")
	if n_heldout < 0:
		raise DatasetError(f"held-out view count must be >= 0, got {n_heldout}")
	if pattern not in POSE_PATTERNS:
		raise DatasetError(f"unknown pose pattern '{pattern}', expected one of {', '.join(POSE_PATTERNS)}")

	object_scene = pattern == "hemisphere"
	if background is None:
		background = np.ones(3) if object_scene else np.zeros(3)
	rng = np.random.default_rng(seed)
	elevation = math.radians(elevation_degrees)
	arc = math.radians(arc_degrees)
	angles = _pose_angles(pattern, n_train, rng, arc, elevation, train=True)
	angles += _pose_angles(pattern, n_heldout, rng, arc, elevation, train=False)

	fx, fy, cx, cy = intrinsics_from_fov(image_size, image_size, math.radians(fov_degrees))
	target = np.zeros(3)
	images, depths, cameras = [], [], []
	for azimuth, elev in angles:
		pose = look_at(orbit_eye(target, radius, azimuth, elev), target)
		camera = Camera(fx, fy, cx, cy, image_size, image_size, pose, near, far)
		image, depth = oracle_render(scene, camera, background)
		images.append(image)
		depths.append(depth)
		cameras.append(camera)

	logger("sceneio").info(
		f"Generated dataset '{scene.name}': {n_train} train + {n_heldout} held-out {pattern} views at {image_size}px"
	)
	return SceneDataset(
		name=scene.name,
		images=images,
		cameras=cameras,
		bounds=scene.bounds,
		train_indices=list(range(n_train)),
		heldout_indices=list(range(n_train, n_train + n_heldout)),
		depths=depths,
		object_scene=object_scene,
	)
