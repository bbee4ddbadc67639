"""
Scene Factory

Resolves a scene source to a SceneDataset. A source is either a path (a
transforms.json file or a directory holding one) or the name of a
registered procedural preset.
"""

from __future__ import annotations

import os
from typing import Any, Callable, Dict, List, Mapping

from scene_stylizer.exceptions import DatasetError
from scene_stylizer.services.scenes.analytic import AnalyticScene
from scene_stylizer.services.scenes.base_scene import SceneDataset
from scene_stylizer.services.scenes.procedural import blocks_scene, make_dataset, sphere_scene, spheres_scene
from scene_stylizer.services.scenes.transforms_json import load_transforms_json
from scene_stylizer.utils.logger import logger

# Registry of procedural scene builders
SCENE_PRESETS: Dict[str, Callable[[], AnalyticScene]] = {
	"sphere": sphere_scene,
	"spheres": spheres_scene,
	"blocks": blocks_scene,
	# Add more presets here or through register_scene
}


def get_scene(name: str) -> AnalyticScene:
	builder = SCENE_PRESETS.get(name)
	if builder is None:
		raise DatasetError(f"unknown scene preset '{name}', expected one of {', '.join(get_supported_scenes())}")
	return builder()


def register_scene(name: str, builder: Callable[[], AnalyticScene]) -> None:
	"""
	Register a new procedural scene preset.

	Args:
		name: Preset name used by make-scene and the scene.preset config key
		builder: Zero-argument callable returning an AnalyticScene
	"""
	if not callable(builder):
		raise DatasetError("scene builder must be callable")
	SCENE_PRESETS[name] = builder
	logger("sceneio").info(f"Registered scene preset: {name}")


def get_supported_scenes() -> List[str]:
	return list(SCENE_PRESETS)


def is_dataset_path(source: str) -> bool:
	return source.lower().endswith(".json") or os.path.isdir(source)


def get_dataset(source: str, cfg: Mapping[str, Any], seed: int = 0) -> SceneDataset:
	"""
	Get the dataset for a scene source.

	Priority:
	1. A transforms.json path or a directory containing one
	2. A registered preset rendered with the scene.* config keys

	Args:
		source: Path or preset name; empty means cfg["scene.preset"]
		cfg: Resolved RunConfig (or any mapping with the scene.* keys)
		seed: Seed for the procedural pose sampler
	"""
	source = source or cfg["scene.preset"]
	if is_dataset_path(source):
		if not os.path.exists(source):
			raise DatasetError(f"dataset path not found: {source}")
		return load_transforms_json(source)
	return make_dataset(
		get_scene(source),
		n_train=cfg["scene.n_train"],
		n_heldout=cfg["scene.n_heldout"],
		pattern=cfg["scene.pattern"],
		image_size=cfg["scene.image_size"],
		seed=seed,
		radius=cfg["scene.radius"],
		elevation_degrees=cfg["scene.elevation_degrees"],
		fov_degrees=cfg["scene.fov_degrees"],
		arc_degrees=cfg["scene.arc_degrees"],
		near=cfg["scene.near"],
		far=cfg["scene.far"],
	)
