"""
Command handlers for scene and extractor preparation.
"""

from __future__ import annotations

import argparse
import os

import numpy as np

from scene_stylizer.exceptions import UsageError
from scene_stylizer.services.features import EXTRACTOR_SEED, save_extractor_weights
from scene_stylizer.services.image_io import read_png, write_png
from scene_stylizer.services.scenes.base_scene import SceneDataset
from scene_stylizer.services.scenes.scene_factory import get_dataset
from scene_stylizer.services.scenes.transforms_json import write_transforms_json
from scene_stylizer.services.style_textures import get_style_names, make_style_texture
from scene_stylizer.utils.config import RunConfig
from scene_stylizer.utils.logger import logger

DEFAULT_STYLE = "painterly"
STYLE_TEXTURE_SIZE = 128


def load_style_image(source: str, cfg: RunConfig) -> np.ndarray:
	"""
	Style image from a PNG path or a procedural texture name.

	Args:
		source: Path, texture name, or empty for style_train.style_image
			(falling back to the painterly texture)
		cfg: Resolved RunConfig; run.seed seeds procedural textures

	Raises:
		UsageError: If source is neither an existing file nor a texture name
	"""
	source = source or cfg["style_train.style_image"] or DEFAULT_STYLE
	if os.path.isfile(source):
		return read_png(source, background=np.ones(3))
	if source in get_style_names():
		return make_style_texture(source, size=STYLE_TEXTURE_SIZE, seed=cfg["run.seed"])
	raise UsageError(
		f"style '{source}' is neither an image file nor one of {', '.join(get_style_names())}"
	)


def load_scene(source: str, cfg: RunConfig) -> SceneDataset:
	"""Dataset from a transforms.json path or a preset name; empty uses scene.preset."""
	return get_dataset(source, cfg, seed=cfg["run.seed"])


def make_scene(args: argparse.Namespace, cfg: RunConfig, out_dir: str) -> str:
	"""Write a procedural scene as transforms.json plus every style texture."""
	dataset = load_scene(args.scene, cfg)
	path = write_transforms_json(dataset, os.path.join(out_dir, "scene"))
	for name in get_style_names():
		write_png(os.path.join(out_dir, "styles", f"{name}.png"), make_style_texture(name, args.style_size, cfg["run.seed"]))
	logger("cli").info(
		f"Scene '{dataset.name}' with {len(dataset.images)} view(s) written to {path}; "
		f"{len(get_style_names())} style texture(s) under {os.path.join(out_dir, 'styles')}"
	)
	return path


def gen_extractor_weights(args: argparse.Namespace, cfg: RunConfig, out_dir: str) -> str:
	"""Write the seeded feature-extractor weights file."""
	seed = EXTRACTOR_SEED if args.extractor_seed is None else args.extractor_seed
	return save_extractor_weights(os.path.join(out_dir, args.name), seed)
