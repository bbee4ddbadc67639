"""
transforms.json Loader

Reads the synthetic-capture camera format: a horizontal field of view
`camera_angle_x` plus `frames`, each with an image `file_path` and a 4x4
camera-to-world `transform_matrix` in the OpenGL convention (+y up, camera
looking down -z). Poses are converted to the renderer's convention
(+y down, +z forward) by flipping the camera y and z axes.

Optional keys written by write_transforms_json and honored on load:
`scene_bounds`, `near`, `far`, `object_scene`, and per frame `split`
("train" / "heldout") and `depth_path`.
"""

from __future__ import annotations

import json
import math
import os
from typing import Any, Dict, List

import numpy as np

from scene_stylizer.exceptions import DatasetError, ImageFormatError, ValidationError
from scene_stylizer.services.cameras import Camera
from scene_stylizer.services.fields import SceneBounds
from scene_stylizer.services.image_io import read_pfm, read_png, write_pfm, write_png
from scene_stylizer.services.scenes.base_scene import SceneDataset
from scene_stylizer.utils.logger import logger

GL_TO_CV = np.diag([1.0, -1.0, -1.0, 1.0])
DEFAULT_NEAR = 2.0
DEFAULT_FAR = 6.0
DEFAULT_HALF_EXTENT = 1.5
IMAGE_EXTENSIONS = ("", ".png", ".PNG")


def _decode(path: str) -> Dict[str, Any]:
	try:
		with open(path, "rb") as fh:
			raw = fh.read()
	except OSError as e:
		raise DatasetError(f"cannot read {path}: {e.strerror}")
	try:
		text = raw.decode("utf-8")
	except UnicodeDecodeError as e:
		raise DatasetError(f"{path}: not UTF-8 (byte offset {e.start})")
	try:
		data = json.loads(text)
	except json.JSONDecodeError as e:
		offset = len(text[: e.pos].encode("utf-8"))
		raise DatasetError(f"{path}: malformed JSON at byte offset {offset} (line {e.lineno}): {e.msg}")
	if not isinstance(data, dict):
		raise DatasetError(f"{path}: top level must be an object")
	return data


def _resolve_image(base: str, file_path: str) -> str:
	candidate = os.path.normpath(os.path.join(base, file_path))
	for ext in IMAGE_EXTENSIONS:
		if os.path.isfile(candidate + ext):
			return candidate + ext
	raise DatasetError(f"frame image '{file_path}' not found under {base}")


def gl_to_cv(c2w: np.ndarray) -> np.ndarray:
	return np.asarray(c2w, dtype=np.float64) @ GL_TO_CV


def load_transforms_json(path: str) -> SceneDataset:
	"""
	Load a posed dataset from a transforms.json file (or a directory holding one).

	fx = fy = 0.5 * W / tan(0.5 * camera_angle_x), principal point at the image centre.

	Raises:
		DatasetError: On malformed JSON (naming the byte offset), missing keys,
			unreadable images or non-rigid transforms
	"""
	if os.path.isdir(path):
		path = os.path.join(path, "transforms.json")
	data = _decode(path)
	base = os.path.dirname(os.path.abspath(path))

	for key in ("camera_angle_x", "frames"):
		if key not in data:
			raise DatasetError(f"{path}: missing required key '{key}'")
	frames = data["frames"]
	if not isinstance(frames, list) or not frames:
		raise DatasetError(f"{path}: 'frames' must be a non-empty list")
	try:
		angle = float(data["camera_angle_x"])
	except (TypeError, ValueError):
		raise DatasetError(f"{path}: camera_angle_x must be a number")
	if not 0 < angle < math.pi:
		raise DatasetError(f"{path}: camera_angle_x must lie in (0, pi), got {angle}")

	object_scene = bool(data.get("object_scene", True))
	background = np.ones(3) if object_scene else np.zeros(3)
	near = float(data.get("near", DEFAULT_NEAR))
	far = float(data.get("far", DEFAULT_FAR))
	if "scene_bounds" in data:
		try:
			bounds = SceneBounds.from_array(np.array(data["scene_bounds"], dtype=np.float64))
		except (ValueError, ValidationError) as e:
			raise DatasetError(f"{path}: bad scene_bounds ({e})")
	else:
		bounds = SceneBounds(np.full(3, -DEFAULT_HALF_EXTENT), np.full(3, DEFAULT_HALF_EXTENT))

	images: List[np.ndarray] = []
	depths: List[np.ndarray] = []
	cameras: List[Camera] = []
	train, heldout = [], []
	for k, frame in enumerate(frames):
		for key in ("file_path", "transform_matrix"):
			if key not in frame:
				raise DatasetError(f"{path}: frame {k} is missing '{key}'")
		try:
			image = read_png(_resolve_image(base, frame["file_path"]), background)
		except ImageFormatError as e:
			raise DatasetError(f"{path}: frame {k}: {e}")
		height, width = image.shape[:2]
		fx = 0.5 * width / math.tan(0.5 * angle)
		fy = 0.5 * height / math.tan(0.5 * float(data["camera_angle_y"])) if "camera_angle_y" in data else fx
		matrix = np.array(frame["transform_matrix"], dtype=np.float64)
		if matrix.shape != (4, 4):
			raise DatasetError(f"{path}: frame {k} transform_matrix must be 4x4, got {matrix.shape}")
		try:
			camera = Camera(fx, fy, 0.5 * width, 0.5 * height, width, height, gl_to_cv(matrix), near, far)
		except ValidationError as e:
			raise DatasetError(f"{path}: frame {k}: {e}")
		images.append(image)
		cameras.append(camera)
		if "depth_path" in frame:
			try:
				depths.append(np.asarray(read_pfm(os.path.join(base, frame["depth_path"])), dtype=np.float64))
			except ImageFormatError as e:
				raise DatasetError(f"{path}: frame {k}: {e}")
		(heldout if frame.get("split") == "heldout" else train).append(k)

	if depths and len(depths) != len(images):
		raise DatasetError(f"{path}: depth_path given for only some frames")
	name = os.path.basename(base) or "transforms"
	logger("sceneio").info(f"Loaded {len(images)} frame(s) from {path}")
	return SceneDataset(
		name=name,
		images=images,
		cameras=cameras,
		bounds=bounds,
		train_indices=train,
		heldout_indices=heldout,
		depths=depths or None,
		object_scene=object_scene,
	)


def write_transforms_json(dataset: SceneDataset, directory: str) -> str:
	"""
	Write a dataset as PNG frames, PFM depths and a transforms.json.

	All cameras must share one horizontal field of view.
	"""
	os.makedirs(directory, exist_ok=True)
	first = dataset.cameras[0]
	angle = 2.0 * math.atan(0.5 * first.width / first.fx)
	split = {i: "train" for i in dataset.train_indices}
	split.update({i: "heldout" for i in dataset.heldout_indices})
	frames = []
	for k, (image, camera) in enumerate(zip(dataset.images, dataset.cameras)):
		if abs(2.0 * math.atan(0.5 * camera.width / camera.fx) - angle) > 1e-12:
			raise DatasetError(f"view {k} has a different field of view from view 0")
		frame: Dict[str, Any] = {
			"file_path": f"./images/r_{k:03d}",
			"transform_matrix": gl_to_cv(camera.c2w).tolist(),
			"split": split.get(k, "unused"),
		}
		write_png(os.path.join(directory, "images", f"r_{k:03d}.png"), image)
		depth = dataset.depth(k)
		if depth is not None:
			frame["depth_path"] = f"./depth/r_{k:03d}.pfm"
			write_pfm(os.path.join(directory, "depth", f"r_{k:03d}.pfm"), depth, double=True)
		frames.append(frame)

	payload = {
		"camera_angle_x": angle,
		"near": first.near,
		"far": first.far,
		"object_scene": dataset.object_scene,
		"scene_bounds": dataset.bounds.to_array().tolist(),
		"frames": frames,
	}
	path = os.path.join(directory, "transforms.json")
	with open(path, "w", encoding="utf-8") as fh:
		json.dump(payload, fh, indent=2)
	logger("sceneio").info(f"Wrote {len(frames)} frame(s) to {path}")
	return path
