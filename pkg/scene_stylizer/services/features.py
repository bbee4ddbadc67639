"""
Feature extraction and nearest-neighbour feature matching.

The extractor is a fixed five-convolution stack with two 2x2 average pools,
giving 128-channel features at a quarter of the input resolution. Its
weights come from a seeded generator (or a weight file in the SFFX
container) and are never trained; gradients flow to the input image only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional

import numpy as np

from scene_stylizer.diffcore import ops
from scene_stylizer.diffcore.checkpoint import EXTRACTOR_MAGIC, load_arrays, save_arrays
from scene_stylizer.diffcore.tape import Node, as_node
from scene_stylizer.exceptions import CheckpointError, ShapeError, ValidationError
from scene_stylizer.utils.logger import logger
from scene_stylizer.utils.validation import ensure_finite, ensure_unit_range

EXTRACTOR_SEED = 0xC0FFEE
COSINE_EPS = 1e-8
MIN_IMAGE_SIDE = 8
MATCH_CHUNK = 1024

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406])
IMAGENET_STD = np.array([0.229, 0.224, 0.225])

# (name, in channels, out channels, pool after)
EXTRACTOR_LAYERS = (
	("conv1_1", 3, 32, False),
	("conv1_2", 32, 32, True),
	("conv2_1", 32, 64, False),
	("conv2_2", 64, 64, True),
	("conv3_1", 64, 128, False),
)
FEATURE_DIM = EXTRACTOR_LAYERS[-1][2]


class FeatureMap(NamedTuple):
	"""Features as a (height * width, channels) Node in row-major location order."""

	values: Node
	height: int
	width: int

	@property
	def channels(self) -> int:
		return self.values.shape[1]

	def numpy(self) -> np.ndarray:
		return self.values.value.reshape(self.height, self.width, self.channels)


class NNMatch(NamedTuple):
	index: np.ndarray
	distance: np.ndarray


def generate_extractor_weights(seed: int = EXTRACTOR_SEED) -> Dict[str, np.ndarray]:
	"""He-normal kernels and zero biases, drawn layer by layer from one generator."""
	rng = np.random.default_rng(seed)
	weights: Dict[str, np.ndarray] = {}
	for name, c_in, c_out, _ in EXTRACTOR_LAYERS:
		std = np.sqrt(2.0 / (c_in * 9))
		weights[f"{name}.weight"] = rng.normal(0.0, std, size=(c_out, c_in, 3, 3))
		weights[f"{name}.bias"] = np.zeros(c_out)
	return weights


def save_extractor_weights(path: str, seed: int = EXTRACTOR_SEED) -> str:
	save_arrays(path, generate_extractor_weights(seed), EXTRACTOR_MAGIC)
	logger("features").info(f"Wrote extractor weights to {path} (seed {seed:#x})")
	return path


@dataclass
class FeatureExtractor:
	weights: Dict[str, np.ndarray]

	def __post_init__(self):
		for name, c_in, c_out, _ in EXTRACTOR_LAYERS:
			kernel = self.weights.get(f"{name}.weight")
			bias = self.weights.get(f"{name}.bias")
			if kernel is None or bias is None:
				raise CheckpointError(f"extractor weights are missing layer '{name}'", module="features")
			if kernel.shape != (c_out, c_in, 3, 3) or bias.shape != (c_out,):
				raise CheckpointError(
					f"extractor layer '{name}' has shapes {kernel.shape}/{bias.shape}", module="features"
				)
		frozen = {}
		for key, value in self.weights.items():
			arr = np.array(value, dtype=np.float64)
			arr.flags.writeable = False
			frozen[key] = arr
		self.weights = frozen

	@classmethod
	def default(cls) -> "FeatureExtractor":
		return cls(generate_extractor_weights())

	@classmethod
	def from_file(cls, path: str) -> "FeatureExtractor":
		return cls(load_arrays(path, EXTRACTOR_MAGIC))

	@classmethod
	def load(cls, path: Optional[str] = None) -> "FeatureExtractor":
		return cls.from_file(path) if path else cls.default()

	def __call__(self, image) -> FeatureMap:
		return extract(self, image)


def extract(extractor: FeatureExtractor, image) -> FeatureMap:
	"""
	Features of an (H, W, 3) image with values in [0, 1].

	Args:
		extractor: Fixed weights
		image: Array or Node; gradients flow back to it when it is a Node

	Returns:
		FeatureMap of ceil(H/4) x ceil(W/4) locations and 128 channels

	Raises:
		ValidationError: If the image is smaller than 8 px or leaves [0, 1]
	"""
	image = as_node(image)
	if image.value.ndim != 3 or image.shape[2] != 3:
		raise ShapeError(f"extract expects an (H, W, 3) image, got {image.shape}", module="features")
	h, w, _ = image.shape
	if h < MIN_IMAGE_SIDE or w < MIN_IMAGE_SIDE:
		raise ValidationError(f"image must be at least {MIN_IMAGE_SIDE} px per side, got {w}x{h}", module="features")
	ensure_finite(image.value, "image", "features")
	ensure_unit_range(image.value, "image", "features")

	x = ops.transpose(ops.div(ops.sub(image, IMAGENET_MEAN), IMAGENET_STD), (2, 0, 1))
	for name, _, _, pool in EXTRACTOR_LAYERS:
		x = ops.relu(ops.conv2d(x, extractor.weights[f"{name}.weight"], extractor.weights[f"{name}.bias"]))
		if pool:
			x = ops.avg_pool2(x)
	channels, fh, fw = x.shape
	values = ops.transpose(ops.reshape(x, (channels, fh * fw)), (1, 0))
	return FeatureMap(values, fh, fw)


def _as_matrix(features) -> np.ndarray:
	if isinstance(features, FeatureMap):
		return features.values.value
	if isinstance(features, Node):
		return features.value
	return np.asarray(features, dtype=np.float64)


def nn_match(rendered, style, eps: float = COSINE_EPS) -> NNMatch:
	"""
	Nearest style feature for every rendered feature under cosine distance.

	D(F_i, S_j) = 1 - <F_i, S_j> / (|F_i| |S_j| + eps); ties go to the smallest j.

	Args:
		rendered: FeatureMap, Node or (N, D) array
		style: FeatureMap, Node or (M, D) array

	Returns:
		NNMatch with (N,) int64 indices and (N,) distances
	"""
	f = _as_matrix(rendered)
	s = _as_matrix(style)
	if s.ndim != 2 or s.shape[0] == 0:
		raise ValidationError("nn_match: empty style feature map", module="features")
	if f.ndim != 2 or f.shape[1] != s.shape[1]:
		raise ShapeError(f"nn_match: channel mismatch {f.shape} vs {s.shape}", module="features")

	norm_f = np.linalg.norm(f, axis=1)
	norm_s = np.linalg.norm(s, axis=1)
	index = np.empty(len(f), dtype=np.int64)
	distance = np.empty(len(f))
	for start in range(0, len(f), MATCH_CHUNK):
		stop = min(start + MATCH_CHUNK, len(f))
		dots = f[start:stop] @ s.T
		dist = 1.0 - dots / (norm_f[start:stop, None] * norm_s[None, :] + eps)
		best = np.argmin(dist, axis=1)
		index[start:stop] = best
		distance[start:stop] = dist[np.arange(stop - start), best]
	return NNMatch(index, distance)
