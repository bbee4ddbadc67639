"""
Differentiable volume rendering.

Rays are sampled in bins between the camera's near and far planes and the
field's densities and colors are alpha-composited front to back. Depth is the
weight-averaged sample distance along the unit ray direction.
"""

from __future__ import annotations

import os
from typing import NamedTuple, Optional, Sequence

import numpy as np
from tqdm import tqdm

from scene_stylizer.diffcore import ops
from scene_stylizer.diffcore.tape import Node, as_node, backward, no_grad
from scene_stylizer.exceptions import ValidationError
from scene_stylizer.services.cameras import Camera
from scene_stylizer.services.fields import HierarchicalField, eval_coarse, eval_hierarchical
from scene_stylizer.utils.logger import logger

RENDER_MODES = ("coarse", "hierarchical")
DEPTH_EPS = 1e-10
INVARIANT_TOL = 1e-12
SURFACE_OPACITY = 0.5
GRAD_CHUNK = 512

# Test and debug runs turn on per-call checks of the compositing invariants.
CHECK_INVARIANTS = os.environ.get("SCENE_STYLIZER_CHECK_INVARIANTS", "") == "1"


class Rays(NamedTuple):
	origins: np.ndarray
	directions: np.ndarray


class Composite(NamedTuple):
	rgb: Node
	depth: Node
	weights: Node
	opacity: Node


class RaySampleBatch(NamedTuple):
	"""Per-ray samples and composited outputs."""

	rays: Rays
	t: np.ndarray
	deltas: np.ndarray
	sigma: Node
	color: Node
	rgb: Node
	depth: Node
	weights: Node
	opacity: Node


class RenderedImage(NamedTuple):
	rgb: np.ndarray
	depth: np.ndarray
	opacity: np.ndarray

	def surface_depth(self, min_opacity: float = SURFACE_OPACITY) -> np.ndarray:
		"""Depth with inf where the ray is mostly background."""
		return np.where(self.opacity >= min_opacity, self.depth, np.inf)


def pixel_grid(camera: Camera) -> np.ndarray:
	"""All (column, row) pixel indices in row-major order."""
	rows, cols = np.meshgrid(np.arange(camera.height), np.arange(camera.width), indexing="ij")
	return np.stack([cols.reshape(-1), rows.reshape(-1)], axis=1)


def image_points_to_rays(camera: Camera, uv: np.ndarray) -> Rays:
	"""Rays through continuous image coordinates uv (N, 2)."""
	uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
	dirs_cam = np.stack(
		[(uv[:, 0] - camera.cx) / camera.fx, (uv[:, 1] - camera.cy) / camera.fy, np.ones(len(uv))], axis=1
	)
	dirs = dirs_cam @ camera.rotation.T
	dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
	return Rays(np.broadcast_to(camera.center, dirs.shape).copy(), dirs)


def generate_rays(camera: Camera, pixels: Optional[np.ndarray] = None) -> Rays:
	"""
	Rays through pixel centres.

	Args:
		camera: Pinhole camera
		pixels: (N, 2) integer (column, row) indices; every pixel when omitted

	Raises:
		ValidationError: If a pixel lies outside the image
	"""
	pix = pixel_grid(camera) if pixels is None else np.asarray(pixels).reshape(-1, 2)
	if pix.size and (
		pix[:, 0].min() < 0 or pix[:, 1].min() < 0 or pix[:, 0].max() >= camera.width or pix[:, 1].max() >= camera.height
	):
		raise ValidationError(
			f"pixel outside the {camera.width}x{camera.height} image", module="renderer"
		)
	return image_points_to_rays(camera, pix.astype(np.float64) + 0.5)


def sample_along(
	near,
	far,
	n_rays: int,
	n_samples: int,
	stratified: bool = False,
	rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, np.ndarray]:
	"""
	Sample distances in n_samples equal bins of [near, far].

	Without stratification the samples sit at bin centres; with it one uniform
	sample is drawn per bin. Each sample owns the interval between the midpoints
	to its neighbours, clipped to [near, far], so the deltas sum to far - near.

	Returns:
		(t, deltas), both (n_rays, n_samples)
	"""
	if n_samples < 2:
		raise ValidationError(f"need at least 2 samples per ray, got {n_samples}", module="renderer")
	near = np.broadcast_to(np.asarray(near, dtype=np.float64), (n_rays,))[:, None]
	far = np.broadcast_to(np.asarray(far, dtype=np.float64), (n_rays,))[:, None]
	edges = near + (far - near) * np.linspace(0.0, 1.0, n_samples + 1)[None, :]
	lower, upper = edges[:, :-1], edges[:, 1:]
	if stratified:
		rng = rng or np.random.default_rng(0)
		t = lower + (upper - lower) * rng.uniform(size=(n_rays, n_samples))
	else:
		t = 0.5 * (lower + upper)
	bounds = np.concatenate([near, 0.5 * (t[:, 1:] + t[:, :-1]), far], axis=1)
	return t, np.diff(bounds, axis=1)


def check_composite_invariants(weights: np.ndarray, transmittance: np.ndarray) -> None:
	"""Weights in [0, 1], per-ray sums at most 1 and non-increasing transmittance."""
	if weights.size == 0:
		return
	if weights.min() < -INVARIANT_TOL or weights.max() > 1.0 + INVARIANT_TOL:
		raise ValidationError("composite weights left [0, 1]", module="renderer")
	if np.max(weights.sum(axis=-1)) > 1.0 + 1e-9:
		raise ValidationError("composite weights sum above 1", module="renderer")
	if np.any(np.diff(transmittance, axis=-1) > INVARIANT_TOL):
		raise ValidationError("transmittance increased along a ray", module="renderer")


def composite(sigma, color, deltas: np.ndarray, t: np.ndarray, background, validate: Optional[bool] = None) -> Composite:
	"""
	Front-to-back alpha compositing of (R, S) densities and (R, S, 3) colors.

	alpha_i = 1 - exp(-sigma_i delta_i), T_i = prod_{j<i} (1 - alpha_j), w_i = T_i alpha_i.
	The background fills the remaining 1 - sum(w).

	Raises:
		ValidationError: On negative density or, when validating, broken invariants
	"""
	sigma, color = as_node(sigma), as_node(color)
	if sigma.shape != deltas.shape or color.shape != (*deltas.shape, 3):
		raise ValidationError(
			f"composite: sigma {sigma.shape}, color {color.shape} and deltas {deltas.shape} disagree",
			module="renderer",
		)
	if np.any(sigma.value < 0):
		raise ValidationError("composite: negative density", module="renderer")
	background = np.asarray(background, dtype=np.float64).reshape(3)

	tau = ops.mul(sigma, deltas)
	alpha = ops.sub(1.0, ops.exp(ops.neg(tau)))
	transmittance = ops.exp(ops.neg(ops.cumsum(tau, axis=1, exclusive=True)))
	weights = ops.mul(transmittance, alpha)
	opacity = ops.sum(weights, axis=1)

	n_rays, n_samples = deltas.shape
	radiance = ops.sum(ops.mul(ops.reshape(weights, (n_rays, n_samples, 1)), color), axis=1)
	fill = ops.mul(ops.reshape(ops.sub(1.0, opacity), (n_rays, 1)), background)
	rgb = ops.add(radiance, fill)
	depth = ops.div(ops.sum(ops.mul(weights, t), axis=1), ops.clamp_min(opacity, DEPTH_EPS))

	if CHECK_INVARIANTS if validate is None else validate:
		check_composite_invariants(weights.value, transmittance.value)
	return Composite(rgb, depth, weights, opacity)


def render_rays(
	fld: HierarchicalField,
	rays: Rays,
	near: float,
	far: float,
	background,
	mode: str = "coarse",
	n_samples: int = 64,
	stratified: bool = False,
	rng: Optional[np.random.Generator] = None,
	freeze_coarse: bool = True,
	validate: Optional[bool] = None,
) -> RaySampleBatch:
	"""
	Evaluate the field along rays and composite.

	Args:
		mode: "coarse" renders sigma_c and c_c; "hierarchical" renders sigma_f and c_f
		freeze_coarse: In hierarchical mode, evaluate the coarse field without a graph
	"""
	if mode not in RENDER_MODES:
		raise ValidationError(f"unknown render mode '{mode}'", module="renderer")
	n_rays = len(rays.origins)
	t, deltas = sample_along(near, far, n_rays, n_samples, stratified, rng)
	points = (rays.origins[:, None, :] + rays.directions[:, None, :] * t[:, :, None]).reshape(-1, 3)
	dirs = np.repeat(rays.directions, n_samples, axis=0)
	if mode == "coarse":
		out = eval_coarse(fld, points, dirs)
		sigma, color = out.sigma, out.color
	else:
		out = eval_hierarchical(fld, points, dirs, freeze_coarse)
		sigma, color = out.sigma, out.color
	sigma = ops.reshape(sigma, (n_rays, n_samples))
	color = ops.reshape(color, (n_rays, n_samples, 3))
	comp = composite(sigma, color, deltas, t, background, validate)
	return RaySampleBatch(rays, t, deltas, sigma, color, comp.rgb, comp.depth, comp.weights, comp.opacity)


def _chunks(total: int, chunk: int):
	if chunk < 1:
		raise ValidationError(f"ray chunk must be positive, got {chunk}", module="renderer")
	for start in range(0, total, chunk):
		yield start, min(start + chunk, total)


def render_image(
	fld: HierarchicalField,
	camera: Camera,
	background,
	mode: str = "coarse",
	n_samples: int = 64,
	seed: Optional[int] = None,
	chunk: int = 4096,
) -> RenderedImage:
	"""
	Render a full image without recording a graph.

	Sampling is at bin centres unless a seed is given, in which case each chunk
	draws stratified samples from a generator seeded by (seed, chunk index).
	"""
	rays = generate_rays(camera)
	total = len(rays.origins)
	rgb = np.empty((total, 3))
	depth = np.empty(total)
	opacity = np.empty(total)
	with no_grad():
		for k, (start, stop) in enumerate(_chunks(total, chunk)):
			rng = None if seed is None else np.random.default_rng([seed, k])
			batch = render_rays(
				fld,
				Rays(rays.origins[start:stop], rays.directions[start:stop]),
				camera.near,
				camera.far,
				background,
				mode,
				n_samples,
				stratified=seed is not None,
				rng=rng,
			)
			rgb[start:stop] = batch.rgb.value
			depth[start:stop] = batch.depth.value
			opacity[start:stop] = batch.opacity.value
	h, w = camera.height, camera.width
	return RenderedImage(rgb.reshape(h, w, 3), depth.reshape(h, w), opacity.reshape(h, w))


def render_image_graph(
	fld: HierarchicalField,
	camera: Camera,
	background,
	mode: str = "hierarchical",
	n_samples: int = 64,
	freeze_coarse: bool = True,
	rays: Optional[Rays] = None,
) -> Node:
	"""
	Differentiable (N, 3) render at bin centres in one graph.

	Covers every pixel of the camera, or only the given rays (a chunk of
	generate_rays(camera)); whole images are meant for small cameras.
	"""
	rays = generate_rays(camera) if rays is None else rays
	batch = render_rays(
		fld, rays, camera.near, camera.far, background, mode, n_samples, freeze_coarse=freeze_coarse
	)
	return batch.rgb


def backprop_image(
	fld: HierarchicalField,
	camera: Camera,
	grad_rgb: np.ndarray,
	background,
	mode: str = "hierarchical",
	n_samples: int = 64,
	chunk: int = GRAD_CHUNK,
	freeze_coarse: bool = True,
) -> None:
	"""
	Push an image-space gradient into the field parameters.

	Each ray chunk is re-rendered with a graph at bin-centre samples and
	back-propagated against sum(rgb_chunk * grad_chunk), in fixed chunk order.
	The result equals back-propagating through one whole-image graph.
	"""
	if grad_rgb.shape != (camera.height, camera.width, 3):
		raise ValidationError(
			f"image gradient has shape {grad_rgb.shape}, expected {(camera.height, camera.width, 3)}",
			module="renderer",
		)
	rays = generate_rays(camera)
	flat = grad_rgb.reshape(-1, 3)
	for start, stop in _chunks(len(rays.origins), chunk):
		g = flat[start:stop]
		if not np.any(g):
			continue
		rgb = render_image_graph(
			fld,
			camera,
			background,
			mode,
			n_samples,
			freeze_coarse=freeze_coarse,
			rays=Rays(rays.origins[start:stop], rays.directions[start:stop]),
		)
		backward(ops.sum(ops.mul(rgb, g)))


def render_views(
	fld: HierarchicalField,
	cameras: Sequence[Camera],
	background,
	mode: str = "coarse",
	n_samples: int = 64,
	chunk: int = 4096,
	progress: bool = True,
) -> list[RenderedImage]:
	"""Render a list of cameras at bin-centre samples."""
	images = []
	for camera in tqdm(cameras, desc=f"render[{mode}]", disable=not progress, leave=False):
		images.append(render_image(fld, camera, background, mode, n_samples, chunk=chunk))
	logger("renderer").info(f"Rendered {len(images)} view(s) in {mode} mode")
	return images
