"""
Cross-view consistency metrics.

Views are compared by warping one into the other with depth: every pixel of
view A is lifted to 3D along its ray, projected into view B and bilinearly
splatted onto B's pixel grid. A splat only lands where the reprojected
distance agrees with B's own depth within z_tol. Pixels receiving at least
half a unit of splat weight form the validity mask on which masked RMSE,
masked SSIM and the feature distance proxy ("FPD (proxy)") are computed.

The feature distance is a stand-in built on the fixed extractor; it is not
LPIPS and is never labeled as such.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from tqdm import tqdm

from scene_stylizer.diffcore.tape import no_grad
from scene_stylizer.exceptions import ShapeError, ValidationError
from scene_stylizer.services.cameras import Camera
from scene_stylizer.services.features import FeatureExtractor, extract
from scene_stylizer.services.renderer import generate_rays
from scene_stylizer.utils.logger import log_error, logger

LUMA = np.array([0.2126, 0.7152, 0.0722])
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
SPLAT_MIN_WEIGHT = 0.5
FEATURE_STRIDE = 4
FPD_LABEL = "FPD (proxy)"
CSV_HEADER = ("pair_id", "range", "rmse", "ssim", "fpd")


@dataclass
class WarpResult:
	"""Warped image on B's grid, validity mask and the valid fraction."""

	image: np.ndarray
	mask: np.ndarray
	fraction_valid: float


def _check_view(image: np.ndarray, depth: np.ndarray, camera: Camera, what: str) -> None:
	if image.ndim != 3 or image.shape[2] != 3:
		raise ShapeError(f"{what}: expected an (H, W, 3) image, got {image.shape}", module="metrics")
	if depth.shape != image.shape[:2] or camera.shape != image.shape[:2]:
		raise ShapeError(
			f"{what}: image {image.shape[:2]}, depth {depth.shape} and camera {camera.shape} disagree",
			module="metrics",
		)


def warp(
	image_a: np.ndarray,
	depth_a: np.ndarray,
	cam_a: Camera,
	cam_b: Camera,
	depth_b: np.ndarray,
	z_tol: float,
) -> WarpResult:
	"""
	Forward-warp view A into view B.

	Depths are distances along unit rays; non-finite or non-positive source
	depths contribute nothing.

	Args:
		image_a: (H, W, 3) source image
		depth_a: (H, W) source depth
		cam_a: Source camera
		cam_b: Target camera
		depth_b: Target depth on B's grid, used for the occlusion test
		z_tol: Largest accepted |reprojected distance - depth_b|

	Returns:
		WarpResult on B's pixel grid

	Raises:
		ShapeError: If an image, its depth and its camera disagree in size
	"""
	image_a = np.asarray(image_a, dtype=np.float64)
	depth_a = np.asarray(depth_a, dtype=np.float64)
	depth_b = np.asarray(depth_b, dtype=np.float64)
	_check_view(image_a, depth_a, cam_a, "warp source")
	if depth_b.shape != cam_b.shape:
		raise ShapeError(f"warp target: depth {depth_b.shape} vs camera {cam_b.shape}", module="metrics")
	if z_tol < 0:
		raise ValidationError(f"z_tol must be >= 0, got {z_tol}", module="metrics")

	hb, wb = cam_b.shape
	flat_depth = depth_a.reshape(-1)
	colors = image_a.reshape(-1, 3)
	source = np.isfinite(flat_depth) & (flat_depth > 0)

	rays = generate_rays(cam_a)
	points = rays.origins[source] + flat_depth[source, None] * rays.directions[source]
	uv, z, dist = cam_b.project(points)
	colors = colors[source]
	front = z > 0
	uv, dist, colors = uv[front], dist[front], colors[front]

	# pixel (i, j) is centred at (i + 0.5, j + 0.5)
	px = uv - 0.5
	base = np.floor(px).astype(np.int64)
	frac = px - base

	accum = np.zeros((hb * wb, 3))
	weight = np.zeros(hb * wb)
	target_depth = depth_b.reshape(-1)
	for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1)):
		col = base[:, 0] + dx
		row = base[:, 1] + dy
		w = (frac[:, 0] if dx else 1.0 - frac[:, 0]) * (frac[:, 1] if dy else 1.0 - frac[:, 1])
		inside = (col >= 0) & (col < wb) & (row >= 0) & (row < hb) & (w > 0)
		index = row[inside] * wb + col[inside]
		with np.errstate(invalid="ignore"):
			visible = np.abs(dist[inside] - target_depth[index]) <= z_tol
		index = index[visible]
		w_kept = w[inside][visible]
		weight += np.bincount(index, weights=w_kept, minlength=hb * wb)
		for c in range(3):
			accum[:, c] += np.bincount(index, weights=w_kept * colors[inside][visible, c], minlength=hb * wb)

	mask = weight >= SPLAT_MIN_WEIGHT
	warped = np.zeros((hb * wb, 3))
	warped[mask] = accum[mask] / weight[mask, None]
	mask = mask.reshape(hb, wb)
	return WarpResult(warped.reshape(hb, wb, 3), mask, float(mask.mean()))


def _check_pair(img_a: np.ndarray, img_b: np.ndarray, what: str) -> Tuple[np.ndarray, np.ndarray]:
	a = np.asarray(img_a, dtype=np.float64)
	b = np.asarray(img_b, dtype=np.float64)
	if a.shape != b.shape:
		raise ShapeError(f"{what}: shapes differ, {a.shape} vs {b.shape}", module="metrics")
	return a, b


def _check_mask(mask: Optional[np.ndarray], shape: Tuple[int, int], what: str) -> np.ndarray:
	if mask is None:
		return np.ones(shape, dtype=bool)
	mask = np.asarray(mask, dtype=bool)
	if mask.shape != shape:
		raise ShapeError(f"{what}: mask {mask.shape} does not match image {shape}", module="metrics")
	if not mask.any():
		raise ValidationError(f"{what}: mask is empty", module="metrics")
	return mask


def masked_rmse(img_a: np.ndarray, img_b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
	"""sqrt of the mean squared difference over masked pixels and all channels."""
	a, b = _check_pair(img_a, img_b, "masked_rmse")
	mask = _check_mask(mask, a.shape[:2], "masked_rmse")
	return float(np.sqrt(np.mean((a[mask] - b[mask]) ** 2)))


def to_luma(image: np.ndarray) -> np.ndarray:
	image = np.asarray(image, dtype=np.float64)
	return image @ LUMA if image.ndim == 3 else image


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
	"""Normalized 1D Gaussian taps."""
	x = np.arange(size) - (size - 1) / 2.0
	g = np.exp(-0.5 * (x / sigma) ** 2)
	return g / g.sum()


def _filter_valid(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
	"""Separable correlation over windows lying fully inside x."""
	rows = sliding_window_view(x, len(taps), axis=1) @ taps
	return sliding_window_view(rows, len(taps), axis=0) @ taps


def ssim_map(img_a: np.ndarray, img_b: np.ndarray, data_range: float = 1.0) -> np.ndarray:
	"""Per-window SSIM of the luma channels, shape (H - 10, W - 10) for 11-tap windows."""
	a, b = _check_pair(img_a, img_b, "ssim")
	y_a, y_b = to_luma(a), to_luma(b)
	if min(y_a.shape) < SSIM_WINDOW:
		raise ValidationError(
			f"ssim: image {y_a.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window", module="metrics"
		)
	taps = gaussian_window()
	c1 = (SSIM_K1 * data_range) ** 2
	c2 = (SSIM_K2 * data_range) ** 2
	mu_a = _filter_valid(y_a, taps)
	mu_b = _filter_valid(y_b, taps)
	var_a = np.maximum(_filter_valid(y_a * y_a, taps) - mu_a**2, 0.0)
	var_b = np.maximum(_filter_valid(y_b * y_b, taps) - mu_b**2, 0.0)
	cov = _filter_valid(y_a * y_b, taps) - mu_a * mu_b
	return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))


def ssim(img_a: np.ndarray, img_b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
	"""
	Mean SSIM over windows whose centre pixel is in mask.

	Luma Y = 0.2126 R + 0.7152 G + 0.0722 B, range 1, 11x11 Gaussian window
	with sigma 1.5, C1 = (0.01)^2 and C2 = (0.03)^2.

	Raises:
		ValidationError: If the image is smaller than the window or no window is valid
	"""
	values = ssim_map(img_a, img_b)
	shape = np.shape(img_a)[:2]
	mask = _check_mask(mask, shape, "ssim")
	half = SSIM_WINDOW // 2
	centres = mask[half : shape[0] - half, half : shape[1] - half]
	if not centres.any():
		raise ValidationError("ssim: no valid window centre inside the mask", module="metrics")
	return float(np.clip(values[centres].mean(), -1.0, 1.0))


def psnr(img_a: np.ndarray, img_b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
	"""10 log10(1 / MSE) for range 1; +inf when the images are identical."""
	a, b = _check_pair(img_a, img_b, "psnr")
	if mask is None:
		diff = a - b
	else:
		mask = _check_mask(mask, a.shape[:2], "psnr")
		diff = a[mask] - b[mask]
	mse = float(np.mean(diff**2))
	if mse == 0.0:
		return float("inf")
	return float(10.0 * np.log10(1.0 / mse))


def _feature_mask(mask: np.ndarray, height: int, width: int) -> np.ndarray:
	"""Feature locations whose whole receptive block of pixels is valid."""
	h, w = mask.shape
	padded = np.zeros((height * FEATURE_STRIDE, width * FEATURE_STRIDE), dtype=bool)
	padded[:h, :w] = mask
	return padded.reshape(height, FEATURE_STRIDE, width, FEATURE_STRIDE).all(axis=(1, 3))


def _unit_features(extractor: FeatureExtractor, image: np.ndarray) -> np.ndarray:
	with no_grad():
		fmap = extract(extractor, np.clip(image, 0.0, 1.0))
	values = fmap.numpy()
	return values / (np.linalg.norm(values, axis=2, keepdims=True) + 1e-10)


def fpd_proxy(
	img_a: np.ndarray,
	img_b: np.ndarray,
	mask: Optional[np.ndarray] = None,
	extractor: Optional[FeatureExtractor] = None,
) -> float:
	"""
	Feature distance proxy: mean squared distance of unit-normalized extractor
	features over feature locations fully covered by mask.
	"""
	a, b = _check_pair(img_a, img_b, "fpd_proxy")
	mask = _check_mask(mask, a.shape[:2], "fpd_proxy")
	extractor = extractor or FeatureExtractor.default()
	fa = _unit_features(extractor, a)
	fb = _unit_features(extractor, b)
	valid = _feature_mask(mask, fa.shape[0], fa.shape[1])
	if not valid.any():
		raise ValidationError("fpd_proxy: mask covers no complete feature block", module="metrics")
	return float(np.mean(np.sum((fa[valid] - fb[valid]) ** 2, axis=1)))


@dataclass
class PairMetrics:
	pair_id: int
	range: str
	view_a: int
	view_b: int
	rmse: float
	ssim: float
	fpd: float
	fraction_valid: float


@dataclass
class ConsistencyReport:
	"""Per-pair metrics plus per-range means."""

	pairs: List[PairMetrics] = field(default_factory=list)

	def aggregates(self) -> Dict[str, Dict[str, float]]:
		summary: Dict[str, Dict[str, float]] = {}
		for name in ("short", "long"):
			rows = [p for p in self.pairs if p.range == name]
			if not rows:
				continue
			summary[name] = {
				"rmse": float(np.nanmean([p.rmse for p in rows])),
				"ssim": float(np.nanmean([p.ssim for p in rows])),
				"fpd": float(np.nanmean([p.fpd for p in rows])),
				"pairs": float(len(rows)),
			}
		return summary

	def to_table(self) -> str:
		lines = [f"{'pair':>4}  {'range':<5}  {'views':>7}  {'valid':>6}  {'rmse':>8}  {'ssim':>8}  {FPD_LABEL:>12}"]
		for p in self.pairs:
			views = f"{p.view_a}->{p.view_b}"
			lines.append(
				f"{p.pair_id:>4}  {p.range:<5}  {views:>7}  {p.fraction_valid:>6.3f}  "
				f"{p.rmse:>8.4f}  {p.ssim:>8.4f}  {p.fpd:>12.4f}"
			)
		for name, agg in self.aggregates().items():
			lines.append(
				f"mean  {name:<5}  {int(agg['pairs']):>7}  {'':>6}  "
				f"{agg['rmse']:>8.4f}  {agg['ssim']:>8.4f}  {agg['fpd']:>12.4f}"
			)
		return "\n".join(lines) + "\n"

	def write_csv(self, path: str) -> str:
		"""CSV with header pair_id,range,rmse,ssim,fpd; fpd is the proxy distance."""
		os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
		with open(path, "w", newline="", encoding="utf-8") as fh:
			writer = csv.writer(fh)
			writer.writerow(CSV_HEADER)
			for p in self.pairs:
				writer.writerow([p.pair_id, p.range, repr(p.rmse), repr(p.ssim), repr(p.fpd)])
		return path


def view_pairs(n_views: int, short_pairs: int = 10, long_offset: Optional[int] = None) -> List[Tuple[str, int, int]]:
	"""
	Evaluation pairs on a camera path: (range, a, b).

	Short-range pairs are adjacent poses; long-range pairs are long_offset poses
	apart (half the path by default).
	"""
	if n_views < 2:
		raise ValidationError(f"consistency needs at least 2 views, got {n_views}", module="metrics")
	offset = n_views // 2 if long_offset is None else long_offset
	if not 0 < offset < n_views:
		raise ValidationError(f"long-range offset must lie in [1, {n_views - 1}], got {offset}", module="metrics")
	count = min(short_pairs, n_views - 1)
	pairs = [("short", i, i + 1) for i in range(count)]
	pairs += [("long", i, (i + offset) % n_views) for i in range(min(short_pairs, n_views))]
	return pairs


def consistency_report(
	images: Sequence[np.ndarray],
	depths: Sequence[np.ndarray],
	cameras: Sequence[Camera],
	z_tol: float,
	short_pairs: int = 10,
	long_offset: Optional[int] = None,
	extractor: Optional[FeatureExtractor] = None,
	progress: bool = False,
) -> ConsistencyReport:
	"""
	Short- and long-range consistency of a rendered camera path.

	Each pair warps view a into view b and compares the warp with view b on
	the warp's validity mask. Pairs with an empty mask are reported as NaN.
	"""
	if not len(images) == len(depths) == len(cameras):
		raise ValidationError(
			f"consistency needs matching views: {len(images)} images, {len(depths)} depths, {len(cameras)} cameras",
			module="metrics",
		)
	extractor = extractor or FeatureExtractor.default()
	report = ConsistencyReport()
	pairs = view_pairs(len(images), short_pairs, long_offset)
	for pair_id, (name, a, b) in enumerate(tqdm(pairs, desc="consistency", disable=not progress, leave=False)):
		result = warp(images[a], depths[a], cameras[a], cameras[b], depths[b], z_tol)
		try:
			rmse = masked_rmse(result.image, images[b], result.mask)
			ssim_value = ssim(result.image, images[b], result.mask)
			fpd = fpd_proxy(result.image, images[b], result.mask, extractor)
		except ValidationError as e:
			log_error(f"pair {a}->{b}: {e}", "Consistency Pair Skipped", "metrics")
			rmse = ssim_value = fpd = float("nan")
		report.pairs.append(PairMetrics(pair_id, name, a, b, rmse, ssim_value, fpd, result.fraction_valid))
	logger("metrics").info(f"Evaluated {len(report.pairs)} view pair(s)")
	return report
