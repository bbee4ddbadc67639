"""Ablation matrix: one stage-2 run per variant from a shared coarse field."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw

from scene_stylizer.exceptions import StylizerError
from scene_stylizer.jobs.base_stage import TrainRun, stage_seeds
from scene_stylizer.jobs.per_view_baseline import per_view_baseline
from scene_stylizer.jobs.style_stage import content_cameras, path_cameras, train_style
from scene_stylizer.jobs.variants import ablation_mode
from scene_stylizer.services.cameras import Camera
from scene_stylizer.services.features import FeatureExtractor
from scene_stylizer.services.fields import load_field
from scene_stylizer.services.image_io import to_uint8, write_png
from scene_stylizer.services.metrics import ConsistencyReport, consistency_report
from scene_stylizer.services.objectives import read_loss_log
from scene_stylizer.services.renderer import render_views
from scene_stylizer.services.scenes.base_scene import SceneDataset
from scene_stylizer.utils.config import resolve_background
from scene_stylizer.utils.logger import log_error, logger

DEFAULT_MATRIX = (
	"",
	"no-residual-density",
	"pe-instead-of-hash",
	"ec-only",
	"constant-lambda(10)",
	"constant-lambda(0.1)",
)
BASELINE_LABEL = "per-view-2d"
TRACE_HEADER = ("variant", "iter", "lambda", "content", "style", "total")
SUMMARY_HEADER = ("variant", "status", "range", "rmse", "ssim", "fpd")
SHEET_COLUMNS = 4
LABEL_HEIGHT = 14


@dataclass
class VariantResult:
	"""Outcome of one matrix entry; failed entries keep their error message."""

	label: str
	directory: str
	status: str = "Pending"
	run: Optional[TrainRun] = None
	images: List[np.ndarray] = field(default_factory=list)
	report: Optional[ConsistencyReport] = None
	error_message: str = ""


@dataclass
class AblationResult:
	variants: List[VariantResult]
	cameras: List[Camera]
	trace_csv: str = ""
	summary_csv: str = ""
	contact_sheet: str = ""

	@property
	def failed(self) -> List[VariantResult]:
		return [v for v in self.variants if v.status == "Failed"]


def variant_dirname(label: str) -> str:
	return "".join(c if c.isalnum() or c in "-." else "_" for c in label)


def _evaluate(
	fld, cameras: Sequence[Camera], background, mode: str, cfg: Mapping[str, Any], z_tol: float, extractor
) -> tuple[List[np.ndarray], ConsistencyReport]:
	renders = render_views(fld, cameras, background, mode, cfg["render.n_samples"], cfg["render.chunk"], cfg["run.progress"])
	images = [r.rgb for r in renders]
	depths = [r.surface_depth() for r in renders]
	report = consistency_report(
		images, depths, cameras, z_tol, cfg["metrics.short_pairs"], _long_offset(cfg, len(cameras)), extractor
	)
	return images, report


def _long_offset(cfg: Mapping[str, Any], n_views: int) -> Optional[int]:
	offset = cfg["metrics.long_offset"]
	return offset if 0 < offset < n_views else None


def run_variant(
	flags: str,
	coarse_checkpoint: str,
	style_image: np.ndarray,
	dataset: SceneDataset,
	cfg: Mapping[str, Any],
	out_dir: str,
	eval_cameras: Sequence[Camera],
	content_poses: Sequence[Camera],
	extractor: FeatureExtractor,
) -> VariantResult:
	"""Train and evaluate one variant; errors are recorded on the result instead of raised."""
	mode = ablation_mode(flags)
	result = VariantResult(mode.label, os.path.join(out_dir, variant_dirname(mode.label)))
	background = resolve_background(cfg["render.background"], dataset.object_scene)
	z_tol = cfg["metrics.z_tol_fraction"] * dataset.bounds.diameter
	try:
		result.run = train_style(
			coarse_checkpoint,
			style_image,
			dataset,
			cfg,
			result.directory,
			mode=mode,
			extractor=extractor,
			cameras=content_poses,
		)
		fld = load_field(result.run.final_checkpoint)
		result.images, result.report = _evaluate(fld, eval_cameras, background, mode.render_mode, cfg, z_tol, extractor)
		for k, image in enumerate(result.images):
			write_png(os.path.join(result.directory, "renders", f"{k:03d}.png"), image)
		result.report.write_csv(os.path.join(result.directory, "consistency.csv"))
		result.status = "Success"
	except StylizerError as e:
		result.status = "Failed"
		result.error_message = str(e)
		log_error(f"variant '{mode.label}': {e}", "Ablation Variant Failed", "trainer")
	return result


def run_baseline(
	coarse_checkpoint: str,
	style_image: np.ndarray,
	dataset: SceneDataset,
	cfg: Mapping[str, Any],
	out_dir: str,
	eval_cameras: Sequence[Camera],
	extractor: FeatureExtractor,
) -> VariantResult:
	"""Per-view 2D stylization of the coarse renders, warped with coarse depth."""
	result = VariantResult(BASELINE_LABEL, os.path.join(out_dir, BASELINE_LABEL))
	background = resolve_background(cfg["render.background"], dataset.object_scene)
	z_tol = cfg["metrics.z_tol_fraction"] * dataset.bounds.diameter
	try:
		fld = load_field(coarse_checkpoint, seed=stage_seeds(cfg["run.seed"])["init"])
		renders = render_views(
			fld, eval_cameras, background, "coarse", cfg["render.n_samples"], cfg["render.chunk"], cfg["run.progress"]
		)
		depths = [r.surface_depth() for r in renders]
		result.images = per_view_baseline([r.rgb for r in renders], style_image, cfg, extractor, cfg["run.progress"])
		result.report = consistency_report(
			result.images,
			depths,
			eval_cameras,
			z_tol,
			cfg["metrics.short_pairs"],
			_long_offset(cfg, len(eval_cameras)),
			extractor,
		)
		for k, image in enumerate(result.images):
			write_png(os.path.join(result.directory, "renders", f"{k:03d}.png"), image)
		result.report.write_csv(os.path.join(result.directory, "consistency.csv"))
		result.status = "Success"
	except StylizerError as e:
		result.status = "Failed"
		result.error_message = str(e)
		log_error(f"per-view baseline: {e}", "Ablation Variant Failed", "trainer")
	return result


def write_trace_csv(variants: Sequence[VariantResult], path: str) -> str:
	"""Per-iteration loss terms of every successful variant, one row per (variant, iteration)."""
	with open(path, "w", newline="", encoding="utf-8") as fh:
		writer = csv.writer(fh)
		writer.writerow(TRACE_HEADER)
		for variant in variants:
			if variant.run is None or not variant.run.loss_log:
				continue
			for report in read_loss_log(variant.run.loss_log):
				writer.writerow(
					[variant.label, report.iteration, repr(report.lam), repr(report.content), repr(report.style), repr(report.total)]
				)
	return path


def write_summary_csv(variants: Sequence[VariantResult], path: str) -> str:
	with open(path, "w", newline="", encoding="utf-8") as fh:
		writer = csv.writer(fh)
		writer.writerow(SUMMARY_HEADER)
		for variant in variants:
			if variant.report is None:
				writer.writerow([variant.label, variant.status, "", "", "", ""])
				continue
			for name, agg in variant.report.aggregates().items():
				writer.writerow([variant.label, variant.status, name, repr(agg["rmse"]), repr(agg["ssim"]), repr(agg["fpd"])])
	return path


def sheet_columns(n_views: int, columns: int = SHEET_COLUMNS) -> List[int]:
	"""Evenly spaced view indices for the contact sheet."""
	count = min(columns, n_views)
	return [int(round(k * n_views / count)) % n_views for k in range(count)]


def contact_sheet(rows: Sequence[tuple[str, Sequence[np.ndarray]]], path: str, columns: int = SHEET_COLUMNS) -> str:
	"""
	One labelled row of views per variant.

	Args:
		rows: (label, images) pairs; images share one size
		path: Output PNG
		columns: Views per row, picked evenly along each image list
	"""
	rows = [(label, images) for label, images in rows if images]
	if not rows:
		raise StylizerError("contact sheet has no rows to draw", module="trainer")
	h, w = rows[0][1][0].shape[:2]
	picks = sheet_columns(len(rows[0][1]), columns)
	row_height = h + LABEL_HEIGHT
	sheet = Image.new("RGB", (w * len(picks), row_height * len(rows)), (255, 255, 255))
	draw = ImageDraw.Draw(sheet)
	for r, (label, images) in enumerate(rows):
		top = r * row_height
		draw.text((2, top + 1), label, fill=(0, 0, 0))
		for c, index in enumerate(picks):
			if index < len(images):
				sheet.paste(Image.fromarray(to_uint8(images[index])), (c * w, top + LABEL_HEIGHT))
	os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
	sheet.save(path)
	return path


def run_ablation(
	coarse_checkpoint: str,
	style_image: np.ndarray,
	dataset: SceneDataset,
	cfg: Mapping[str, Any],
	out_dir: str,
	matrix: Sequence[str] = DEFAULT_MATRIX,
	with_baseline: bool = False,
	eval_cameras: Optional[Sequence[Camera]] = None,
	extractor: Optional[FeatureExtractor] = None,
) -> AblationResult:
	"""
	Run every variant of the matrix against one coarse checkpoint.

	Each variant trains in its own subdirectory of out_dir with the same
	seed, content poses and extractor, then renders the evaluation path
	(metrics.pose_path) and scores its consistency. A failing variant is
	marked Failed and the rest still run.

	Writes loss-traces.csv, ablation-summary.csv and contact-sheet.png under out_dir.
	"""
	os.makedirs(out_dir, exist_ok=True)
	for flags in matrix:
		ablation_mode(flags)
	extractor = extractor or FeatureExtractor.load(cfg["features.weights"] or None)
	if eval_cameras is None:
		eval_cameras = path_cameras(
			dataset, cfg["metrics.pose_path"], cfg["style_train.image_size"], cfg["scene.arc_degrees"]
		)
	eval_cameras = list(eval_cameras)
	poses = content_cameras(dataset, cfg)

	logger("trainer").info(f"Ablation: {len(matrix)} variant(s), {len(eval_cameras)} evaluation view(s)")
	variants: List[VariantResult] = []
	for flags in matrix:
		variants.append(
			run_variant(flags, coarse_checkpoint, style_image, dataset, cfg, out_dir, eval_cameras, poses, extractor)
		)
		logger("trainer").info(f"Variant {variants[-1].label}: {variants[-1].status}")
	if with_baseline:
		variants.append(run_baseline(coarse_checkpoint, style_image, dataset, cfg, out_dir, eval_cameras, extractor))

	result = AblationResult(variants, eval_cameras)
	result.trace_csv = write_trace_csv(variants, os.path.join(out_dir, "loss-traces.csv"))
	result.summary_csv = write_summary_csv(variants, os.path.join(out_dir, "ablation-summary.csv"))
	rows = [(v.label, v.images) for v in variants if v.status == "Success"]
	if rows:
		result.contact_sheet = contact_sheet(rows, os.path.join(out_dir, "contact-sheet.png"))
	summary: Dict[str, str] = {v.label: v.status for v in variants}
	logger("trainer").info(f"Ablation finished: {summary}")
	return result
