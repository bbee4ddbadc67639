"""Stage 2: stylize the fine field with the coarse field frozen.

Every step renders one full content view, extracts its features and
minimises lambda(t) * content + style against the coarse render's features
and the style image's features. The loss gradient is taken with respect to
the rendered image, then pushed into the field ray chunk by ray chunk.

Only the fine network and hash tables are optimised (the coarse field
itself in the finetune-coarse variant). Coarse and extractor parameters are
hashed before training and re-checked at every checkpoint and at the end.
"""
from __future__ import annotations

import math
import os
from typing import Any, List, Mapping, Optional, Sequence

import numpy as np
from tqdm import tqdm

from scene_stylizer.diffcore.optim import Adam
from scene_stylizer.diffcore.tape import Node, backward, no_grad
from scene_stylizer.exceptions import FreezeViolationError, NonFiniteError, NonFiniteLossError, ValidationError
from scene_stylizer.jobs.base_stage import StageConfig, StepTimer, TrainRun, field_config_from, stage_seeds
from scene_stylizer.jobs.variants import AblationMode, ablation_mode
from scene_stylizer.services.cameras import Camera, pose_path
from scene_stylizer.services.features import FeatureExtractor, extract
from scene_stylizer.services.fields import HierarchicalField, load_field, save_field
from scene_stylizer.services.objectives import (
	AnnealSchedule,
	LossLog,
	LossReport,
	content_loss,
	style_loss,
	total_loss,
)
from scene_stylizer.services.renderer import backprop_image, render_image
from scene_stylizer.services.scenes.base_scene import SceneDataset
from scene_stylizer.utils.cleanup import checkpoint_name, prune_checkpoints
from scene_stylizer.utils.config import resolve_background
from scene_stylizer.utils.logger import log_error, logger
from scene_stylizer.utils.validation import ensure_finite, ensure_unit_range, hash_arrays

STAGE = "style"
FINAL_CHECKPOINT = "stylized.sfck"
MIN_STYLE_SIDE = 64


def schedule_from(cfg: Mapping[str, Any]) -> AnnealSchedule:
	return AnnealSchedule(cfg["objective.lambda0"], cfg["objective.alpha"], cfg["objective.T"])


def training_size(camera: Camera, width: int) -> tuple[int, int]:
	"""(width, height) at the requested width, keeping the aspect ratio."""
	height = max(8, int(round(width * camera.height / camera.width)))
	return width, height


def content_cameras(dataset: SceneDataset, cfg: Mapping[str, Any], n_novel: Optional[int] = None) -> List[Camera]:
	"""
	Training poses at the stage-2 resolution followed by novel poses.

	Novel poses follow a circle around the scene centre for object scenes and
	an arc through the middle training pose for forward-facing ones.
	"""
	n_novel = cfg["objective.novel_poses"] if n_novel is None else n_novel
	if n_novel < 0:
		raise ValidationError(f"objective.novel_poses must be >= 0, got {n_novel}", module="trainer")
	width = cfg["style_train.image_size"]
	train = [dataset.cameras[i] for i in dataset.train_indices]
	cameras = [c.resized(*training_size(c, width)) for c in train]
	if n_novel:
		kind = "circle" if dataset.object_scene else "arc"
		cameras += path_cameras(dataset, f"{kind}{n_novel}", width, cfg["scene.arc_degrees"])
	return cameras


def path_cameras(dataset: SceneDataset, spec: str, width: int, arc_degrees: float = 30.0) -> List[Camera]:
	"""Cameras along a named path around the scene centre, templated on the middle training view."""
	middle = dataset.cameras[dataset.train_indices[len(dataset.train_indices) // 2]]
	template = middle.resized(*training_size(middle, width))
	target = 0.5 * (dataset.bounds.lo + dataset.bounds.hi)
	return pose_path(spec, template, target, arc_degrees)


def check_style_image(style_image: np.ndarray) -> np.ndarray:
	style = np.asarray(style_image, dtype=np.float64)
	if style.ndim != 3 or style.shape[2] != 3:
		raise ValidationError(f"style image must be (H, W, 3), got {style.shape}", module="trainer")
	if min(style.shape[:2]) < MIN_STYLE_SIDE:
		raise ValidationError(
			f"style image must be at least {MIN_STYLE_SIDE} px per side, got {style.shape[1]}x{style.shape[0]}",
			module="trainer",
		)
	ensure_finite(style, "style image", "trainer")
	ensure_unit_range(style, "style image", "trainer")
	return style


def features_of(extractor: FeatureExtractor, image: np.ndarray) -> np.ndarray:
	with no_grad():
		return extract(extractor, np.clip(image, 0.0, 1.0)).values.value


class FreezeGuard:
	"""Hashes of parameters that stage 2 must leave untouched."""

	def __init__(self, fld: HierarchicalField, extractor: FeatureExtractor, mode: AblationMode):
		self.fld = fld
		self.extractor = extractor
		self.check_coarse = not mode.finetune_coarse
		self.coarse_hash = hash_arrays(fld.coarse.state_dict())
		self.extractor_hash = hash_arrays(extractor.weights)

	def verify(self, iteration: int) -> None:
		if self.check_coarse and hash_arrays(self.fld.coarse.state_dict()) != self.coarse_hash:
			raise FreezeViolationError(f"coarse field parameters changed by iteration {iteration}")
		if hash_arrays(self.extractor.weights) != self.extractor_hash:
			raise FreezeViolationError(f"feature extractor weights changed by iteration {iteration}")


def train_style(
	coarse_checkpoint: str,
	style_image: np.ndarray,
	dataset: SceneDataset,
	cfg: Mapping[str, Any],
	run_dir: str,
	stage: Optional[StageConfig] = None,
	mode: Optional[AblationMode] = None,
	extractor: Optional[FeatureExtractor] = None,
	cameras: Optional[Sequence[Camera]] = None,
) -> TrainRun:
	"""
	Stylize a trained coarse field.

	Content poses are visited round-robin. Renders use bin-centre samples so
	the content targets and the optimised renders see the same points.

	Args:
		coarse_checkpoint: Stage-1 checkpoint
		style_image: (H, W, 3) style reference in [0, 1], at least 64 px per side
		dataset: Scene the coarse field was trained on
		cfg: Resolved RunConfig
		run_dir: Directory receiving checkpoints, the loss log and the summary
		stage: Schedule override; defaults to the style_train.* keys
		mode: Ablation variant; defaults to style_train.ablation
		extractor: Feature extractor; defaults to features.weights or the seeded weights
		cameras: Content poses; defaults to content_cameras(dataset, cfg)

	Raises:
		FreezeViolationError: If coarse or extractor parameters change
		NonFiniteLossError: On a non-finite loss or gradient
	"""
	stage = stage or StageConfig.from_config(cfg, "style_train")
	mode = mode or ablation_mode(cfg["style_train.ablation"])
	seeds = stage_seeds(stage.seed)
	os.makedirs(run_dir, exist_ok=True)

	fld = load_field(coarse_checkpoint, field_config_from(cfg, **mode.field_overrides()), seed=seeds["init"])
	style = check_style_image(style_image)
	extractor = extractor or FeatureExtractor.load(cfg["features.weights"] or None)
	background = resolve_background(cfg["render.background"], dataset.object_scene)
	n_samples, chunk = cfg["render.n_samples"], cfg["render.chunk"]
	grad_chunk = cfg["render.grad_chunk"]
	normalize = cfg["features.normalize"]
	schedule = mode.schedule(schedule_from(cfg))
	render_mode = mode.render_mode
	poses = list(cameras) if cameras is not None else content_cameras(dataset, cfg)

	style_features = features_of(extractor, style)
	content_features = [
		features_of(extractor, render_image(fld, cam, background, "coarse", n_samples, chunk=chunk).rgb) for cam in poses
	]
	guard = FreezeGuard(fld, extractor, mode)

	params = fld.coarse_parameters() if mode.finetune_coarse else fld.fine_parameters()
	optimizer = Adam(params, stage.lr, cfg["adam.beta1"], cfg["adam.beta2"], cfg["adam.eps"])
	run = TrainRun(STAGE, run_dir, loss_log=os.path.join(run_dir, f"{STAGE}-loss.jsonl"))
	log = LossLog(run.loss_log)
	timer = StepTimer(stage.log_every)
	last_good = save_field(fld, os.path.join(run_dir, checkpoint_name(STAGE, 0)))
	run.checkpoints.append(last_good)

	logger("trainer").info(
		f"Stage 2 [{mode.label}]: {stage.iterations} iteration(s) over {len(poses)} content pose(s) "
		f"at {poses[0].width}x{poses[0].height}"
	)
	for t in tqdm(range(stage.iterations), desc=STAGE, disable=not stage.progress):
		k = t % len(poses)
		camera = poses[k]
		optimizer.set_lr(stage.lr_at(t))

		rendered = render_image(fld, camera, background, render_mode, n_samples, chunk=chunk)
		image = Node(np.clip(rendered.rgb, 0.0, 1.0), requires_grad=True)
		features = extract(extractor, image)
		content = content_loss(features, content_features[k], normalize)
		styled = style_loss(features, style_features)
		lam = schedule(t)
		total = total_loss(content, styled, lam)
		value = float(total.value)
		if not math.isfinite(value):
			log_error(f"loss is {value} at iteration {t}", "Non-finite Loss", "trainer")
			raise NonFiniteLossError(f"stage 2 loss became {value} at iteration {t}", last_good)

		backward(total)
		backprop_image(
			fld,
			camera,
			image.grad,
			background,
			render_mode,
			n_samples,
			grad_chunk,
			freeze_coarse=not mode.finetune_coarse,
		)
		try:
			optimizer.step()
		except NonFiniteError as e:
			raise NonFiniteLossError(f"stage 2 iteration {t}: {e}", last_good)

		run.history.append(value)
		log.append(LossReport(t, lam, content=float(content.value), style=float(styled.value), total=value))
		timer.tick(t, run)
		if stage.log_every and (t + 1) % stage.log_every == 0:
			logger("trainer").info(
				f"[{STAGE}] iter {t + 1}/{stage.iterations} total {value:.5f} "
				f"content {float(content.value):.5f} style {float(styled.value):.5f} lambda {lam:.4g}"
			)
		if stage.checkpoint_every and (t + 1) % stage.checkpoint_every == 0:
			guard.verify(t + 1)
			last_good = save_field(fld, os.path.join(run_dir, checkpoint_name(STAGE, t + 1)))
			run.checkpoints.append(last_good)
			prune_checkpoints(run_dir, STAGE, stage.keep_checkpoints)

	guard.verify(run.completed)
	run.final_checkpoint = save_field(fld, os.path.join(run_dir, FINAL_CHECKPOINT))
	run.checkpoints = [p for p in run.checkpoints if os.path.exists(p)]
	run.write_summary()
	logger("trainer").info(f"Stage 2 finished after {run.completed} iteration(s): {run.final_checkpoint}")
	return run
