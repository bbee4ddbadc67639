"""Stage 1: fit the coarse field to the posed training views.

Random batches of training rays are rendered through the coarse field and
the mean squared color error is minimised with Adam. Periodic checkpoints
hold the coarse parameters only; the newest few are kept and each one is
scored by PSNR on the held-out views.
"""
from __future__ import annotations

import math
import os
from typing import Any, Mapping, Optional

import numpy as np
from tqdm import tqdm

from scene_stylizer.diffcore.optim import Adam
from scene_stylizer.diffcore.tape import backward
from scene_stylizer.exceptions import NonFiniteError, NonFiniteLossError
from scene_stylizer.jobs.base_stage import (
	StageConfig,
	StepTimer,
	TrainRun,
	field_config_from,
	stack_views,
	stage_seeds,
)
from scene_stylizer.services.fields import HierarchicalField, save_field
from scene_stylizer.services.metrics import psnr
from scene_stylizer.services.objectives import LossLog, LossReport, recon_loss
from scene_stylizer.services.renderer import Rays, render_image, render_rays
from scene_stylizer.services.scenes.base_scene import SceneDataset
from scene_stylizer.utils.cleanup import checkpoint_name, prune_checkpoints
from scene_stylizer.utils.config import resolve_background
from scene_stylizer.utils.logger import log_error, logger

STAGE = "coarse"
FINAL_CHECKPOINT = "coarse.sfck"


def heldout_psnr(
	fld: HierarchicalField, dataset: SceneDataset, background, n_samples: int, chunk: int
) -> Optional[float]:
	"""Mean PSNR of coarse renders against the held-out views, or None without any."""
	views = dataset.heldout_views()
	if not views:
		return None
	scores = [psnr(render_image(fld, camera, background, "coarse", n_samples, chunk=chunk).rgb, image) for image, camera in views]
	finite = [s for s in scores if math.isfinite(s)]
	return float(np.mean(finite)) if finite else float("inf")


def _save(fld: HierarchicalField, path: str, run: TrainRun) -> str:
	save_field(fld, path, include_fine=False)
	run.checkpoints.append(path)
	return path


def train_coarse(
	dataset: SceneDataset,
	cfg: Mapping[str, Any],
	run_dir: str,
	stage: Optional[StageConfig] = None,
) -> TrainRun:
	"""
	Optimise a fresh coarse field on the dataset's training views.

	Args:
		dataset: Posed views; only train_indices are fitted
		cfg: Resolved RunConfig
		run_dir: Directory receiving checkpoints, the loss log and the summary
		stage: Schedule override; defaults to the coarse_train.* keys

	Returns:
		TrainRun whose final_checkpoint holds the coarse parameters. With zero
		iterations the checkpoint equals the initialization.

	Raises:
		NonFiniteLossError: On a non-finite loss or gradient; carries the last good checkpoint
	"""
	stage = stage or StageConfig.from_config(cfg, "coarse_train")
	seeds = stage_seeds(stage.seed)
	os.makedirs(run_dir, exist_ok=True)

	fld = HierarchicalField(field_config_from(cfg), dataset.bounds, seed=seeds["init"])
	background = resolve_background(cfg["render.background"], dataset.object_scene)
	n_samples, chunk = cfg["render.n_samples"], cfg["render.chunk"]
	origins, directions, colors, near, far = stack_views(*zip(*dataset.train_views()))
	rng = np.random.default_rng(seeds["batches"])

	params = fld.coarse_parameters()
	optimizer = Adam(params, stage.lr, cfg["adam.beta1"], cfg["adam.beta2"], cfg["adam.eps"])
	run = TrainRun(STAGE, run_dir, loss_log=os.path.join(run_dir, f"{STAGE}-loss.jsonl"))
	log = LossLog(run.loss_log)
	timer = StepTimer(stage.log_every)
	last_good = _save(fld, os.path.join(run_dir, checkpoint_name(STAGE, 0)), run)

	logger("trainer").info(
		f"Stage 1: {stage.iterations} iteration(s), {len(colors)} training rays from "
		f"{len(dataset.train_indices)} view(s), batch {stage.batch_rays}"
	)
	for t in tqdm(range(stage.iterations), desc=STAGE, disable=not stage.progress):
		optimizer.set_lr(stage.lr_at(t))
		idx = rng.integers(0, len(colors), size=stage.batch_rays)
		batch = render_rays(
			fld,
			Rays(origins[idx], directions[idx]),
			near[idx],
			far[idx],
			background,
			"coarse",
			n_samples,
			stratified=stage.stratified,
			rng=rng,
		)
		loss = recon_loss(batch.rgb, colors[idx])
		value = float(loss.value)
		if not math.isfinite(value):
			log_error(f"loss is {value} at iteration {t}", "Non-finite Loss", "trainer")
			raise NonFiniteLossError(f"stage 1 loss became {value} at iteration {t}", last_good)
		backward(loss)
		try:
			optimizer.step()
		except NonFiniteError as e:
			raise NonFiniteLossError(f"stage 1 iteration {t}: {e}", last_good)

		run.history.append(value)
		log.append(LossReport(t, recon=value, total=value))
		timer.tick(t, run)
		if stage.log_every and (t + 1) % stage.log_every == 0:
			logger("trainer").info(f"[{STAGE}] iter {t + 1}/{stage.iterations} loss {value:.6f} lr {optimizer.lr:.3g}")
		if stage.checkpoint_every and (t + 1) % stage.checkpoint_every == 0:
			last_good = _save(fld, os.path.join(run_dir, checkpoint_name(STAGE, t + 1)), run)
			score = heldout_psnr(fld, dataset, background, n_samples, chunk)
			if score is not None:
				run.heldout_psnr.append((t + 1, score))
				logger("trainer").info(f"[{STAGE}] iter {t + 1}: held-out PSNR {score:.2f} dB")
			prune_checkpoints(run_dir, STAGE, stage.keep_checkpoints)

	run.final_checkpoint = save_field(fld, os.path.join(run_dir, FINAL_CHECKPOINT), include_fine=False)
	score = heldout_psnr(fld, dataset, background, n_samples, chunk)
	if score is not None:
		run.heldout_psnr.append((run.completed, score))
	run.checkpoints = [p for p in run.checkpoints if os.path.exists(p)]
	run.write_summary()
	logger("trainer").info(f"Stage 1 finished after {run.completed} iteration(s): {run.final_checkpoint}")
	return run
