"""
Base Stage Types

Shared plumbing of the training stages: the per-stage schedule
(StageConfig), the record of a finished or aborted run (TrainRun), field
configuration from run settings, run-directory naming and the seeding
scheme. Every stochastic component draws from a generator spawned off the
run seed in a fixed order, so a stage is a pure function of its inputs.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Any, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from scene_stylizer.diffcore.optim import lr_at, lr_sequence, parse_decay_events
from scene_stylizer.exceptions import ValidationError
from scene_stylizer.services.encodings import HashGridConfig, PositionalEncodingConfig
from scene_stylizer.services.fields import FieldConfig
from scene_stylizer.services.renderer import generate_rays
from scene_stylizer.utils.config import RunConfig
from scene_stylizer.utils.logger import logger

# order in which components draw from the run seed
SEED_COMPONENTS = ("init", "batches")


@dataclass(frozen=True)
class StageConfig:
	iterations: int
	lr: float
	decay: Tuple[Tuple[int, float], ...] = ()
	batch_rays: int = 1024
	seed: int = 0
	checkpoint_every: int = 0
	keep_checkpoints: int = 3
	log_every: int = 100
	stratified: bool = True
	progress: bool = True

	def __post_init__(self):
		if self.iterations < 0:
			raise ValidationError(f"iterations must be >= 0, got {self.iterations}", module="trainer")
		if not self.lr > 0:
			raise ValidationError(f"learning rate must be positive, got {self.lr}", module="trainer")
		if self.batch_rays < 1:
			raise ValidationError(f"ray batch size must be >= 1, got {self.batch_rays}", module="trainer")
		if self.keep_checkpoints < 1:
			raise ValidationError(f"keep_checkpoints must be >= 1, got {self.keep_checkpoints}", module="trainer")
		for at, factor in self.decay:
			if at < 0 or not 0.0 < factor <= 1.0:
				raise ValidationError(f"decay event ({at}, {factor}) needs factor in (0, 1]", module="trainer")

	@classmethod
	def from_config(cls, cfg: RunConfig, prefix: str, seed: Optional[int] = None) -> "StageConfig":
		"""Read <prefix>.iterations, .lr, .decay and friends from a RunConfig."""
		get = cfg.section(prefix).get
		return cls(
			iterations=get("iterations", 1),
			lr=get("lr", 1e-3),
			decay=tuple(parse_decay_events(get("decay", ""))),
			batch_rays=get("batch_rays", 1024),
			seed=cfg["run.seed"] if seed is None else seed,
			checkpoint_every=get("checkpoint_every", 0),
			keep_checkpoints=get("keep_checkpoints", 3),
			log_every=get("log_every", 100),
			stratified=get("stratified", True),
			progress=cfg["run.progress"],
		)

	def lr_at(self, iteration: int) -> float:
		return lr_at(self.lr, self.decay, iteration)

	def lr_sequence(self) -> List[float]:
		return lr_sequence(self.lr, self.decay, self.iterations)


@dataclass
class TrainRun:
	"""Outcome of one stage; history holds one total loss per completed iteration."""

	stage: str
	run_dir: str
	history: List[float] = field(default_factory=list)
	checkpoints: List[str] = field(default_factory=list)
	timings: List[Tuple[int, float]] = field(default_factory=list)
	heldout_psnr: List[Tuple[int, float]] = field(default_factory=list)
	final_checkpoint: Optional[str] = None
	loss_log: Optional[str] = None

	@property
	def completed(self) -> int:
		return len(self.history)

	def to_dict(self) -> dict:
		data = asdict(self)
		data["completed"] = self.completed
		return data

	def write_summary(self, path: Optional[str] = None) -> str:
		path = path or os.path.join(self.run_dir, f"{self.stage}-summary.json")
		with open(path, "w", encoding="utf-8") as fh:
			json.dump(self.to_dict(), fh, indent=2)
		return path


class StepTimer:
	"""Wall-clock seconds per block of steps."""

	def __init__(self, every: int):
		self.every = max(every, 1)
		self.start = time.perf_counter()

	def tick(self, iteration: int, run: TrainRun) -> None:
		if (iteration + 1) % self.every == 0:
			now = time.perf_counter()
			run.timings.append((iteration + 1, now - self.start))
			self.start = now


def stage_seeds(seed: int) -> dict:
	"""Integer seeds per component, spawned from one SeedSequence."""
	children = np.random.SeedSequence(seed).spawn(len(SEED_COMPONENTS))
	return {name: int(child.generate_state(1)[0]) for name, child in zip(SEED_COMPONENTS, children)}


def field_config_from(cfg: Mapping[str, Any], **overrides: Any) -> FieldConfig:
	"""FieldConfig from the pe.*, grid.*, coarse.* and fine.* keys of a RunConfig."""
	values = dict(
		pe=PositionalEncodingConfig(cfg["pe.levels"], cfg["pe.include_identity"]),
		grid=HashGridConfig(
			cfg["grid.levels"], cfg["grid.nmin"], cfg["grid.nmax"], cfg["grid.featdim"], cfg["grid.table_log2"]
		),
		coarse_width=cfg["coarse.width"],
		coarse_depth=cfg["coarse.depth"],
		feature_dim=cfg["coarse.feature_dim"],
		density_shift=cfg["coarse.density_shift"],
		fine_width=cfg["fine.width"],
		fine_depth=cfg["fine.depth"],
		fine_pe_levels=cfg["ablation.pe_levels"],
	)
	values.update(overrides)
	return FieldConfig(**values)


def make_run_dir(root: str, seed: int, stamp: Optional[str] = None) -> str:
	"""Create root/run-<timestamp>-<seed>; an existing name gets a numeric suffix."""
	stamp = stamp or time.strftime("%Y%m%d-%H%M%S")
	base = os.path.join(root, f"run-{stamp}-{seed}")
	path, k = base, 1
	while os.path.exists(path):
		path = f"{base}.{k}"
		k += 1
	os.makedirs(path)
	logger("trainer").info(f"Run directory: {path}")
	return path


def stack_views(images: Sequence[np.ndarray], cameras: Sequence[Any]):
	"""All pixels of the given views as flat ray arrays: (origins, directions, colors, near, far)."""
	origins, directions, colors, near, far = [], [], [], [], []
	for image, camera in zip(images, cameras):
		rays = generate_rays(camera)
		origins.append(rays.origins)
		directions.append(rays.directions)
		colors.append(np.asarray(image, dtype=np.float64).reshape(-1, 3))
		near.append(np.full(len(rays.origins), camera.near))
		far.append(np.full(len(rays.origins), camera.far))
	return (
		np.concatenate(origins),
		np.concatenate(directions),
		np.concatenate(colors),
		np.concatenate(near),
		np.concatenate(far),
	)
