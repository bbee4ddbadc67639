"""
Command handlers for the two training stages.
"""

from __future__ import annotations

import argparse

from scene_stylizer.api.scene import load_scene, load_style_image
from scene_stylizer.jobs.coarse_stage import train_coarse
from scene_stylizer.jobs.style_stage import train_style
from scene_stylizer.jobs.variants import ablation_mode
from scene_stylizer.utils.config import RunConfig
from scene_stylizer.utils.logger import logger


def train_coarse_command(args: argparse.Namespace, cfg: RunConfig, out_dir: str) -> str:
	dataset = load_scene(args.scene, cfg)
	run = train_coarse(dataset, cfg, out_dir)
	if run.heldout_psnr:
		logger("cli").info(f"Held-out PSNR at iteration {run.heldout_psnr[-1][0]}: {run.heldout_psnr[-1][1]:.2f} dB")
	return run.final_checkpoint


def train_style_command(args: argparse.Namespace, cfg: RunConfig, out_dir: str) -> str:
	"""Stage 2 from a coarse checkpoint; --ablation overrides style_train.ablation."""
	dataset = load_scene(args.scene, cfg)
	style = load_style_image(args.style, cfg)
	flags = cfg["style_train.ablation"] if args.ablation is None else args.ablation
	run = train_style(args.checkpoint, style, dataset, cfg, out_dir, mode=ablation_mode(flags))
	return run.final_checkpoint
