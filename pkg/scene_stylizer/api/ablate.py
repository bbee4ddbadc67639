"""
Command handler for the ablation matrix.
"""

from __future__ import annotations

import argparse

from scene_stylizer.api.scene import load_scene, load_style_image
from scene_stylizer.exceptions import StylizerError
from scene_stylizer.jobs.ablation import DEFAULT_MATRIX, run_ablation
from scene_stylizer.utils.config import RunConfig


def parse_matrix(text: str) -> tuple:
	"""Variants separated by ';', each a comma-separated flag list; "full" names the full method."""
	if not text:
		return DEFAULT_MATRIX
	variants = [part.strip() for part in text.split(";")]
	return tuple("" if v in ("", "full") else v for v in variants)


def ablate_command(args: argparse.Namespace, cfg: RunConfig, out_dir: str) -> str:
	dataset = load_scene(args.scene, cfg)
	style = load_style_image(args.style, cfg)
	result = run_ablation(
		args.checkpoint,
		style,
		dataset,
		cfg,
		out_dir,
		matrix=parse_matrix(args.variants),
		with_baseline=args.with_baseline,
	)
	if len(result.failed) == len(result.variants):
		raise StylizerError(f"every ablation variant failed; first error: {result.failed[0].error_message}", module="trainer")
	return result.contact_sheet or result.summary_csv
