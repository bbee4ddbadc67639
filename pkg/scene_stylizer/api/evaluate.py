"""
Command handlers for rendering camera paths and scoring their consistency.

A render directory holds NNN.png color images, NNN.pfm depth maps (inf on
background pixels) and a cameras.json describing every view; evaluate reads
the same layout back.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from scene_stylizer.api.scene import load_scene
from scene_stylizer.diffcore.checkpoint import load_arrays
from scene_stylizer.exceptions import DatasetError, UsageError
from scene_stylizer.jobs.style_stage import path_cameras
from scene_stylizer.services.cameras import Camera
from scene_stylizer.services.features import FeatureExtractor
from scene_stylizer.services.fields import load_field
from scene_stylizer.services.image_io import read_pfm, read_png, write_pfm, write_png
from scene_stylizer.services.metrics import consistency_report
from scene_stylizer.services.renderer import RENDER_MODES, render_views
from scene_stylizer.utils.config import RunConfig, resolve_background
from scene_stylizer.utils.logger import logger

CAMERAS_FILE = "cameras.json"
CONSISTENCY_FILE = "consistency.csv"

_PAIRS = re.compile(r"^(\d+)(?::(\d+))?$")


def render_mode_for(checkpoint: str, requested: Optional[str]) -> str:
	"""Requested mode, or hierarchical when the checkpoint carries a fine field and coarse otherwise."""
	if requested and requested != "auto":
		if requested not in RENDER_MODES:
			raise UsageError(f"render mode must be auto or one of {', '.join(RENDER_MODES)}, got '{requested}'")
		return requested
	has_fine = any(name.startswith("fine.") for name in load_arrays(checkpoint))
	return "hierarchical" if has_fine else "coarse"


def render_command(args: argparse.Namespace, cfg: RunConfig, out_dir: str) -> str:
	"""Render a named pose path around the scene with color, depth and cameras.json."""
	fld = load_field(args.checkpoint)
	dataset = load_scene(args.scene, cfg)
	mode = render_mode_for(args.checkpoint, args.mode)
	spec = args.pose_path or cfg["metrics.pose_path"]
	cameras = path_cameras(dataset, spec, args.width or cfg["style_train.image_size"], cfg["scene.arc_degrees"])
	background = resolve_background(cfg["render.background"], dataset.object_scene)

	renders = render_views(fld, cameras, background, mode, cfg["render.n_samples"], cfg["render.chunk"], cfg["run.progress"])
	for k, rendered in enumerate(renders):
		write_png(os.path.join(out_dir, f"{k:03d}.png"), rendered.rgb)
		write_pfm(os.path.join(out_dir, f"{k:03d}.pfm"), rendered.surface_depth())

	payload = {
		"checkpoint": os.path.abspath(args.checkpoint),
		"mode": mode,
		"pose_path": spec,
		"z_tol": cfg["metrics.z_tol_fraction"] * dataset.bounds.diameter,
		"cameras": [camera.to_dict() for camera in cameras],
	}
	path = os.path.join(out_dir, CAMERAS_FILE)
	with open(path, "w", encoding="utf-8") as fh:
		json.dump(payload, fh, indent=2)
	logger("cli").info(f"Rendered {len(renders)} view(s) of {spec} in {mode} mode to {out_dir}")
	return path


def read_render_dir(directory: str) -> Tuple[List[np.ndarray], List[np.ndarray], List[Camera], Dict[str, Any]]:
	"""Images, depths, cameras and the raw cameras.json payload of a render directory."""
	path = os.path.join(directory, CAMERAS_FILE)
	try:
		with open(path, encoding="utf-8") as fh:
			payload = json.load(fh)
	except FileNotFoundError:
		raise DatasetError(f"{directory} has no {CAMERAS_FILE}; expected the output of 'render'")
	except json.JSONDecodeError as e:
		raise DatasetError(f"{path}: malformed JSON ({e.msg} at line {e.lineno})")
	cameras = [Camera.from_dict(entry) for entry in payload.get("cameras", [])]
	images = [read_png(os.path.join(directory, f"{k:03d}.png")) for k in range(len(cameras))]
	depths = [read_pfm(os.path.join(directory, f"{k:03d}.pfm")).astype(np.float64) for k in range(len(cameras))]
	return images, depths, cameras, payload


def parse_pairs(spec: str, cfg: RunConfig, n_views: int) -> Tuple[int, Optional[int]]:
	"""
	Pair selection: "auto" uses metrics.short_pairs and metrics.long_offset;
	"K" or "K:OFFSET" sets the pair count and the long-range offset.
	"""
	if spec == "auto":
		offset = cfg["metrics.long_offset"]
		return cfg["metrics.short_pairs"], offset if 0 < offset < n_views else None
	match = _PAIRS.match(spec.strip())
	if not match:
		raise UsageError(f"--pairs must be auto, K or K:OFFSET, got '{spec}'")
	offset = int(match.group(2)) if match.group(2) else None
	return int(match.group(1)), offset


def evaluate_command(args: argparse.Namespace, cfg: RunConfig, out_dir: str) -> str:
	"""Short- and long-range consistency of a render directory, written as CSV."""
	images, depths, cameras, payload = read_render_dir(args.renders)
	short_pairs, long_offset = parse_pairs(args.pairs, cfg, len(cameras))
	z_tol = args.z_tol if args.z_tol is not None else payload.get("z_tol")
	if z_tol is None:
		raise UsageError(f"{CAMERAS_FILE} carries no z_tol; pass --z-tol")
	extractor = FeatureExtractor.load(cfg["features.weights"] or None)
	report = consistency_report(
		images, depths, cameras, float(z_tol), short_pairs, long_offset, extractor, cfg["run.progress"]
	)
	path = report.write_csv(os.path.join(out_dir, CONSISTENCY_FILE))
	sys.stdout.write(report.to_table())
	return path
