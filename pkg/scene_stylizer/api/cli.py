"""
Command-line entry point.

    scene-stylizer <command> [--config FILE] [--out DIR] [--seed N] [--set key=value ...]

Every command resolves a RunConfig, writes manifest.txt (the resolved
config plus package versions) and run.log into its output directory, and
dispatches to the handler registered in hooks.commands.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures. Errors
are printed to standard error as ``error [<module>]: <message>``.
"""

from __future__ import annotations

import argparse
import importlib
import os
import platform
import sys
from importlib.metadata import PackageNotFoundError, version
from typing import Callable, List, Optional, Sequence

from scene_stylizer import __version__, hooks
from scene_stylizer.exceptions import StylizerError, UsageError
from scene_stylizer.jobs.base_stage import make_run_dir
from scene_stylizer.services.renderer import RENDER_MODES
from scene_stylizer.services.scenes.scene_factory import get_supported_scenes, register_scene
from scene_stylizer.utils.config import RunConfig, parse_config
from scene_stylizer.utils.logger import configure_logging, logger

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

MANIFEST_PACKAGES = ("numpy", "Pillow", "tqdm")


class ArgumentParser(argparse.ArgumentParser):
	"""argparse parser that raises UsageError instead of exiting."""

	def error(self, message: str):
		raise UsageError(f"{self.prog}: {message}")


def get_attr(dotted: str) -> Callable:
	module, _, attr = dotted.rpartition(".")
	return getattr(importlib.import_module(module), attr)


def get_handler(command: str) -> Callable:
	dotted = hooks.commands.get(command)
	if dotted is None:
		raise UsageError(f"unknown command '{command}', expected one of {', '.join(hooks.commands)}")
	return get_attr(dotted)


def _common_arguments() -> argparse.ArgumentParser:
	common = ArgumentParser(add_help=False)
	common.add_argument("--config", help="config file of `key = value` lines")
	common.add_argument("--out", help=f"output directory (default: {hooks.output_root}/run-<time>-<seed>)")
	common.add_argument("--seed", type=int, help="run seed, threaded to every stochastic component")
	common.add_argument(
		"--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="config override (repeatable)"
	)
	common.add_argument("--log-level", help="logging level, overrides run.log_level")
	common.add_argument("--no-progress", action="store_true", help="hide progress bars")
	return common


def build_parser() -> ArgumentParser:
	common = _common_arguments()
	presets = ", ".join(get_supported_scenes())
	parser = ArgumentParser(prog="scene-stylizer", description="Coarse-to-fine neural field stylization.")
	parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
	sub = parser.add_subparsers(dest="command", metavar="command")
	sub.required = True

	p = sub.add_parser("make-scene", parents=[common], help="write a procedural scene and style textures")
	p.add_argument("--scene", default="", help=f"preset name: {presets} (default: scene.preset)")
	p.add_argument("--style-size", type=int, default=128, help="side of the written style textures")

	p = sub.add_parser("gen-extractor-weights", parents=[common], help="write the feature-extractor weight file")
	p.add_argument("--name", default="extractor.sffx", help="file name inside --out")
	p.add_argument("--extractor-seed", type=int, help="generator seed (default: the built-in seed)")

	p = sub.add_parser("train-coarse", parents=[common], help="stage 1: fit the coarse field")
	p.add_argument("--scene", default="", help=f"transforms.json path or preset name ({presets})")

	p = sub.add_parser("train-style", parents=[common], help="stage 2: stylize the fine field")
	p.add_argument("--checkpoint", required=True, help="stage-1 checkpoint")
	p.add_argument("--scene", default="", help="the scene the checkpoint was trained on")
	p.add_argument("--style", default="", help="style PNG or texture name")
	p.add_argument("--ablation", help="comma-separated ablation flags (default: style_train.ablation)")

	p = sub.add_parser("render", parents=[common], help="render a pose path with depth")
	p.add_argument("--checkpoint", required=True)
	p.add_argument("--scene", default="", help="scene supplying the template camera and bounds")
	p.add_argument("--pose-path", default="", help="circle<N> or arc<N> (default: metrics.pose_path)")
	p.add_argument("--mode", default="auto", choices=("auto", *RENDER_MODES))
	p.add_argument("--width", type=int, default=0, help="image width (default: style_train.image_size)")

	p = sub.add_parser("evaluate", parents=[common], help="consistency metrics of a render directory")
	p.add_argument("--renders", required=True, help="output directory of 'render'")
	p.add_argument("--pairs", default="auto", help="auto, K or K:OFFSET")
	p.add_argument("--z-tol", type=float, help="depth agreement tolerance (default: from cameras.json)")

	p = sub.add_parser("ablate", parents=[common], help="run the ablation matrix")
	p.add_argument("--checkpoint", required=True, help="stage-1 checkpoint")
	p.add_argument("--scene", default="")
	p.add_argument("--style", default="")
	p.add_argument("--variants", default="", help="';'-separated flag lists, 'full' for the full method")
	p.add_argument("--with-baseline", action="store_true", help="add the per-view 2D baseline")
	return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
	overrides = list(args.overrides)
	if args.seed is not None:
		overrides.append(f"run.seed={args.seed}")
	if args.no_progress:
		overrides.append("run.progress=false")
	if args.log_level:
		overrides.append(f"run.log_level={args.log_level}")
	return parse_config(args.config, overrides)


def package_versions() -> List[str]:
	lines = [f"scene_stylizer = {__version__}", f"python = {platform.python_version()}"]
	for name in MANIFEST_PACKAGES:
		try:
			lines.append(f"{name} = {version(name)}")
		except PackageNotFoundError:
			lines.append(f"{name} = unknown")
	return lines


def write_manifest(out_dir: str, cfg: RunConfig, command: str, argv: Sequence[str]) -> str:
	"""Resolved config as `key = value` lines; versions and the command line go in comments."""
	header = [f"# command: {command}", f"# argv: {' '.join(argv)}"]
	header += [f"# version {line}" for line in package_versions()]
	path = os.path.join(out_dir, hooks.manifest_file)
	with open(path, "w", encoding="utf-8") as fh:
		fh.write("\n".join(header) + "\n\n" + cfg.to_text())
	return path


def register_hook_presets() -> None:
	for name, dotted in hooks.scene_presets.items():
		register_scene(name, get_attr(dotted))


def _report(e: BaseException, module: str) -> None:
	sys.stderr.write(f"error [{module}]: {e}\n")


def run(argv: Optional[Sequence[str]] = None) -> int:
	"""
	Run one command.

	Args:
		argv: Arguments without the program name; defaults to sys.argv[1:]

	Returns:
		Exit code
	"""
	argv = list(sys.argv[1:] if argv is None else argv)
	try:
		register_hook_presets()
		args = build_parser().parse_args(argv)
		cfg = resolve_config(args)
		out_dir = args.out or make_run_dir(hooks.output_root, cfg["run.seed"])
		os.makedirs(out_dir, exist_ok=True)
		configure_logging(cfg["run.log_level"], os.path.join(out_dir, hooks.log_file))
		write_manifest(out_dir, cfg, args.command, argv)
		result = get_handler(args.command)(args, cfg, out_dir)
		logger("cli").info(f"{args.command} finished: {result}")
		return EXIT_OK
	except SystemExit as e:
		# --help and --version
		return int(e.code or 0)
	except UsageError as e:
		_report(e, e.module)
		return EXIT_USAGE
	except StylizerError as e:
		_report(e, e.module)
		return EXIT_FAILURE
	except OSError as e:
		_report(e, "cli")
		return EXIT_FAILURE


def main() -> None:
	sys.exit(run())
