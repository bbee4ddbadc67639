"""
Run configuration.

A RunConfig is a flat mapping of dotted keys to typed values. Values are
layered: built-in defaults, then a `key = value` text file, then
command-line `--set key=value` overrides. Unknown keys and values that do
not parse as the default's type are rejected with the key named.
"""

from __future__ import annotations

import math
from typing import Any, Dict, Iterable, Iterator, Mapping, Optional

import numpy as np

from scene_stylizer.exceptions import ConfigError

_TRUE = ("true", "yes", "1")
_FALSE = ("false", "no", "0")

DEFAULTS: Dict[str, Any] = {
	# coarse field encoding and network
	"pe.levels": 7,
	"pe.include_identity": True,
	"coarse.width": 128,
	"coarse.depth": 6,
	"coarse.feature_dim": 64,
	"coarse.density_shift": float(np.logaddexp(0.0, 0.0)),
	# fine field
	"grid.levels": 8,
	"grid.nmin": 128,
	"grid.nmax": 512,
	"grid.featdim": 4,
	"grid.table_log2": 19,
	"fine.width": 256,
	"fine.depth": 2,
	# rendering
	"render.n_samples": 64,
	"render.background": "auto",
	"render.chunk": 4096,
	"render.grad_chunk": 512,
	# features and objectives
	"features.weights": "",
	"features.normalize": False,
	"objective.lambda0": 10.0,
	"objective.alpha": 0.01,
	"objective.T": 100,
	"objective.novel_poses": 6,
	"adam.beta1": 0.9,
	"adam.beta2": 0.999,
	"adam.eps": 1e-8,
	# stage 1
	"coarse_train.iterations": 5000,
	"coarse_train.lr": 5e-4,
	"coarse_train.decay": "",
	"coarse_train.batch_rays": 1024,
	"coarse_train.stratified": True,
	"coarse_train.checkpoint_every": 1000,
	"coarse_train.keep_checkpoints": 3,
	"coarse_train.log_every": 100,
	# stage 2
	"style_train.iterations": 150,
	"style_train.lr": 5e-3,
	"style_train.decay": "50:0.33,100:0.33",
	"style_train.image_size": 96,
	"style_train.checkpoint_every": 50,
	"style_train.log_every": 10,
	"style_train.style_image": "",
	"style_train.ablation": "",
	# per-view 2D baseline
	"baseline.iterations": 100,
	"baseline.lr": 0.02,
	# scene generation
	"scene.preset": "spheres",
	"scene.pattern": "arc",
	"scene.n_train": 3,
	"scene.n_heldout": 4,
	"scene.image_size": 64,
	"scene.arc_degrees": 30.0,
	"scene.radius": 4.0,
	"scene.elevation_degrees": 20.0,
	"scene.fov_degrees": 40.0,
	"scene.near": 2.0,
	"scene.far": 6.0,
	# consistency evaluation
	"metrics.z_tol_fraction": 0.01,
	"metrics.pose_path": "circle60",
	"metrics.short_pairs": 10,
	"metrics.long_offset": 30,
	# ablations
	"ablation.pe_levels": 10,
	# run
	"run.seed": 0,
	"run.progress": True,
	"run.log_level": "INFO",
}


def _coerce(key: str, raw: Any, default: Any) -> Any:
	"""Parse raw (usually text) into the type of default."""
	if isinstance(default, bool):
		if isinstance(raw, bool):
			return raw
		text = str(raw).strip().lower()
		if text in _TRUE:
			return True
		if text in _FALSE:
			return False
		raise ConfigError(f"config key '{key}' expects a boolean, got '{raw}'")
	if isinstance(default, int):
		if isinstance(raw, (int, np.integer)) and not isinstance(raw, bool):
			return int(raw)
		try:
			return int(str(raw).strip())
		except ValueError:
			raise ConfigError(f"config key '{key}' expects an integer, got '{raw}'")
	if isinstance(default, float):
		try:
			value = float(str(raw).strip()) if not isinstance(raw, (int, float)) else float(raw)
		except ValueError:
			raise ConfigError(f"config key '{key}' expects a number, got '{raw}'")
		if not math.isfinite(value):
			raise ConfigError(f"config key '{key}' must be finite, got '{raw}'")
		return value
	return str(raw).strip()


class RunConfig(Mapping[str, Any]):
	"""Immutable resolved configuration."""

	def __init__(self, values: Optional[Mapping[str, Any]] = None):
		resolved = dict(DEFAULTS)
		for key, raw in (values or {}).items():
			if key not in DEFAULTS:
				raise ConfigError(f"unknown config key '{key}'")
			resolved[key] = _coerce(key, raw, DEFAULTS[key])
		self._values = resolved

	def __getitem__(self, key: str) -> Any:
		try:
			return self._values[key]
		except KeyError:
			raise ConfigError(f"unknown config key '{key}'")

	def __contains__(self, key: object) -> bool:
		return key in self._values

	def __iter__(self) -> Iterator[str]:
		return iter(self._values)

	def __len__(self) -> int:
		return len(self._values)

	def section(self, prefix: str) -> Dict[str, Any]:
		"""Keys under prefix with the prefix stripped."""
		head = prefix.rstrip(".") + "."
		return {k[len(head):]: v for k, v in self._values.items() if k.startswith(head)}

	def to_text(self) -> str:
		"""Sorted `key = value` lines; parse_config reads them back unchanged."""
		lines = []
		for key in sorted(self._values):
			value = self._values[key]
			if isinstance(value, bool):
				text = "true" if value else "false"
			elif isinstance(value, float):
				text = repr(value)
			else:
				text = str(value)
			lines.append(f"{key} = {text}")
		return "\n".join(lines) + "\n"


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
	"""Raw `key = value` pairs from config text; `#` starts a comment."""
	pairs: Dict[str, str] = {}
	for lineno, line in enumerate(text.splitlines(), start=1):
		line = line.split("#", 1)[0].strip()
		if not line:
			continue
		if "=" not in line:
			raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{line}'")
		key, value = (part.strip() for part in line.split("=", 1))
		if key not in DEFAULTS:
			raise ConfigError(f"{source}:{lineno}: unknown config key '{key}'")
		pairs[key] = value
	return pairs


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
	"""Parse repeated `key=value` command-line overrides."""
	pairs: Dict[str, str] = {}
	for item in items or ():
		if "=" not in item:
			raise ConfigError(f"override '{item}' must look like key=value")
		key, value = (part.strip() for part in item.split("=", 1))
		if key not in DEFAULTS:
			raise ConfigError(f"unknown config key '{key}'")
		pairs[key] = value
	return pairs


def parse_config(path: Optional[str] = None, overrides: Iterable[str] = ()) -> RunConfig:
	"""
	Resolve defaults, then the file at path, then overrides.

	Args:
		path: Optional config file of `key = value` lines
		overrides: `key=value` strings applied last

	Raises:
		ConfigError: On unknown keys, malformed lines or type mismatches
	"""
	layered: Dict[str, Any] = {}
	if path:
		try:
			with open(path, encoding="utf-8") as fh:
				text = fh.read()
		except OSError as e:
			raise ConfigError(f"cannot read config file {path}: {e.strerror}")
		layered.update(parse_config_text(text, path))
	layered.update(parse_overrides(overrides))
	return RunConfig(layered)


def resolve_background(value: str, object_scene: bool) -> np.ndarray:
	"""
	Background color from its config value.

	"auto" is white for object-centred scenes and black for forward-facing
	ones; otherwise "black", "white" or "r,g,b" with components in [0, 1].
	"""
	text = value.strip().lower()
	if text == "auto":
		return np.ones(3) if object_scene else np.zeros(3)
	if text == "black":
		return np.zeros(3)
	if text == "white":
		return np.ones(3)
	try:
		rgb = np.array([float(part) for part in text.split(",")])
	except ValueError:
		rgb = np.empty(0)
	if rgb.shape != (3,) or rgb.min() < 0 or rgb.max() > 1:
		raise ConfigError(f"config key 'render.background' expects auto, black, white or r,g,b; got '{value}'")
	return rgb
