"""
Hierarchical Scene Representation

CoarseField maps positionally encoded points and view directions to a
non-negative density, a geometric feature e_c and a view-dependent color.
FineField maps hash-grid features of a point together with e_c to a residual
density and a view-independent color. HierarchicalField owns both plus the
hash tables and composes sigma_f = max(0, sigma_c + sigma').

Variants used by the ablation runs are selected through FieldConfig:
- residual_density=False renders with sigma_c only
- fine_encoding="pe" replaces the hash grid with a high-frequency positional encoding
- fine_encoding="none" feeds only e_c to the fine network
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional

import numpy as np

from scene_stylizer.diffcore import ops
from scene_stylizer.diffcore.checkpoint import load_arrays, save_arrays
from scene_stylizer.diffcore.layers import MLP, Linear, Module
from scene_stylizer.diffcore.tape import Node, as_node, no_grad
from scene_stylizer.exceptions import CheckpointError, ShapeError, ValidationError
from scene_stylizer.services.encodings import (
	HashGridConfig,
	HashGridParams,
	PositionalEncodingConfig,
	hash_encode,
	positional_encode,
)
from scene_stylizer.utils.logger import logger
from scene_stylizer.utils.validation import ensure_finite, ensure_shape

# softplus(0), so a zero density head yields sigma_c == 0 exactly.
DENSITY_SHIFT = float(np.logaddexp(0.0, 0.0))

FINE_ENCODINGS = ("hash", "pe", "none")

_META_KEYS = (
	"pe_levels",
	"pe_identity",
	"grid_levels",
	"grid_nmin",
	"grid_nmax",
	"grid_featdim",
	"grid_table_log2",
	"coarse_width",
	"coarse_depth",
	"feature_dim",
	"density_shift",
	"fine_width",
	"fine_depth",
	"fine_encoding",
	"fine_pe_levels",
	"residual_density",
)


@dataclass(frozen=True)
class FieldConfig:
	pe: PositionalEncodingConfig = field(default_factory=PositionalEncodingConfig)
	grid: HashGridConfig = field(default_factory=HashGridConfig)
	coarse_width: int = 128
	coarse_depth: int = 6
	feature_dim: int = 64
	density_shift: float = DENSITY_SHIFT
	fine_width: int = 256
	fine_depth: int = 2
	fine_encoding: str = "hash"
	fine_pe_levels: int = 10
	residual_density: bool = True

	def __post_init__(self):
		if self.fine_encoding not in FINE_ENCODINGS:
			raise ValidationError(f"unknown fine encoding '{self.fine_encoding}'", module="fields")

	@property
	def fine_encoding_dim(self) -> int:
		if self.fine_encoding == "hash":
			return self.grid.out_dim
		if self.fine_encoding == "pe":
			return PositionalEncodingConfig(self.fine_pe_levels).out_dim
		return 0

	def to_meta(self) -> np.ndarray:
		values = {
			"pe_levels": self.pe.levels,
			"pe_identity": float(self.pe.include_identity),
			"grid_levels": self.grid.levels,
			"grid_nmin": self.grid.nmin,
			"grid_nmax": self.grid.nmax,
			"grid_featdim": self.grid.featdim,
			"grid_table_log2": self.grid.table_log2,
			"coarse_width": self.coarse_width,
			"coarse_depth": self.coarse_depth,
			"feature_dim": self.feature_dim,
			"density_shift": self.density_shift,
			"fine_width": self.fine_width,
			"fine_depth": self.fine_depth,
			"fine_encoding": FINE_ENCODINGS.index(self.fine_encoding),
			"fine_pe_levels": self.fine_pe_levels,
			"residual_density": float(self.residual_density),
		}
		return np.array([values[k] for k in _META_KEYS], dtype=np.float64)

	@classmethod
	def from_meta(cls, meta: np.ndarray) -> "FieldConfig":
		if meta.shape != (len(_META_KEYS),):
			raise CheckpointError(f"meta.config has shape {meta.shape}, expected ({len(_META_KEYS)},)")
		v = dict(zip(_META_KEYS, meta.tolist()))
		return cls(
			pe=PositionalEncodingConfig(int(v["pe_levels"]), bool(v["pe_identity"])),
			grid=HashGridConfig(
				int(v["grid_levels"]),
				int(v["grid_nmin"]),
				int(v["grid_nmax"]),
				int(v["grid_featdim"]),
				int(v["grid_table_log2"]),
			),
			coarse_width=int(v["coarse_width"]),
			coarse_depth=int(v["coarse_depth"]),
			feature_dim=int(v["feature_dim"]),
			density_shift=float(v["density_shift"]),
			fine_width=int(v["fine_width"]),
			fine_depth=int(v["fine_depth"]),
			fine_encoding=FINE_ENCODINGS[int(v["fine_encoding"])],
			fine_pe_levels=int(v["fine_pe_levels"]),
			residual_density=bool(v["residual_density"]),
		)


class CoarseOutput(NamedTuple):
	sigma: Node
	feature: Node
	color: Node


class FineOutput(NamedTuple):
	sigma_residual: Node
	color: Node


class HierarchicalOutput(NamedTuple):
	sigma: Node
	color: Node
	sigma_coarse: Node
	color_coarse: Node


class SceneBounds(NamedTuple):
	lo: np.ndarray
	hi: np.ndarray

	def to_unit(self, x: np.ndarray) -> np.ndarray:
		return (np.asarray(x, dtype=np.float64) - self.lo) / (self.hi - self.lo)

	@property
	def diameter(self) -> float:
		return float(np.linalg.norm(self.hi - self.lo))

	@classmethod
	def from_array(cls, arr: np.ndarray) -> "SceneBounds":
		arr = np.asarray(arr, dtype=np.float64).reshape(2, 3)
		if np.any(arr[1] <= arr[0]):
			raise ShapeError(f"scene bounds need hi > lo on every axis, got {arr.tolist()}", module="fields")
		return cls(arr[0].copy(), arr[1].copy())

	def to_array(self) -> np.ndarray:
		return np.stack([self.lo, self.hi])


class CoarseField(Module):
	"""Positional-encoding MLP with density, feature and color heads."""

	def __init__(self, cfg: FieldConfig, rng: Optional[np.random.Generator] = None):
		super().__init__()
		self.cfg = cfg
		rng = rng or np.random.default_rng(0)
		self.trunk = self.register_module("trunk", MLP(cfg.pe.out_dim, cfg.coarse_width, cfg.coarse_depth, rng))
		self.density = self.register_module("density", Linear(cfg.coarse_width, 1, rng))
		self.feature = self.register_module("feature", Linear(cfg.coarse_width, cfg.feature_dim, rng))
		color_width = max(cfg.coarse_width // 2, 3)
		self.color_hidden = self.register_module("color_hidden", Linear(cfg.feature_dim + 3, color_width, rng))
		self.color_out = self.register_module("color_out", Linear(color_width, 3, rng))

	def __call__(self, encoded, directions) -> CoarseOutput:
		h = self.trunk(encoded)
		s = self.density(h)
		sigma = ops.clamp_min(ops.sub(ops.softplus(s), self.cfg.density_shift), 0.0)
		e_c = self.feature(h)
		hidden = ops.relu(self.color_hidden(ops.concat([e_c, as_node(directions)], axis=1)))
		color = ops.sigmoid(self.color_out(hidden))
		return CoarseOutput(sigma, e_c, color)


class FineField(Module):
	"""Two-layer residual network; the output layer starts at zero."""

	def __init__(self, cfg: FieldConfig, rng: Optional[np.random.Generator] = None):
		super().__init__()
		self.cfg = cfg
		rng = rng or np.random.default_rng(0)
		self.in_dim = cfg.fine_encoding_dim + cfg.feature_dim
		self.trunk = self.register_module("trunk", MLP(self.in_dim, cfg.fine_width, cfg.fine_depth, rng))
		self.head = self.register_module("head", Linear(self.trunk.out_dim, 4, zero=True))

	def __call__(self, inputs) -> FineOutput:
		out = self.head(self.trunk(inputs))
		return FineOutput(out[:, 0:1], ops.sigmoid(out[:, 1:4]))


class HierarchicalField(Module):
	"""Coarse field, fine field and hash tables with the scene bounds they normalize against."""

	def __init__(self, cfg: FieldConfig, bounds: SceneBounds, seed: int = 0):
		super().__init__()
		self.cfg = cfg
		self.bounds = bounds
		coarse_rng, fine_rng, grid_rng = (
			np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)
		)
		self.coarse = self.register_module("coarse", CoarseField(cfg, coarse_rng))
		self.fine = self.register_module("fine", FineField(cfg, fine_rng))
		self.grid: Optional[HashGridParams] = None
		if cfg.fine_encoding == "hash":
			self.grid = self.register_module("grid", HashGridParams(cfg.grid, grid_rng))

	def coarse_parameters(self) -> Dict[str, Node]:
		return self.coarse.parameters("coarse.")

	def fine_parameters(self) -> Dict[str, Node]:
		params = self.fine.parameters("fine.")
		if self.grid is not None:
			params.update(self.grid.parameters("grid."))
		return params


def _check_points(x: np.ndarray, d: Optional[np.ndarray] = None) -> None:
	ensure_shape(x, (None, 3), "sample positions", "fields")
	ensure_finite(x, "sample positions", "fields")
	if d is not None:
		ensure_shape(d, (len(x), 3), "view directions", "fields")
		ensure_finite(d, "view directions", "fields")


def eval_coarse(fld: HierarchicalField, x: np.ndarray, d: np.ndarray) -> CoarseOutput:
	"""
	Coarse field at world points x seen along unit directions d.

	Returns:
		CoarseOutput with sigma (N, 1) >= 0, feature (N, feature_dim), color (N, 3) in [0, 1]

	Raises:
		NonFiniteError: If x or d contain NaN or infinity
	"""
	_check_points(x, d)
	unit = fld.bounds.to_unit(x)
	encoded = positional_encode(2.0 * unit - 1.0, fld.cfg.pe)
	return fld.coarse(encoded, d)


def _fine_encoding(fld: HierarchicalField, x: np.ndarray) -> Optional[Node]:
	unit = fld.bounds.to_unit(x)
	if fld.cfg.fine_encoding == "hash":
		return hash_encode(unit, fld.grid)
	if fld.cfg.fine_encoding == "pe":
		return as_node(positional_encode(2.0 * unit - 1.0, PositionalEncodingConfig(fld.cfg.fine_pe_levels)))
	return None


def eval_fine(fld: HierarchicalField, x: np.ndarray, e_c) -> FineOutput:
	"""
	Fine field at world points x given the coarse feature e_c at the same points.

	Raises:
		ShapeError: If e_c does not have feature_dim columns for every point
	"""
	_check_points(x)
	e_c = as_node(e_c)
	if e_c.shape != (len(x), fld.cfg.feature_dim):
		raise ShapeError(
			f"eval_fine: e_c has shape {e_c.shape}, expected ({len(x)}, {fld.cfg.feature_dim})", module="fields"
		)
	encoded = _fine_encoding(fld, x)
	inputs = e_c if encoded is None else ops.concat([encoded, e_c], axis=1)
	return fld.fine(inputs)


def compose_density(sigma_coarse, sigma_residual, residual_density: bool = True) -> Node:
	if not residual_density:
		return as_node(sigma_coarse)
	return ops.clamp_min(ops.add(sigma_coarse, sigma_residual), 0.0)


def eval_hierarchical(
	fld: HierarchicalField, x: np.ndarray, d: np.ndarray, freeze_coarse: bool = True
) -> HierarchicalOutput:
	"""
	Full hierarchical evaluation.

	The coarse field runs without recording a graph when freeze_coarse is set,
	so no gradient can reach its parameters.
	"""
	if freeze_coarse:
		with no_grad():
			coarse = eval_coarse(fld, x, d)
	else:
		coarse = eval_coarse(fld, x, d)
	fine = eval_fine(fld, x, coarse.feature)
	sigma = compose_density(coarse.sigma, fine.sigma_residual, fld.cfg.residual_density)
	return HierarchicalOutput(sigma, fine.color, coarse.sigma, coarse.color)


def save_field(fld: HierarchicalField, path: str, include_fine: bool = True) -> str:
	"""Write coarse./fine./grid. parameters plus meta.config and meta.bounds."""
	arrays = dict(fld.coarse.state_dict("coarse."))
	if include_fine:
		arrays.update(fld.fine.state_dict("fine."))
		if fld.grid is not None:
			arrays.update(fld.grid.state_dict("grid."))
	arrays["meta.config"] = fld.cfg.to_meta()
	arrays["meta.bounds"] = fld.bounds.to_array()
	save_arrays(path, arrays)
	logger("fields").info(f"Saved field checkpoint {path} ({len(arrays)} arrays)")
	return path


def load_field(path: str, cfg: Optional[FieldConfig] = None, seed: int = 0) -> HierarchicalField:
	"""
	Rebuild a field from a checkpoint.

	A checkpoint holding only coarse parameters yields a fresh fine field. When
	cfg is given its fine-side settings override the stored ones, which lets a
	stage-1 checkpoint seed any stage-2 variant.

	Raises:
		CheckpointError: On missing meta entries, missing parameters or shape mismatches
	"""
	arrays = load_arrays(path)
	if "meta.config" not in arrays or "meta.bounds" not in arrays:
		raise CheckpointError(f"{path} has no meta.config/meta.bounds entries")
	stored = FieldConfig.from_meta(arrays["meta.config"])
	if cfg is not None:
		coarse_keys = ("pe", "coarse_width", "coarse_depth", "feature_dim", "density_shift")
		mismatched = [k for k in coarse_keys if getattr(cfg, k) != getattr(stored, k)]
		if mismatched:
			raise CheckpointError(f"{path}: coarse settings differ from the requested config: {', '.join(mismatched)}")
	fld = HierarchicalField(cfg or stored, SceneBounds.from_array(arrays["meta.bounds"]), seed)
	fld.coarse.load_state_dict(arrays, "coarse.")
	has_fine = any(name.startswith("fine.") for name in arrays)
	if has_fine and (cfg is None or cfg == stored):
		fld.fine.load_state_dict(arrays, "fine.")
		if fld.grid is not None:
			fld.grid.load_state_dict(arrays, "grid.")
	return fld
