"""
Input Encodings

- Positional encoding: fixed sin/cos frequency expansion used by the coarse field.
- Multi-resolution hash grid: learned per-level feature tables, looked up through a
  spatial hash and trilinearly interpolated, used by the fine field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from scene_stylizer.diffcore import ops
from scene_stylizer.diffcore.layers import Module
from scene_stylizer.diffcore.tape import Node, as_node
from scene_stylizer.exceptions import ValidationError
from scene_stylizer.utils.validation import ensure_finite, ensure_shape

HASH_PRIMES = np.array([1, 2654435761, 805459861], dtype=np.uint64)
HASH_MASK = np.uint64(0xFFFFFFFF)
TABLE_INIT_SCALE = 1e-4

# Corner c of a voxel sits at offset (bit 2, bit 1, bit 0) of c along (x, y, z).
CORNER_OFFSETS = np.array([[(c >> 2) & 1, (c >> 1) & 1, c & 1] for c in range(8)], dtype=np.int64)


@dataclass(frozen=True)
class PositionalEncodingConfig:
	levels: int = 7
	include_identity: bool = True

	def __post_init__(self):
		if self.levels < 1:
			raise ValidationError(f"pe.levels must be >= 1, got {self.levels}", module="encodings")

	@property
	def out_dim(self) -> int:
		return (3 if self.include_identity else 0) + 6 * self.levels


@dataclass(frozen=True)
class HashGridConfig:
	levels: int = 8
	nmin: int = 128
	nmax: int = 512
	featdim: int = 4
	table_log2: int = 19

	def __post_init__(self):
		for key in ("levels", "nmin", "nmax", "featdim", "table_log2"):
			if getattr(self, key) < 1:
				raise ValidationError(f"grid.{key} must be positive, got {getattr(self, key)}", module="encodings")
		if self.nmin > self.nmax:
			raise ValidationError(
				f"grid.nmin ({self.nmin}) must not exceed grid.nmax ({self.nmax})", module="encodings"
			)

	@property
	def table_size(self) -> int:
		return 1 << self.table_log2

	@property
	def out_dim(self) -> int:
		return self.levels * self.featdim

	@property
	def growth_factor(self) -> float:
		if self.levels < 2:
			return 1.0
		return math.exp((math.log(self.nmax) - math.log(self.nmin)) / (self.levels - 1))


def positional_encode(x: np.ndarray, cfg: PositionalEncodingConfig) -> np.ndarray:
	"""
	Encode points pre-normalized to [-1, 1]^3.

	Layout per point: [x (when include_identity)] then, for each level l and each
	coordinate p, sin(2^l pi p) followed by cos(2^l pi p).

	Args:
		x: (N, 3) coordinates; values outside [-1, 1] are encoded as-is
		cfg: Encoding levels and identity flag

	Returns:
		(N, cfg.out_dim) array
	"""
	pts = np.asarray(x, dtype=np.float64)
	ensure_shape(pts, (None, 3), "positional_encode input", "encodings")
	freqs = (2.0 ** np.arange(cfg.levels)) * np.pi
	angles = pts[:, None, :] * freqs[None, :, None]
	waves = np.stack([np.sin(angles), np.cos(angles)], axis=-1).reshape(len(pts), 6 * cfg.levels)
	if cfg.include_identity:
		return np.concatenate([pts, waves], axis=1)
	return waves


def grid_resolutions(cfg: HashGridConfig) -> list[int]:
	"""
	Per-level grid resolution floor(nmin * b^m).

	A 1e-9 slack absorbs the rounding of b^(M-1) so the last level lands on nmax.

	Raises:
		ValidationError: If fewer than two levels are configured
	"""
	if cfg.levels < 2:
		raise ValidationError(f"hash grid needs at least 2 levels, got {cfg.levels}", module="encodings")
	b = cfg.growth_factor
	return [int(math.floor(cfg.nmin * b**m + 1e-9)) for m in range(cfg.levels)]


def hash_index(cell: np.ndarray, level: int, cfg: HashGridConfig) -> np.ndarray:
	"""
	Spatial hash of integer cells into [0, table_size).

	Each level owns its own table, so the level only selects the table and does
	not enter the hash.

	Args:
		cell: (..., 3) non-negative integer voxel corners
		level: Grid level in [0, levels)
		cfg: Grid configuration

	Returns:
		(...) int64 table indices
	"""
	if not 0 <= level < cfg.levels:
		raise ValidationError(f"level {level} out of range for {cfg.levels} levels", module="encodings")
	cells = np.asarray(cell)
	if cells.shape[-1:] != (3,):
		raise ValidationError(f"hash_index expects (..., 3) cells, got {cells.shape}", module="encodings")
	if cells.size and cells.min() < 0:
		raise ValidationError("hash_index cells must be non-negative", module="encodings")
	scaled = cells.astype(np.uint64) * HASH_PRIMES
	h = scaled[..., 0] ^ scaled[..., 1] ^ scaled[..., 2]
	return ((h & HASH_MASK) % np.uint64(cfg.table_size)).astype(np.int64)


class HashGridParams(Module):
	"""One (table_size, featdim) table per level, named "level.<m>"."""

	def __init__(self, cfg: HashGridConfig, rng: Optional[np.random.Generator] = None):
		super().__init__()
		self.cfg = cfg
		self.tables: list[Node] = []
		for m in range(cfg.levels):
			if rng is None:
				values = np.zeros((cfg.table_size, cfg.featdim))
			else:
				values = rng.uniform(-TABLE_INIT_SCALE, TABLE_INIT_SCALE, size=(cfg.table_size, cfg.featdim))
			self.tables.append(self.register_parameter(f"level.{m}", values))


def trilinear_weights(frac) -> Node:
	"""(N, 3) fractional voxel coordinates -> (N, 8) corner weights in corner order."""
	frac = as_node(frac)
	axes = [frac[:, d:d + 1] for d in range(3)]
	inverse = [ops.sub(1.0, a) for a in axes]
	columns = []
	for offset in CORNER_OFFSETS:
		w = axes[0] if offset[0] else inverse[0]
		for d in (1, 2):
			w = ops.mul(w, axes[d] if offset[d] else inverse[d])
		columns.append(w)
	return ops.concat(columns, axis=1)


def hash_encode(x, params: HashGridParams, cfg: Optional[HashGridConfig] = None) -> Node:
	"""
	Multi-resolution hash encoding of points in the unit cube.

	Args:
		x: (N, 3) array or Node; clipped to [0, 1]
		params: Learnable per-level tables
		cfg: Grid configuration, defaults to params.cfg

	Returns:
		(N, levels * featdim) Node, differentiable w.r.t. the tables and, through
		the interpolation weights, w.r.t. x

	Raises:
		NonFiniteError: On NaN or infinite input
	"""
	cfg = cfg or params.cfg
	x = as_node(x)
	ensure_shape(x.value, (None, 3), "hash_encode input", "encodings")
	ensure_finite(x.value, "hash_encode input", "encodings")
	if np.any((x.value < 0.0) | (x.value > 1.0)):
		x = ops.add(x, np.clip(x.value, 0.0, 1.0) - x.value)

	n = x.shape[0]
	per_level = []
	for m, resolution in enumerate(grid_resolutions(cfg)):
		scaled = ops.mul(x, float(resolution))
		base = np.floor(scaled.value)
		frac = ops.sub(scaled, base)
		corners = base.astype(np.int64)[:, None, :] + CORNER_OFFSETS[None, :, :]
		index = hash_index(corners, m, cfg)
		features = ops.gather(params.tables[m], index)
		weights = ops.reshape(trilinear_weights(frac), (n, 8, 1))
		per_level.append(ops.sum(ops.mul(features, weights), axis=1))
	return ops.concat(per_level, axis=1)
