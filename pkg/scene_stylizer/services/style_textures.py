"""
Procedural style images.

Three seeded textures stand in for painted style references: diagonal
color stripes, a checkerboard under value noise, and a painterly blend of
several octaves of smooth value noise pushed through a warm palette.
"""

from __future__ import annotations

from typing import Callable, Dict, List

import numpy as np

from scene_stylizer.exceptions import ValidationError


def _value_noise(size: int, cells: int, rng: np.random.Generator) -> np.ndarray:
	"""Smoothstep-interpolated lattice noise in [0, 1] of shape (size, size)."""
	lattice = rng.uniform(size=(cells + 1, cells + 1))
	coords = np.linspace(0.0, cells, size, endpoint=False)
	i = np.floor(coords).astype(np.int64)
	f = coords - i
	f = f * f * (3.0 - 2.0 * f)
	top = lattice[i][:, i] * (1 - f)[None, :] + lattice[i][:, i + 1] * f[None, :]
	bottom = lattice[i + 1][:, i] * (1 - f)[None, :] + lattice[i + 1][:, i + 1] * f[None, :]
	return top * (1 - f)[:, None] + bottom * f[:, None]


def stripes(size: int, seed: int = 0) -> np.ndarray:
	rng = np.random.default_rng(seed)
	palette = rng.uniform(0.1, 0.95, size=(4, 3))
	yy, xx = np.mgrid[0:size, 0:size]
	period = max(size // 8, 2)
	band = ((xx + yy) // period) % len(palette)
	return palette[band]


def checker_noise(size: int, seed: int = 0) -> np.ndarray:
	rng = np.random.default_rng(seed)
	a, b = rng.uniform(0.05, 0.5, size=3), rng.uniform(0.5, 0.95, size=3)
	yy, xx = np.mgrid[0:size, 0:size]
	period = max(size // 6, 2)
	checker = ((xx // period + yy // period) % 2).astype(np.float64)
	noise = _value_noise(size, 8, rng)
	mix = np.clip(0.75 * checker + 0.25 * noise, 0.0, 1.0)[:, :, None]
	return (1 - mix) * a + mix * b


def painterly(size: int, seed: int = 0) -> np.ndarray:
	rng = np.random.default_rng(seed)
	total = np.zeros((size, size))
	amplitude, weight = 1.0, 0.0
	for cells in (2, 4, 8, 16):
		total += amplitude * _value_noise(size, cells, rng)
		weight += amplitude
		amplitude *= 0.5
	t = total / weight
	palette = np.array([[0.10, 0.12, 0.35], [0.85, 0.45, 0.15], [0.98, 0.85, 0.40]])
	low = np.clip(2.0 * t, 0.0, 1.0)[:, :, None]
	high = np.clip(2.0 * t - 1.0, 0.0, 1.0)[:, :, None]
	return (1 - low) * palette[0] + low * ((1 - high) * palette[1] + high * palette[2])


STYLE_TEXTURES: Dict[str, Callable[[int, int], np.ndarray]] = {
	"stripes": stripes,
	"checker-noise": checker_noise,
	"painterly": painterly,
}


def make_style_texture(name: str, size: int = 128, seed: int = 0) -> np.ndarray:
	"""(size, size, 3) texture in [0, 1]."""
	if name not in STYLE_TEXTURES:
		raise ValidationError(
			f"unknown style texture '{name}', expected one of {', '.join(STYLE_TEXTURES)}", module="sceneio"
		)
	if size < 8:
		raise ValidationError(f"style texture size must be at least 8, got {size}", module="sceneio")
	return np.clip(STYLE_TEXTURES[name](size, seed), 0.0, 1.0)


def get_style_names() -> List[str]:
	return list(STYLE_TEXTURES)
