"""
Validation utilities shared by the numeric modules.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Mapping

import numpy as np

from scene_stylizer.exceptions import NonFiniteError, ShapeError, ValidationError


def ensure_finite(values: np.ndarray, what: str, module: str) -> None:
	"""
	Raise NonFiniteError naming the first offending flat index.

	Args:
		values: Array to check
		what: Human readable name of the quantity
		module: Module reported with the error
	"""
	arr = np.asarray(values)
	if arr.size and not np.all(np.isfinite(arr)):
		index = int(np.flatnonzero(~np.isfinite(arr))[0])
		raise NonFiniteError(f"{what} contains a non-finite value at flat index {index}", module=module)


def ensure_shape(values: np.ndarray, shape: Iterable[int | None], what: str, module: str) -> None:
	"""Check rank and extents; None matches any extent."""
	expected = tuple(shape)
	actual = np.shape(values)
	if len(actual) != len(expected) or any(e is not None and e != a for e, a in zip(expected, actual)):
		raise ShapeError(f"{what}: expected shape {expected}, got {actual}", module=module)


def ensure_unit_range(values: np.ndarray, what: str, module: str, tol: float = 1e-6) -> None:
	"""Check all values lie in [0, 1] within tol."""
	arr = np.asarray(values)
	if arr.size and (arr.min() < -tol or arr.max() > 1.0 + tol):
		raise ValidationError(
			f"{what} must lie in [0, 1], got range [{arr.min():.6g}, {arr.max():.6g}]", module=module
		)


def hash_arrays(arrays: Mapping[str, np.ndarray]) -> str:
	"""sha256 over names, shapes and raw bytes, in sorted name order."""
	digest = hashlib.sha256()
	for name in sorted(arrays):
		arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
		digest.update(name.encode("utf-8"))
		digest.update(repr(arr.shape).encode("ascii"))
		digest.update(arr.tobytes())
	return digest.hexdigest()
