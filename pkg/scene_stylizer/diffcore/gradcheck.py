"""
Finite-difference gradient checks.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from scene_stylizer.diffcore.tape import Node, backward, no_grad
from scene_stylizer.exceptions import NonFiniteError, ValidationError


def _relative_error(analytic: float, numeric: float) -> float:
	return abs(analytic - numeric) / max(1.0, abs(numeric))


def _scalar(node: Node, where: str) -> float:
	if node.value.size != 1:
		raise ValidationError(f"grad_check needs a scalar-valued function, got shape {node.shape}", module="diffcore")
	value = float(node.value.reshape(()))
	if not np.isfinite(value):
		raise NonFiniteError(f"non-finite function value {where}", module="diffcore")
	return value


def grad_check(f: Callable[[Node], Node], point: np.ndarray, h: float = 1e-5) -> float:
	"""
	Compare analytic and central-difference gradients of f at point.

	Args:
		f: Function from a Node to a scalar Node
		point: Where to evaluate
		h: Central-difference step, > 0

	Returns:
		max over coordinates of |analytic - numeric| / max(1, |numeric|)

	Raises:
		NonFiniteError: If any evaluation is non-finite, naming the coordinate
	"""
	if h <= 0:
		raise ValidationError("grad_check step h must be positive", module="diffcore")
	base = np.array(point, dtype=np.float64)
	x = Node(base, requires_grad=True)
	out = f(x)
	_scalar(out, "at the base point")
	backward(out)
	analytic = x.grad.reshape(-1)
	if not np.all(np.isfinite(analytic)):
		index = int(np.flatnonzero(~np.isfinite(analytic))[0])
		raise NonFiniteError(f"non-finite analytic gradient at coordinate {index}", module="diffcore")

	worst = 0.0
	flat = base.reshape(-1)
	with no_grad():
		for i in range(flat.size):
			plus = flat.copy()
			plus[i] += h
			minus = flat.copy()
			minus[i] -= h
			f_plus = _scalar(f(Node(plus.reshape(base.shape))), f"at coordinate {i} (+h)")
			f_minus = _scalar(f(Node(minus.reshape(base.shape))), f"at coordinate {i} (-h)")
			numeric = (f_plus - f_minus) / (2.0 * h)
			worst = max(worst, _relative_error(float(analytic[i]), numeric))
	return worst


def grad_check_params(
	loss: Callable[[], Node],
	params: Sequence[Node],
	h: float = 1e-5,
	coordinates: Optional[Sequence[tuple[int, int]]] = None,
) -> float:
	"""
	Gradient check with respect to existing parameter leaves, perturbed in place.

	Args:
		loss: Zero-argument function rebuilding the scalar loss from the current parameter values
		params: Parameter leaves to check
		h: Central-difference step
		coordinates: Optional (param index, flat index) pairs; all coordinates when omitted

	Returns:
		Maximum relative error over the checked coordinates
	"""
	for p in params:
		p.zero_grad()
	out = loss()
	_scalar(out, "at the base point")
	backward(out)
	analytic = [p.grad.reshape(-1).copy() for p in params]
	for p in params:
		p.zero_grad()

	if coordinates is None:
		coordinates = [(k, i) for k, p in enumerate(params) for i in range(p.value.size)]

	worst = 0.0
	with no_grad():
		for k, i in coordinates:
			flat = params[k].value.reshape(-1)
			original = flat[i]
			flat[i] = original + h
			f_plus = _scalar(loss(), f"at parameter {k} coordinate {i} (+h)")
			flat[i] = original - h
			f_minus = _scalar(loss(), f"at parameter {k} coordinate {i} (-h)")
			flat[i] = original
			numeric = (f_plus - f_minus) / (2.0 * h)
			worst = max(worst, _relative_error(float(analytic[k][i]), numeric))
	return worst
