"""
Adam optimizer and step-wise learning-rate decay.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Sequence

import numpy as np

from scene_stylizer.diffcore.tape import Node
from scene_stylizer.exceptions import NonFiniteError, ValidationError

MAX_STEP = 2**53


@dataclass
class AdamState:
	"""Moment estimates for one parameter."""

	m: np.ndarray
	v: np.ndarray
	step: int = 0
	beta1: float = 0.9
	beta2: float = 0.999
	eps: float = 1e-8
	lr: float = 1e-3

	@classmethod
	def for_param(cls, param: Node, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
		return cls(np.zeros_like(param.value), np.zeros_like(param.value), 0, beta1, beta2, eps, lr)


def adam_step(params: Dict[str, Node], states: Dict[str, AdamState]) -> Dict[str, Node]:
	"""
	Apply one bias-corrected Adam update to every parameter, then zero its grad.

	Args:
		params: Named parameter leaves with populated grads
		states: Matching AdamState per name

	Returns:
		The same params mapping, updated in place

	Raises:
		NonFiniteError: If a gradient contains NaN or infinity
		ValidationError: If the step counter would overflow
	"""
	for name, param in params.items():
		grad = param.grad
		if not np.all(np.isfinite(grad)):
			raise NonFiniteError(f"gradient of '{name}' is not finite", module="diffcore")

	for name, param in params.items():
		state = states[name]
		if state.step >= MAX_STEP:
			raise ValidationError(f"Adam step counter overflow for '{name}'", module="diffcore")
		state.step += 1
		grad = param.grad

		state.m *= state.beta1
		state.m += (1.0 - state.beta1) * grad
		state.v *= state.beta2
		state.v += (1.0 - state.beta2) * (grad * grad)

		m_hat = state.m / (1.0 - state.beta1**state.step)
		v_hat = state.v / (1.0 - state.beta2**state.step)
		param.value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
		param.zero_grad()

	return params


@dataclass
class Adam:
	"""Adam over a fixed set of named parameters sharing one learning rate."""

	params: Dict[str, Node]
	lr: float = 1e-3
	beta1: float = 0.9
	beta2: float = 0.999
	eps: float = 1e-8
	states: Dict[str, AdamState] = field(default_factory=dict)

	def __post_init__(self):
		for name, param in self.params.items():
			self.states[name] = AdamState.for_param(param, self.lr, self.beta1, self.beta2, self.eps)

	def set_lr(self, lr: float) -> None:
		self.lr = lr
		for state in self.states.values():
			state.lr = lr

	def step(self) -> None:
		adam_step(self.params, self.states)

	def zero_grad(self) -> None:
		for param in self.params.values():
			param.zero_grad()


def parse_decay_events(spec: str) -> list[tuple[int, float]]:
	"""
	Parse "50:0.33,100:0.33" into [(50, 0.33), (100, 0.33)].

	Raises:
		ValidationError: On malformed entries or factors outside (0, 1]
	"""
	events: list[tuple[int, float]] = []
	for chunk in (spec or "").split(","):
		chunk = chunk.strip()
		if not chunk:
			continue
		try:
			it_text, factor_text = chunk.split(":")
			iteration, factor = int(it_text), float(factor_text)
		except ValueError:
			raise ValidationError(f"malformed decay event '{chunk}', expected iteration:factor", module="trainer")
		if iteration < 0 or not 0.0 < factor <= 1.0:
			raise ValidationError(f"decay event '{chunk}' needs iteration >= 0 and factor in (0, 1]", module="trainer")
		events.append((iteration, factor))
	return sorted(events)


def lr_at(base_lr: float, events: Sequence[tuple[int, float]], iteration: int) -> float:
	"""Learning rate in effect at an iteration: every event at or before it has fired."""
	lr = base_lr
	for at, factor in events:
		if iteration >= at:
			lr *= factor
	return lr


def lr_sequence(base_lr: float, events: Iterable[tuple[int, float]], iterations: int) -> list[float]:
	events = list(events)
	return [lr_at(base_lr, events, t) for t in range(iterations)]
