"""
Reverse-mode differentiation graph.

A Node holds a float64 value, a lazily allocated gradient slot and, for
non-leaf nodes, its parents together with a backward rule that maps the
upstream gradient to one gradient per parent.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from scene_stylizer.exceptions import ValidationError

BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
	"""Evaluate ops without recording parents or backward rules."""
	global _grad_enabled
	previous = _grad_enabled
	_grad_enabled = False
	try:
		yield
	finally:
		_grad_enabled = previous


def is_grad_enabled() -> bool:
	return _grad_enabled


class Node:
	"""A value in the differentiation graph."""

	__slots__ = ("value", "_grad", "parents", "op", "backward_rule", "requires_grad", "name")

	def __init__(
		self,
		value,
		requires_grad: bool = False,
		name: str = "",
		op: str = "leaf",
		parents: Sequence["Node"] = (),
		backward_rule: Optional[BackwardRule] = None,
	):
		if op == "leaf":
			arr = np.array(value, dtype=np.float64)
		else:
			arr = np.asarray(value, dtype=np.float64)
			arr.flags.writeable = False
		self.value = arr
		self._grad: Optional[np.ndarray] = None
		self.parents = tuple(parents)
		self.op = op
		self.backward_rule = backward_rule
		self.requires_grad = requires_grad
		self.name = name

	@property
	def shape(self) -> tuple[int, ...]:
		return self.value.shape

	@property
	def grad(self) -> np.ndarray:
		if self._grad is None:
			self._grad = np.zeros_like(self.value)
		return self._grad

	@grad.setter
	def grad(self, value: Optional[np.ndarray]) -> None:
		self._grad = value

	@property
	def is_leaf(self) -> bool:
		return not self.parents

	def zero_grad(self) -> None:
		self._grad = None

	def numpy(self) -> np.ndarray:
		return self.value

	def __repr__(self) -> str:
		label = f" {self.name!r}" if self.name else ""
		return f"Node({self.op}{label}, shape={self.shape})"

	# Operator sugar; the rules live in ops.py.
	def __add__(self, other):
		from scene_stylizer.diffcore import ops
		return ops.add(self, other)

	def __radd__(self, other):
		from scene_stylizer.diffcore import ops
		return ops.add(other, self)

	def __sub__(self, other):
		from scene_stylizer.diffcore import ops
		return ops.sub(self, other)

	def __rsub__(self, other):
		from scene_stylizer.diffcore import ops
		return ops.sub(other, self)

	def __mul__(self, other):
		from scene_stylizer.diffcore import ops
		return ops.mul(self, other)

	def __rmul__(self, other):
		from scene_stylizer.diffcore import ops
		return ops.mul(other, self)

	def __truediv__(self, other):
		from scene_stylizer.diffcore import ops
		return ops.div(self, other)

	def __neg__(self):
		from scene_stylizer.diffcore import ops
		return ops.neg(self)

	def __matmul__(self, other):
		from scene_stylizer.diffcore import ops
		return ops.matmul(self, other)

	def __getitem__(self, key):
		from scene_stylizer.diffcore import ops
		return ops.getitem(self, key)


def as_node(value) -> Node:
	"""Lift arrays and scalars to constant nodes."""
	if isinstance(value, Node):
		return value
	return Node(value)


def make_node(value: np.ndarray, op: str, parents: Sequence[Node], rule: BackwardRule) -> Node:
	"""Create an op result, recording the graph only when a parent needs gradients."""
	if _grad_enabled and any(p.requires_grad for p in parents):
		return Node(value, requires_grad=True, op=op, parents=parents, backward_rule=rule)
	return Node(value, op=op)


def topological_order(root: Node) -> list[Node]:
	"""Nodes reachable from root that require gradients, parents before children."""
	order: list[Node] = []
	visited: set[int] = set()
	stack: list[tuple[Node, bool]] = [(root, False)]
	while stack:
		node, expanded = stack.pop()
		if expanded:
			order.append(node)
			continue
		if id(node) in visited:
			continue
		visited.add(id(node))
		stack.append((node, True))
		for parent in reversed(node.parents):
			if parent.requires_grad and id(parent) not in visited:
				stack.append((parent, False))
	return order


def backward(root: Node) -> None:
	"""
	Accumulate d(root)/d(leaf) into every reachable leaf's grad.

	Each node's rule runs exactly once, in reverse topological order.
	Repeated calls without zero_grad accumulate.

	Raises:
		ValidationError: If root is not scalar-shaped
	"""
	if root.value.size != 1:
		raise ValidationError(f"backward needs a scalar root, got shape {root.shape}", module="diffcore")
	if not root.requires_grad:
		return

	pending: dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
	for node in reversed(topological_order(root)):
		upstream = pending.pop(id(node), None)
		if upstream is None:
			continue
		if node.is_leaf:
			node.grad = node.grad + upstream
			continue
		for parent, grad in zip(node.parents, node.backward_rule(upstream)):
			if grad is None or not parent.requires_grad:
				continue
			key = id(parent)
			if key in pending:
				pending[key] = pending[key] + grad
			else:
				pending[key] = grad
