"""
Parameter containers: Module, Linear and a ReLU multilayer perceptron.
"""

from __future__ import annotations

from typing import Dict, Iterator, Optional

import numpy as np

from scene_stylizer.diffcore import ops
from scene_stylizer.diffcore.tape import Node
from scene_stylizer.exceptions import CheckpointError


class Module:
	"""Holds named parameters and child modules in registration order."""

	def __init__(self):
		self._params: Dict[str, Node] = {}
		self._children: Dict[str, "Module"] = {}

	def register_parameter(self, name: str, value: np.ndarray) -> Node:
		node = Node(value, requires_grad=True, name=name)
		self._params[name] = node
		return node

	def register_module(self, name: str, module: "Module") -> "Module":
		self._children[name] = module
		return module

	def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Node]]:
		for name, node in self._params.items():
			yield f"{prefix}{name}", node
		for name, child in self._children.items():
			yield from child.named_parameters(f"{prefix}{name}.")

	def parameters(self, prefix: str = "") -> Dict[str, Node]:
		return dict(self.named_parameters(prefix))

	def state_dict(self, prefix: str = "") -> Dict[str, np.ndarray]:
		return {name: node.value.copy() for name, node in self.named_parameters(prefix)}

	def load_state_dict(self, arrays: Dict[str, np.ndarray], prefix: str = "") -> None:
		"""Copy arrays into parameters; names and shapes must match exactly."""
		for name, node in self.named_parameters(prefix):
			if name not in arrays:
				raise CheckpointError(f"checkpoint is missing parameter '{name}'")
			value = np.asarray(arrays[name], dtype=np.float64)
			if value.shape != node.shape:
				raise CheckpointError(
					f"parameter '{name}' has shape {value.shape} in checkpoint, model expects {node.shape}"
				)
			node.value[...] = value

	def zero_grad(self) -> None:
		for _, node in self.named_parameters():
			node.zero_grad()


class Linear(Module):
	"""y = x W + b with W of shape (in, out)."""

	def __init__(self, fan_in: int, fan_out: int, rng: Optional[np.random.Generator] = None, zero: bool = False):
		super().__init__()
		self.fan_in = fan_in
		self.fan_out = fan_out
		if zero or rng is None:
			weight = np.zeros((fan_in, fan_out))
		else:
			limit = np.sqrt(6.0 / fan_in)
			weight = rng.uniform(-limit, limit, size=(fan_in, fan_out))
		self.weight = self.register_parameter("weight", weight)
		self.bias = self.register_parameter("bias", np.zeros(fan_out))

	def __call__(self, x) -> Node:
		return ops.add(ops.matmul(x, self.weight), self.bias)


class MLP(Module):
	"""Stack of Linear layers with ReLU after every hidden layer."""

	def __init__(self, fan_in: int, width: int, hidden_layers: int, rng: np.random.Generator):
		super().__init__()
		self.layers: list[Linear] = []
		size = fan_in
		for i in range(hidden_layers):
			layer = Linear(size, width, rng)
			self.register_module(f"layers.{i}", layer)
			self.layers.append(layer)
			size = width
		self.out_dim = size

	def __call__(self, x) -> Node:
		h = x
		for layer in self.layers:
			h = ops.relu(layer(h))
		return h
