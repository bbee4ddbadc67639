"""
Differentiable operations over dense float64 arrays.

Each op computes its value with numpy and registers a backward rule that
maps the upstream gradient to one gradient per input (None for inputs that
are not differentiable, such as index arrays).
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from scene_stylizer.diffcore.tape import Node, as_node, make_node
from scene_stylizer.exceptions import ShapeError, ValidationError


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
	"""Sum grad over the axes numpy broadcasting added or stretched."""
	if grad.shape == shape:
		return grad
	extra = grad.ndim - len(shape)
	if extra:
		grad = grad.sum(axis=tuple(range(extra)))
	stretched = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
	if stretched:
		grad = grad.sum(axis=stretched, keepdims=True)
	return grad


def _binary_operands(a, b, op: str) -> tuple[Node, Node]:
	a, b = as_node(a), as_node(b)
	try:
		np.broadcast_shapes(a.shape, b.shape)
	except ValueError:
		raise ShapeError(f"{op}: operand shapes {a.shape} and {b.shape} do not broadcast")
	return a, b


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Node:
	a, b = _binary_operands(a, b, "add")
	return make_node(
		a.value + b.value, "add", (a, b),
		lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
	)


def sub(a, b) -> Node:
	a, b = _binary_operands(a, b, "sub")
	return make_node(
		a.value - b.value, "sub", (a, b),
		lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
	)


def mul(a, b) -> Node:
	a, b = _binary_operands(a, b, "mul")
	return make_node(
		a.value * b.value, "mul", (a, b),
		lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
	)


def div(a, b) -> Node:
	a, b = _binary_operands(a, b, "div")
	return make_node(
		a.value / b.value, "div", (a, b),
		lambda g: (
			_unbroadcast(g / b.value, a.shape),
			_unbroadcast(-g * a.value / (b.value * b.value), b.shape),
		),
	)


def neg(a) -> Node:
	a = as_node(a)
	return make_node(-a.value, "neg", (a,), lambda g: (-g,))


def matmul(a, b) -> Node:
	a, b = as_node(a), as_node(b)
	if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
		raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
	return make_node(
		a.value @ b.value, "matmul", (a, b),
		lambda g: (g @ b.value.T, a.value.T @ g),
	)


# ---------------------------------------------------------------------------
# Elementwise functions
# ---------------------------------------------------------------------------

def sin(x) -> Node:
	x = as_node(x)
	return make_node(np.sin(x.value), "sin", (x,), lambda g: (g * np.cos(x.value),))


def cos(x) -> Node:
	x = as_node(x)
	return make_node(np.cos(x.value), "cos", (x,), lambda g: (-g * np.sin(x.value),))


def exp(x) -> Node:
	x = as_node(x)
	out = np.exp(x.value)
	return make_node(out, "exp", (x,), lambda g: (g * out,))


def log(x) -> Node:
	x = as_node(x)
	if np.any(x.value <= 0):
		raise ValidationError("log: input must be strictly positive", module="diffcore")
	return make_node(np.log(x.value), "log", (x,), lambda g: (g / x.value,))


def relu(x) -> Node:
	x = as_node(x)
	return make_node(np.maximum(x.value, 0.0), "relu", (x,), lambda g: (g * (x.value > 0),))


def clamp_min(x, lower: float = 0.0) -> Node:
	"""max(x, lower); gradient passes where x >= lower, so a value sitting on the bound still trains."""
	x = as_node(x)
	return make_node(
		np.maximum(x.value, lower), "clamp_min", (x,),
		lambda g: (g * (x.value >= lower),),
	)


def _sigmoid(v: np.ndarray) -> np.ndarray:
	return 0.5 * (1.0 + np.tanh(0.5 * v))


def softplus(x) -> Node:
	x = as_node(x)
	return make_node(np.logaddexp(0.0, x.value), "softplus", (x,), lambda g: (g * _sigmoid(x.value),))


def sigmoid(x) -> Node:
	x = as_node(x)
	out = _sigmoid(x.value)
	return make_node(out, "sigmoid", (x,), lambda g: (g * out * (1.0 - out),))


# ---------------------------------------------------------------------------
# Structural ops
# ---------------------------------------------------------------------------

def concat(nodes: Sequence, axis: int = -1) -> Node:
	parts = [as_node(n) for n in nodes]
	if not parts:
		raise ShapeError("concat: no operands")
	ndim = parts[0].value.ndim
	ax = axis % ndim
	for p in parts:
		if p.value.ndim != ndim or any(
			p.shape[i] != parts[0].shape[i] for i in range(ndim) if i != ax
		):
			raise ShapeError(f"concat: shapes {[q.shape for q in parts]} differ off axis {axis}")
	bounds = np.cumsum([p.shape[ax] for p in parts])[:-1]

	def rule(g):
		return tuple(np.split(g, bounds, axis=ax))

	return make_node(np.concatenate([p.value for p in parts], axis=ax), "concat", parts, rule)


def gather(x, index, axis: int = 0) -> Node:
	"""x.take(index, axis); the gradient scatter-adds back onto the gathered slots only."""
	x = as_node(x)
	idx = np.asarray(index)
	if not np.issubdtype(idx.dtype, np.integer):
		raise ShapeError(f"gather: index must be integer, got {idx.dtype}")
	ax = axis % x.value.ndim
	extent = x.shape[ax]
	if idx.size and (idx.min() < 0 or idx.max() >= extent):
		raise ShapeError(f"gather: index out of range for axis {axis} of shape {x.shape}")

	def rule(g):
		grad = np.zeros_like(x.value)
		moved = np.moveaxis(grad, ax, 0)
		g_moved = np.moveaxis(g, tuple(range(ax, ax + idx.ndim)), tuple(range(idx.ndim)))
		np.add.at(moved, idx, g_moved)
		return (grad,)

	return make_node(np.take(x.value, idx, axis=ax), "gather", (x,), rule)


def getitem(x, key) -> Node:
	x = as_node(x)
	try:
		value = x.value[key]
	except IndexError as e:
		raise ShapeError(f"slice: invalid key for shape {x.shape}: {e}")

	def rule(g):
		grad = np.zeros_like(x.value)
		np.add.at(grad, key, g)
		return (grad,)

	return make_node(np.array(value), "slice", (x,), rule)


def reshape(x, shape: Sequence[int]) -> Node:
	x = as_node(x)
	try:
		value = x.value.reshape(shape)
	except ValueError:
		raise ShapeError(f"reshape: cannot reshape {x.shape} into {tuple(shape)}")
	return make_node(value, "reshape", (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes: Sequence[int]) -> Node:
	x = as_node(x)
	if sorted(axes) != list(range(x.value.ndim)):
		raise ShapeError(f"transpose: axes {tuple(axes)} invalid for shape {x.shape}")
	inverse = np.argsort(axes)
	return make_node(np.transpose(x.value, axes), "transpose", (x,), lambda g: (np.transpose(g, inverse),))


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def _expand_back(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
	if axis is None:
		return np.broadcast_to(g, shape).copy()
	axes = (axis,) if isinstance(axis, int) else tuple(axis)
	axes = tuple(a % len(shape) for a in axes)
	if not keepdims:
		for a in sorted(axes):
			g = np.expand_dims(g, a)
	return np.broadcast_to(g, shape).copy()


def sum(x, axis=None, keepdims: bool = False) -> Node:  # noqa: A001
	x = as_node(x)
	return make_node(
		np.sum(x.value, axis=axis, keepdims=keepdims), "sum", (x,),
		lambda g: (_expand_back(g, x.shape, axis, keepdims),),
	)


def mean(x, axis=None, keepdims: bool = False) -> Node:
	x = as_node(x)
	value = np.mean(x.value, axis=axis, keepdims=keepdims)
	count = x.value.size // max(np.size(value), 1)
	return make_node(
		value, "mean", (x,),
		lambda g: (_expand_back(g, x.shape, axis, keepdims) / count,),
	)


def cumsum(x, axis: int = -1, exclusive: bool = False) -> Node:
	"""Running sum along axis; exclusive shifts so element i sums entries before i."""
	x = as_node(x)
	ax = axis % x.value.ndim
	inclusive = np.cumsum(x.value, axis=ax)
	if exclusive:
		value = inclusive - x.value
	else:
		value = inclusive

	def rule(g):
		rev = np.flip(np.cumsum(np.flip(g, ax), axis=ax), ax)
		return (rev - g if exclusive else rev,)

	return make_node(value, "cumsum", (x,), rule)


# ---------------------------------------------------------------------------
# Image ops
# ---------------------------------------------------------------------------

def conv2d(x, weight, bias: Optional[Node] = None) -> Node:
	"""
	Stride-1 convolution with zero 'same' padding.

	Args:
		x: (C, H, W) input
		weight: (O, C, k, k) kernel, k odd
		bias: optional (O,) bias
	"""
	x, weight = as_node(x), as_node(weight)
	if x.value.ndim != 3 or weight.value.ndim != 4:
		raise ShapeError(f"conv2d: expected (C,H,W) and (O,C,k,k), got {x.shape} and {weight.shape}")
	c, h, w = x.shape
	o, c2, k, k2 = weight.shape
	if c != c2 or k != k2 or k % 2 == 0:
		raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {weight.shape}")
	pad = k // 2
	xp = np.pad(x.value, ((0, 0), (pad, pad), (pad, pad)))
	wv = weight.value

	out = np.zeros((o, h * w))
	for ky in range(k):
		for kx in range(k):
			out += wv[:, :, ky, kx] @ xp[:, ky:ky + h, kx:kx + w].reshape(c, h * w)
	out = out.reshape(o, h, w)

	parents = [x, weight]
	if bias is not None:
		bias = as_node(bias)
		if bias.shape != (o,):
			raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {o} output channels")
		out = out + bias.value[:, None, None]
		parents.append(bias)

	def rule(g):
		g2 = g.reshape(o, h * w)
		gxp = np.zeros_like(xp)
		gw = np.zeros_like(wv)
		for ky in range(k):
			for kx in range(k):
				patch = xp[:, ky:ky + h, kx:kx + w].reshape(c, h * w)
				gw[:, :, ky, kx] = g2 @ patch.T
				gxp[:, ky:ky + h, kx:kx + w] += (wv[:, :, ky, kx].T @ g2).reshape(c, h, w)
		grads = [gxp[:, pad:pad + h, pad:pad + w], gw]
		if bias is not None:
			grads.append(g.sum(axis=(1, 2)))
		return tuple(grads)

	return make_node(out, "conv2d", parents, rule)


def avg_pool2(x) -> Node:
	"""2x2 average pooling of (C, H, W); odd edges average the entries that exist."""
	x = as_node(x)
	if x.value.ndim != 3:
		raise ShapeError(f"avg_pool2: expected (C,H,W), got {x.shape}")
	c, h, w = x.shape
	h2, w2 = (h + 1) // 2, (w + 1) // 2
	padded = np.zeros((c, 2 * h2, 2 * w2))
	padded[:, :h, :w] = x.value
	mask = np.zeros((2 * h2, 2 * w2))
	mask[:h, :w] = 1.0
	counts = mask.reshape(h2, 2, w2, 2).sum(axis=(1, 3))
	out = padded.reshape(c, h2, 2, w2, 2).sum(axis=(2, 4)) / counts

	def rule(g):
		spread = np.repeat(np.repeat(g / counts, 2, axis=1), 2, axis=2)
		return (spread[:, :h, :w],)

	return make_node(out, "avg_pool2", (x,), rule)


def cosine_similarity(a, b, eps: float = 1e-8) -> Node:
	"""Row-wise <a_i, b_i> / (|a_i| |b_i| + eps) for (N, D) operands."""
	a, b = as_node(a), as_node(b)
	if a.value.ndim != 2 or a.shape != b.shape:
		raise ShapeError(f"cosine_similarity: expected equal (N,D) shapes, got {a.shape} and {b.shape}")
	na = np.linalg.norm(a.value, axis=1)
	nb = np.linalg.norm(b.value, axis=1)
	den = na * nb + eps
	dot = np.sum(a.value * b.value, axis=1)
	out = dot / den

	def rule(g):
		unit_a = np.divide(a.value, na[:, None], out=np.zeros_like(a.value), where=na[:, None] > 0)
		unit_b = np.divide(b.value, nb[:, None], out=np.zeros_like(b.value), where=nb[:, None] > 0)
		scale = (dot / (den * den))[:, None]
		ga = g[:, None] * (b.value / den[:, None] - scale * nb[:, None] * unit_a)
		gb = g[:, None] * (a.value / den[:, None] - scale * na[:, None] * unit_b)
		return ga, gb

	return make_node(out, "cosine_similarity", (a, b), rule)
