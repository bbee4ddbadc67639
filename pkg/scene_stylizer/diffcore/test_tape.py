# Copyright (c) 2025, scene_stylizer contributors
# See license.txt

import unittest

import numpy as np

from scene_stylizer.diffcore import ops
from scene_stylizer.diffcore.gradcheck import grad_check, grad_check_params
from scene_stylizer.diffcore.layers import MLP, Linear
from scene_stylizer.diffcore.tape import Node, backward, no_grad, topological_order
from scene_stylizer.exceptions import ValidationError


def _small_net(seed: int):
	rng = np.random.default_rng(seed)
	body = MLP(4, 6, 3, rng)
	head = Linear(body.out_dim, 2, rng)
	return body, head


class TestBackward(unittest.TestCase):
	def test_sum_gives_ones(self):
		x = Node(np.arange(5.0), requires_grad=True)
		backward(ops.sum(x))
		np.testing.assert_array_equal(x.grad, np.ones(5))

	def test_squared_error_at_equality_is_zero(self):
		x = Node(np.linspace(-1, 1, 6), requires_grad=True)
		y = np.linspace(-1, 1, 6)
		diff = x - y
		backward(ops.mean(diff * diff))
		np.testing.assert_array_equal(x.grad, np.zeros(6))

	def test_non_scalar_root_rejected(self):
		x = Node(np.ones(3), requires_grad=True)
		with self.assertRaises(ValidationError):
			backward(ops.sin(x))

	def test_repeated_backward_accumulates(self):
		x = Node(np.ones(3), requires_grad=True)
		root = ops.sum(ops.mul(x, 2.0))
		backward(root)
		backward(root)
		np.testing.assert_array_equal(x.grad, np.full(3, 4.0))
		x.zero_grad()
		np.testing.assert_array_equal(x.grad, np.zeros(3))

	def test_shared_subexpression_visited_once(self):
		x = Node(np.array([3.0]), requires_grad=True)
		y = ops.mul(x, x)
		backward(ops.sum(ops.add(y, y)))
		self.assertEqual(x.grad[0], 12.0)

	def test_no_grad_records_nothing(self):
		x = Node(np.ones(2), requires_grad=True)
		with no_grad():
			y = ops.exp(x)
		self.assertFalse(y.requires_grad)
		self.assertEqual(y.parents, ())

	def test_op_results_are_readonly(self):
		y = ops.add(np.ones(2), 1.0)
		with self.assertRaises(ValueError):
			y.value[0] = 5.0

	def test_mlp_matches_finite_differences(self):
		body, head = _small_net(3)
		x = np.random.default_rng(4).normal(size=(5, 4))

		def loss():
			return ops.mean(ops.sigmoid(head(body(x))))

		params = list(body.parameters().values()) + list(head.parameters().values())
		self.assertLess(grad_check_params(loss, params), 1e-4)

	def test_mlp_input_gradient(self):
		body, head = _small_net(5)
		point = np.random.default_rng(6).normal(size=(3, 4))
		self.assertLess(grad_check(lambda x: ops.sum(head(body(x))), point), 1e-4)


class TestDeterminism(unittest.TestCase):
	def _grads(self):
		body, head = _small_net(11)
		x = np.random.default_rng(12).normal(size=(8, 4))
		root = ops.mean(ops.softplus(head(body(x))))
		backward(root)
		return [p.grad.copy() for p in body.parameters().values()], root

	def test_bit_identical_gradients(self):
		first, _ = self._grads()
		second, _ = self._grads()
		for a, b in zip(first, second):
			self.assertEqual(a.tobytes(), b.tobytes())

	def test_op_tags_reproducible(self):
		_, root_a = self._grads()
		_, root_b = self._grads()
		tags_a = [node.op for node in topological_order(root_a)]
		tags_b = [node.op for node in topological_order(root_b)]
		self.assertEqual(tags_a, tags_b)
		self.assertIn("matmul", tags_a)
		self.assertEqual(tags_a[-1], "mean")


class TestGradCheck(unittest.TestCase):
	def test_square_at_three(self):
		self.assertLess(grad_check(lambda x: ops.sum(ops.mul(x, x)), np.array([3.0])), 1e-8)

	def test_constant_function(self):
		def constant(x):
			return ops.add(ops.sum(ops.mul(x, 0.0)), 2.0)

		self.assertEqual(grad_check(constant, np.array([1.0, -2.0])), 0.0)

	def test_rejects_bad_step(self):
		with self.assertRaises(ValidationError):
			grad_check(ops.sum, np.ones(2), h=0.0)
