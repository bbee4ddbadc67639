# Copyright (c) 2025, scene_stylizer contributors
# See license.txt

import unittest

import numpy as np

from scene_stylizer.diffcore.optim import Adam, lr_at, lr_sequence, parse_decay_events
from scene_stylizer.diffcore.tape import Node
from scene_stylizer.exceptions import NonFiniteError, ValidationError


def _param(value):
	return Node(np.array(value, dtype=float), requires_grad=True, name="w")


class TestAdam(unittest.TestCase):
	def test_first_step_moves_by_lr(self):
		w = _param([1.0, -2.0])
		opt = Adam({"w": w}, lr=0.1)
		w.grad = np.ones(2)
		opt.step()
		np.testing.assert_allclose(w.value, [0.9, -2.1], atol=1e-7)
		self.assertIsNone(w._grad)

	def test_zero_gradient_leaves_params(self):
		w = _param([0.5])
		opt = Adam({"w": w}, lr=0.1)
		opt.step()
		self.assertEqual(w.value[0], 0.5)
		self.assertEqual(opt.states["w"].step, 1)

	def test_alternating_gradient_bounded_by_lr(self):
		w = _param([0.0])
		opt = Adam({"w": w}, lr=0.1)
		previous = 0.0
		for g in (1.0, -1.0, 1.0, -1.0):
			w.grad = np.array([g])
			opt.step()
			self.assertLessEqual(abs(w.value[0] - previous), 0.1 + 1e-12)
			previous = w.value[0]

	def test_non_finite_grad_rejected_before_update(self):
		a, b = _param([1.0]), _param([1.0])
		opt = Adam({"a": a, "b": b}, lr=0.1)
		a.grad = np.array([1.0])
		b.grad = np.array([np.nan])
		with self.assertRaises(NonFiniteError) as ctx:
			opt.step()
		self.assertIn("'b'", str(ctx.exception))
		self.assertEqual(a.value[0], 1.0)

	def test_step_overflow(self):
		w = _param([0.0])
		opt = Adam({"w": w}, lr=0.1)
		opt.states["w"].step = 2**53
		with self.assertRaises(ValidationError):
			opt.step()


class TestDecaySchedule(unittest.TestCase):
	def test_parse(self):
		self.assertEqual(parse_decay_events("100:0.33, 50:0.33"), [(50, 0.33), (100, 0.33)])
		self.assertEqual(parse_decay_events(""), [])

	def test_parse_rejects(self):
		for bad in ("50", "50:0", "50:1.5", "x:0.3", "-1:0.5"):
			with self.assertRaises(ValidationError):
				parse_decay_events(bad)

	def test_stage_two_sequence(self):
		events = parse_decay_events("50:0.33,100:0.33")
		self.assertEqual(lr_at(5e-3, events, 0), 5e-3)
		self.assertEqual(lr_at(5e-3, events, 49), 5e-3)
		self.assertAlmostEqual(lr_at(5e-3, events, 50), 5e-3 * 0.33)
		self.assertAlmostEqual(lr_at(5e-3, events, 149), 5e-3 * 0.33 * 0.33)
		seq = lr_sequence(5e-3, events, 150)
		self.assertEqual(len(seq), 150)
		self.assertEqual(len(set(seq)), 3)
		self.assertTrue(all(a >= b for a, b in zip(seq, seq[1:])))
