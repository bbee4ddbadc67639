# Copyright (c) 2025, scene_stylizer contributors
# See license.txt

import os
import tempfile
import unittest

import numpy as np

from scene_stylizer.diffcore import ops
from scene_stylizer.diffcore.gradcheck import grad_check
from scene_stylizer.diffcore.tape import Node, backward
from scene_stylizer.exceptions import ShapeError, ValidationError
from scene_stylizer.services.objectives import (
	AnnealSchedule,
	LossLog,
	LossReport,
	content_loss,
	lambda_at,
	read_loss_log,
	recon_loss,
	style_loss,
	total_loss,
)


class TestReconLoss(unittest.TestCase):
	def test_values(self):
		a = np.random.default_rng(0).uniform(size=(7, 3))
		self.assertEqual(float(recon_loss(a, a).value), 0.0)
		self.assertAlmostEqual(float(recon_loss(np.zeros((4, 3)), np.ones((4, 3))).value), 3.0, places=15)

	def test_symmetric(self):
		rng = np.random.default_rng(1)
		a, b = rng.uniform(size=(5, 3)), rng.uniform(size=(5, 3))
		self.assertEqual(float(recon_loss(a, b).value), float(recon_loss(b, a).value))

	def test_length_mismatch(self):
		with self.assertRaises(ShapeError):
			recon_loss(np.zeros((4, 3)), np.zeros((5, 3)))


class TestContentLoss(unittest.TestCase):
	def test_constant_offset(self):
		rng = np.random.default_rng(2)
		f = rng.normal(size=(6, 8))
		v = rng.normal(size=8)
		self.assertEqual(float(content_loss(f, f).value), 0.0)
		self.assertAlmostEqual(float(content_loss(f + v, f).value), float(v @ v) / 8, places=12)

	def test_normalized_ignores_scale(self):
		f = np.random.default_rng(3).normal(size=(4, 5))
		self.assertLess(float(content_loss(3.0 * f, f, normalize=True).value), 1e-20)
		self.assertGreater(float(content_loss(3.0 * f, f).value), 0.0)

	def test_shape_mismatch(self):
		with self.assertRaises(ShapeError):
			content_loss(np.zeros((4, 8)), np.zeros((4, 7)))


class TestStyleLoss(unittest.TestCase):
	def test_zero_cases(self):
		s = np.random.default_rng(4).normal(size=(9, 6))
		self.assertLess(abs(float(style_loss(s, s).value)), 1e-7)
		self.assertLess(abs(float(style_loss(2.5 * s, s).value)), 1e-7)

	def test_two_by_two_against_brute_force(self):
		rng = np.random.default_rng(5)
		f, s = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
		dist = 1.0 - (f @ s.T) / (np.linalg.norm(f, axis=1)[:, None] * np.linalg.norm(s, axis=1)[None, :] + 1e-8)
		self.assertAlmostEqual(float(style_loss(f, s).value), float(dist.min(axis=1).mean()), places=12)

	def test_gradient_at_fixed_match(self):
		rng = np.random.default_rng(6)
		f0, s = rng.normal(size=(5, 4)), rng.normal(size=(7, 4))
		self.assertLess(grad_check(lambda f: style_loss(f, s), f0), 1e-4)


class TestAnnealSchedule(unittest.TestCase):
	def test_reference_values(self):
		schedule = AnnealSchedule()
		self.assertEqual(lambda_at(schedule, 0), 10.0)
		self.assertAlmostEqual(lambda_at(schedule, 50), 1.0, places=12)
		self.assertAlmostEqual(lambda_at(schedule, 100), 0.1, places=12)
		self.assertAlmostEqual(lambda_at(schedule, 250), 0.1, places=12)

	def test_continuous_and_nonincreasing(self):
		schedule = AnnealSchedule()
		self.assertAlmostEqual(lambda_at(schedule, 100 - 1e-9), lambda_at(schedule, 100), places=9)
		values = [schedule(t) for t in np.linspace(0, 300, 601)]
		self.assertTrue(all(b <= a for a, b in zip(values, values[1:])))

	def test_constant_mode(self):
		schedule = AnnealSchedule(constant=0.1)
		self.assertEqual([schedule(t) for t in (0, 50, 500)], [0.1, 0.1, 0.1])

	def test_parameter_checks(self):
		for kwargs in ({"lambda0": 0.0}, {"alpha": 0.0}, {"alpha": 1.5}, {"T": 0}, {"constant": -1.0}):
			with self.assertRaises(ValidationError, msg=str(kwargs)):
				AnnealSchedule(**kwargs)
		with self.assertRaises(ValidationError):
			lambda_at(AnnealSchedule(), -1)


class TestTotalLoss(unittest.TestCase):
	def test_values(self):
		self.assertEqual(float(total_loss(1.0, 2.0, 10.0).value), 12.0)
		self.assertEqual(float(total_loss(5.0, 2.0, 0.0).value), 2.0)
		with self.assertRaises(ValidationError):
			total_loss(1.0, 1.0, -0.5)

	def test_gradient_splits(self):
		rng = np.random.default_rng(7)
		target, style = rng.normal(size=(6, 4)), rng.normal(size=(8, 4))
		x0 = rng.normal(size=(6, 4))
		lam = 3.0

		def grad_of(build):
			x = Node(x0.copy(), requires_grad=True)
			backward(build(x))
			return x.grad.copy()

		g_total = grad_of(lambda x: total_loss(content_loss(x, target), style_loss(x, style), lam))
		g_content = grad_of(lambda x: content_loss(x, target))
		g_style = grad_of(lambda x: style_loss(x, style))
		np.testing.assert_allclose(g_total, lam * g_content + g_style, atol=1e-12)

	def test_nonnegative(self):
		rng = np.random.default_rng(8)
		for _ in range(5):
			f, s = rng.normal(size=(4, 3)), rng.normal(size=(6, 3))
			self.assertGreaterEqual(float(ops.sum(style_loss(f, s)).value), 0.0)
			self.assertGreaterEqual(float(content_loss(f, s[:4]).value), 0.0)


class TestLossLog(unittest.TestCase):
	def test_append_and_replay(self):
		with tempfile.TemporaryDirectory() as tmp:
			path = os.path.join(tmp, "logs", "style_loss.jsonl")
			log = LossLog(path)
			for t in range(3):
				log.append(LossReport(t, lam=0.1 * t, content=1.0 / 3.0, style=2.0, total=2.0 + t))
			reports = read_loss_log(path)
			self.assertEqual([r.iteration for r in reports], [0, 1, 2])
			self.assertEqual(reports[1].content, 1.0 / 3.0)
			self.assertEqual(list(log), reports)
			with open(path, "a", encoding="utf-8") as fh:
				fh.write("{not json\n")
			with self.assertRaises(ValidationError):
				read_loss_log(path)

	def test_rejects_non_finite(self):
		with self.assertRaises(ValidationError):
			LossReport(0, total=float("nan"))
