# Copyright (c) 2025, scene_stylizer contributors
# See license.txt

import unittest

from scene_stylizer.exceptions import ValidationError
from scene_stylizer.jobs.variants import ablation_mode
from scene_stylizer.services.objectives import AnnealSchedule


class TestAblationMode(unittest.TestCase):
	def test_full_method(self):
		mode = ablation_mode("")
		self.assertEqual(mode.label, "full")
		self.assertEqual(mode.render_mode, "hierarchical")
		self.assertEqual(mode.field_overrides(), {"residual_density": True, "fine_encoding": "hash"})
		base = AnnealSchedule(10.0, 0.01, 100)
		self.assertIs(mode.schedule(base), base)
		self.assertEqual(ablation_mode(None), mode)

	def test_fine_field_flags(self):
		self.assertFalse(ablation_mode("no-residual-density").residual_density)
		self.assertEqual(ablation_mode(["pe-instead-of-hash"]).fine_encoding, "pe")
		self.assertEqual(ablation_mode("ec-only").fine_encoding, "none")
		both = ablation_mode(" no-residual-density , ec-only ")
		self.assertEqual(both.label, "no-residual-density+ec-only")

	def test_constant_lambda_spellings(self):
		for text in ("constant-lambda(0.1)", "constant-lambda=0.1", "constant-lambda:0.1"):
			mode = ablation_mode(text)
			self.assertEqual(mode.constant_lambda, 0.1)
			self.assertEqual(mode.label, "constant-lambda(0.1)")
		schedule = ablation_mode("constant-lambda(10)").schedule(AnnealSchedule(10.0, 0.01, 100))
		self.assertEqual([schedule(t) for t in (0, 50, 150)], [10.0, 10.0, 10.0])

	def test_finetune_coarse(self):
		mode = ablation_mode("finetune-coarse,constant-lambda(1)")
		self.assertTrue(mode.finetune_coarse)
		self.assertEqual(mode.render_mode, "coarse")

	def test_rejects(self):
		for flags in (
			"sharpen",
			"constant-lambda",
			"constant-lambda(abc)",
			"constant-lambda(-1)",
			"ec-only,ec-only",
			"pe-instead-of-hash,ec-only",
			"finetune-coarse,no-residual-density",
		):
			with self.assertRaises(ValidationError, msg=flags):
				ablation_mode(flags)
