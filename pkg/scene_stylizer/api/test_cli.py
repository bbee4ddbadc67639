# Copyright (c) 2025, scene_stylizer contributors
# See license.txt

import contextlib
import csv
import io
import json
import os
import tempfile
import unittest

import numpy as np

from scene_stylizer.api.ablate import parse_matrix
from scene_stylizer.api.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, run
from scene_stylizer.api.scene import load_style_image
from scene_stylizer.exceptions import UsageError
from scene_stylizer.jobs.ablation import DEFAULT_MATRIX
from scene_stylizer.jobs.test_base_stage import tiny_config
from scene_stylizer.services.cameras import Camera, look_at
from scene_stylizer.services.image_io import write_pfm, write_png
from scene_stylizer.services.scenes.scene_factory import get_supported_scenes
from scene_stylizer.utils.config import RunConfig, parse_config


def _read(path: str) -> bytes:
	with open(path, "rb") as fh:
		return fh.read()


class CliCase(unittest.TestCase):
	def setUp(self):
		self.tmp = tempfile.TemporaryDirectory()
		self.config = os.path.join(self.tmp.name, "tiny.cfg")
		cfg = tiny_config(scene__preset="sphere", scene__n_train=2, scene__n_heldout=1, scene__image_size=12)
		with open(self.config, "w", encoding="utf-8") as fh:
			fh.write(cfg.to_text())

	def tearDown(self):
		self.tmp.cleanup()

	def path(self, *parts: str) -> str:
		return os.path.join(self.tmp.name, *parts)

	def cli(self, *argv: str, config: bool = True):
		"""(exit code, stderr) of one command."""
		args = list(argv)
		if config:
			args += ["--config", self.config, "--no-progress", "--log-level", "WARNING"]
		err, out = io.StringIO(), io.StringIO()
		with contextlib.redirect_stderr(err), contextlib.redirect_stdout(out):
			code = run(args)
		return code, err.getvalue()


class TestUsage(CliCase):
	def test_usage_errors_exit_one(self):
		self.assertEqual(self.cli(config=False)[0], EXIT_USAGE)
		code, err = self.cli("bogus", config=False)
		self.assertEqual(code, EXIT_USAGE)
		self.assertIn("error [cli]:", err)
		code, _ = self.cli("render", "--out", self.path("r"))
		self.assertEqual(code, EXIT_USAGE)
		code, _ = self.cli("train-coarse", "--out", self.path("r"), "--seed", "seven")
		self.assertEqual(code, EXIT_USAGE)

	def test_help_exits_zero(self):
		self.assertEqual(self.cli("--help", config=False)[0], EXIT_OK)

	def test_scene_help_lists_presets(self):
		out = io.StringIO()
		with contextlib.redirect_stdout(out):
			code = run(["make-scene", "--help"])
		self.assertEqual(code, EXIT_OK)
		for name in get_supported_scenes()[:3]:
			self.assertIn(name, out.getvalue())

	def test_runtime_errors_exit_two_and_name_module(self):
		code, err = self.cli("train-coarse", "--out", self.path("r"), "--set", "coarse.colour=1")
		self.assertEqual(code, EXIT_FAILURE)
		self.assertIn("error [sceneio]: unknown config key 'coarse.colour'", err)

		code, err = self.cli("train-style", "--out", self.path("s"), "--checkpoint", self.path("missing.sfck"))
		self.assertEqual(code, EXIT_FAILURE)
		self.assertTrue(err.startswith("error ["))


class TestCommands(CliCase):
	def test_gen_extractor_weights_and_manifest(self):
		out = self.path("extractor")
		code, _ = self.cli("gen-extractor-weights", "--out", out, "--seed", "3")
		self.assertEqual(code, EXIT_OK)
		self.assertTrue(os.path.exists(os.path.join(out, "extractor.sffx")))
		manifest = os.path.join(out, "manifest.txt")
		with open(manifest, encoding="utf-8") as fh:
			text = fh.read()
		self.assertIn("# command: gen-extractor-weights", text)
		self.assertIn("# version numpy = ", text)
		restored = parse_config(manifest)
		self.assertEqual(restored["run.seed"], 3)
		self.assertEqual(restored["coarse.width"], 16)

	def test_train_coarse_is_deterministic(self):
		for name in ("a", "b"):
			code, err = self.cli("train-coarse", "--out", self.path(name), "--seed", "7")
			self.assertEqual(code, EXIT_OK, err)
		self.assertEqual(_read(self.path("a", "coarse.sfck")), _read(self.path("b", "coarse.sfck")))

	def test_scene_train_render_evaluate(self):
		code, err = self.cli("make-scene", "--out", self.path("scene"), "--style-size", "64")
		self.assertEqual(code, EXIT_OK, err)
		scene = self.path("scene", "scene", "transforms.json")
		self.assertTrue(os.path.exists(scene))
		self.assertTrue(os.path.exists(self.path("scene", "styles", "painterly.png")))

		code, err = self.cli("train-coarse", "--out", self.path("run1"), "--scene", scene)
		self.assertEqual(code, EXIT_OK, err)

		code, err = self.cli(
			"render", "--out", self.path("renders"), "--scene", scene, "--checkpoint", self.path("run1", "coarse.sfck"),
			"--pose-path", "arc3",
		)
		self.assertEqual(code, EXIT_OK, err)
		names = sorted(os.listdir(self.path("renders")))
		self.assertEqual([n for n in names if n.endswith(".png")], ["000.png", "001.png", "002.png"])
		self.assertEqual(len([n for n in names if n.endswith(".pfm")]), 3)
		with open(self.path("renders", "cameras.json"), encoding="utf-8") as fh:
			payload = json.load(fh)
		self.assertEqual(payload["mode"], "coarse")
		self.assertEqual(len(payload["cameras"]), 3)

		code, err = self.cli("evaluate", "--out", self.path("eval"), "--renders", self.path("renders"), "--pairs", "2:1")
		self.assertEqual(code, EXIT_OK, err)
		self.assertTrue(os.path.exists(self.path("eval", "consistency.csv")))

	def test_evaluate_duplicated_views_gives_zero_rmse(self):
		renders = self.path("dup")
		camera = Camera(16.0, 16.0, 8.0, 8.0, 16, 16, look_at((0.0, -4.0, 0.0), (0.0, 0.0, 0.0)), 1.0, 8.0)
		image = np.random.default_rng(0).uniform(size=(16, 16, 3))
		for k in range(2):
			write_png(os.path.join(renders, f"{k:03d}.png"), image)
			write_pfm(os.path.join(renders, f"{k:03d}.pfm"), np.full((16, 16), 4.0))
		with open(os.path.join(renders, "cameras.json"), "w", encoding="utf-8") as fh:
			json.dump({"z_tol": 0.01, "cameras": [camera.to_dict()] * 2}, fh)

		code, err = self.cli("evaluate", "--out", self.path("eval"), "--renders", renders, "--pairs", "auto")
		self.assertEqual(code, EXIT_OK, err)
		with open(self.path("eval", "consistency.csv"), newline="", encoding="utf-8") as fh:
			rows = list(csv.DictReader(fh))
		self.assertTrue(rows)
		self.assertTrue(all(float(row["rmse"]) < 1e-9 for row in rows))

	def test_evaluate_without_cameras(self):
		os.makedirs(self.path("empty"))
		code, err = self.cli("evaluate", "--out", self.path("eval"), "--renders", self.path("empty"))
		self.assertEqual(code, EXIT_FAILURE)
		self.assertIn("cameras.json", err)


class TestHelpers(unittest.TestCase):
	def test_load_style_image(self):
		cfg = RunConfig()
		self.assertEqual(load_style_image("stripes", cfg).shape, (128, 128, 3))
		self.assertEqual(load_style_image("", cfg).shape, (128, 128, 3))
		with tempfile.TemporaryDirectory() as tmp:
			path = write_png(os.path.join(tmp, "style.png"), np.full((70, 80, 3), 0.5))
			self.assertEqual(load_style_image(path, cfg).shape, (70, 80, 3))
		with self.assertRaises(UsageError):
			load_style_image("no-such-style", cfg)

	def test_parse_matrix(self):
		self.assertEqual(parse_matrix(""), DEFAULT_MATRIX)
		self.assertEqual(parse_matrix("full; ec-only;constant-lambda(10)"), ("", "ec-only", "constant-lambda(10)"))
