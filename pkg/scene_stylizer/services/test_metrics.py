# Copyright (c) 2025, scene_stylizer contributors
# See license.txt

import csv
import math
import os
import tempfile
import unittest

import numpy as np

from scene_stylizer.exceptions import ShapeError, ValidationError
from scene_stylizer.services.cameras import Camera, look_at
from scene_stylizer.services.metrics import (
	CSV_HEADER,
	FPD_LABEL,
	consistency_report,
	fpd_proxy,
	masked_rmse,
	psnr,
	ssim,
	view_pairs,
	warp,
)
from scene_stylizer.services.renderer import generate_rays
from scene_stylizer.services.scenes.procedural import make_dataset, spheres_scene


def plane_camera(size: int = 16, x: float = 0.0) -> Camera:
	"""Camera looking down +z from (x, 0, 0); image x runs along world +x."""
	pose = np.eye(4)
	pose[0, 3] = x
	return Camera(float(size), float(size), size / 2, size / 2, size, size, pose, near=0.5, far=10.0)


def plane_depth(camera: Camera, z: float) -> np.ndarray:
	"""Ray distances to the plane at optical-axis depth z."""
	rays = generate_rays(camera)
	directions_cam = rays.directions @ camera.rotation
	return (z / directions_cam[:, 2]).reshape(camera.shape)


class TestWarp(unittest.TestCase):
	def test_identity(self):
		rng = np.random.default_rng(0)
		camera = plane_camera()
		image = rng.uniform(size=(16, 16, 3))
		depth = plane_depth(camera, 3.0)
		result = warp(image, depth, camera, camera, depth, z_tol=1e-6)
		self.assertTrue(result.mask.all())
		self.assertEqual(result.fraction_valid, 1.0)
		self.assertLess(np.max(np.abs(result.image - image)), 1e-9)

	def test_translation_shifts_by_focal_baseline_over_depth(self):
		rng = np.random.default_rng(1)
		z, size = 4.0, 16
		cam_a = plane_camera(size)
		# fx * dx / z = 16 * 0.5 / 4 = 2 pixels
		cam_b = plane_camera(size, x=0.5)
		image = rng.uniform(size=(size, size, 3))
		result = warp(image, plane_depth(cam_a, z), cam_a, cam_b, plane_depth(cam_b, z), z_tol=1e-6)
		np.testing.assert_allclose(result.image[:, : size - 2], image[:, 2:], atol=1e-9)
		self.assertTrue(result.mask[:, : size - 2].all())
		self.assertFalse(result.mask[:, size - 2 :].any())

	def test_occluded_target_is_masked(self):
		camera = plane_camera()
		depth = plane_depth(camera, 3.0)
		target = depth.copy()
		target[4:8, 4:8] -= 1.0
		result = warp(np.full((16, 16, 3), 0.5), depth, camera, camera, target, z_tol=0.01)
		self.assertFalse(result.mask[4:8, 4:8].any())
		self.assertTrue(result.mask[10:, 10:].all())

	def test_infinite_source_depth_contributes_nothing(self):
		camera = plane_camera()
		depth = np.full((16, 16), np.inf)
		result = warp(np.ones((16, 16, 3)), depth, camera, camera, depth, z_tol=0.1)
		self.assertEqual(result.fraction_valid, 0.0)

	def test_size_mismatch(self):
		camera = plane_camera()
		with self.assertRaises(ShapeError):
			warp(np.zeros((8, 8, 3)), np.ones((16, 16)), camera, camera, np.ones((16, 16)), 0.1)

	def test_round_trip_with_oracle_depth(self):
		data = make_dataset(spheres_scene(), n_train=2, n_heldout=0, image_size=48, arc_degrees=10.0)
		(img_a, img_b), (dep_a, dep_b) = data.images, data.depths
		cam_a, cam_b = data.cameras
		z_tol = 0.01 * data.bounds.diameter
		forward = warp(img_a, dep_a, cam_a, cam_b, dep_b, z_tol)
		depth_fw = np.where(forward.mask, dep_b, np.inf)
		back = warp(forward.image, depth_fw, cam_b, cam_a, dep_a, z_tol)
		both = back.mask & np.isfinite(dep_a)
		self.assertGreater(both.mean(), 0.1)
		self.assertLess(np.mean(np.abs(back.image[both] - img_a[both])), 0.02)


class TestImageMetrics(unittest.TestCase):
	def test_masked_rmse(self):
		a = np.zeros((2, 2, 3))
		self.assertEqual(masked_rmse(a, a), 0.0)
		self.assertAlmostEqual(masked_rmse(a, a + 0.1), 0.1)
		b = a.copy()
		b[0] = 0.4
		mask = np.array([[True, True], [False, False]])
		self.assertAlmostEqual(masked_rmse(a, b, mask), 0.4)
		self.assertAlmostEqual(masked_rmse(a, b, ~mask), 0.0)
		with self.assertRaises(ValidationError):
			masked_rmse(a, b, np.zeros((2, 2), dtype=bool))

	def test_ssim_identical_and_symmetric(self):
		rng = np.random.default_rng(2)
		a = rng.uniform(size=(24, 24, 3))
		b = np.clip(a + rng.normal(0.0, 0.1, size=a.shape), 0.0, 1.0)
		self.assertAlmostEqual(ssim(a, a), 1.0, places=10)
		self.assertEqual(ssim(a, b), ssim(b, a))
		self.assertLess(ssim(a, b), 1.0)

	def test_ssim_constant_images(self):
		c1 = 0.01**2
		value = ssim(np.zeros((16, 16, 3)), np.ones((16, 16, 3)))
		self.assertAlmostEqual(value, c1 / (1.0 + c1), places=9)

	def test_ssim_mask_and_size(self):
		with self.assertRaises(ValidationError):
			ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))
		mask = np.zeros((16, 16), dtype=bool)
		mask[0, 0] = True
		with self.assertRaises(ValidationError):
			ssim(np.zeros((16, 16, 3)), np.zeros((16, 16, 3)), mask)

	def test_psnr(self):
		a = np.zeros((4, 4, 3))
		self.assertTrue(math.isinf(psnr(a, a)))
		self.assertAlmostEqual(psnr(a, a + 0.1), 20.0)
		self.assertGreater(psnr(a, a + 0.05), psnr(a, a + 0.1))

	def test_fpd_proxy(self):
		rng = np.random.default_rng(3)
		a = rng.uniform(size=(16, 16, 3))
		self.assertEqual(fpd_proxy(a, a), 0.0)
		self.assertGreater(fpd_proxy(a, 1.0 - a), 0.0)
		mask = np.zeros((16, 16), dtype=bool)
		mask[:3, :3] = True
		with self.assertRaises(ValidationError):
			fpd_proxy(a, a, mask)


class TestConsistencyReport(unittest.TestCase):
	def test_view_pairs(self):
		pairs = view_pairs(60, short_pairs=10, long_offset=30)
		self.assertEqual(pairs[0], ("short", 0, 1))
		self.assertEqual(pairs[10], ("long", 0, 30))
		self.assertEqual(len(pairs), 20)
		self.assertEqual(view_pairs(4)[-1], ("long", 3, 1))
		with self.assertRaises(ValidationError):
			view_pairs(1)

	def test_duplicate_view_is_perfectly_consistent(self):
		camera = Camera(16.0, 16.0, 8.0, 8.0, 16, 16, look_at((0.0, -4.0, 0.0), (0.0, 0.0, 0.0)), 1.0, 8.0)
		rng = np.random.default_rng(4)
		image = rng.uniform(size=(16, 16, 3))
		depth = np.full((16, 16), 4.0)
		report = consistency_report([image, image], [depth, depth], [camera, camera], z_tol=0.01)
		for pair in report.pairs:
			self.assertLess(pair.rmse, 1e-9)
			self.assertAlmostEqual(pair.ssim, 1.0, places=9)
		self.assertIn(FPD_LABEL, report.to_table())

		with tempfile.TemporaryDirectory() as tmp:
			path = report.write_csv(os.path.join(tmp, "consistency.csv"))
			with open(path, newline="", encoding="utf-8") as fh:
				rows = list(csv.reader(fh))
		self.assertEqual(tuple(rows[0]), CSV_HEADER)
		self.assertEqual(len(rows), 1 + len(report.pairs))
		self.assertEqual(set(report.aggregates()), {"short", "long"})

	def test_mismatched_inputs(self):
		camera = plane_camera()
		with self.assertRaises(ValidationError):
			consistency_report([np.zeros((16, 16, 3))] * 2, [np.ones((16, 16))], [camera] * 2, 0.1)
