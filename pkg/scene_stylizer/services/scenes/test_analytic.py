# Copyright (c) 2025, scene_stylizer contributors
# See license.txt

import math
import unittest

import numpy as np

from scene_stylizer.exceptions import DatasetError
from scene_stylizer.services.cameras import Camera, intrinsics_from_fov, look_at
from scene_stylizer.services.fields import SceneBounds
from scene_stylizer.services.renderer import pixel_grid
from scene_stylizer.services.scenes.analytic import AnalyticScene, Box, Sphere, oracle_render, trace

BOUNDS = SceneBounds(np.full(3, -1.5), np.full(3, 1.5))
WHITE = np.ones(3)


def unit_sphere_scene() -> AnalyticScene:
	return AnalyticScene("unit", [Sphere((0.0, 0.0, 0.0), 1.0, (0.5, 0.5, 0.5))], BOUNDS)


def front_camera(size: int = 33, distance: float = 4.0, fov_degrees: float = 40.0) -> Camera:
	fx, fy, cx, cy = intrinsics_from_fov(size, size, math.radians(fov_degrees))
	return Camera(fx, fy, cx, cy, size, size, look_at((0.0, -distance, 0.0), (0.0, 0.0, 0.0)), near=1.0, far=8.0)


class TestSphere(unittest.TestCase):
	def test_centre_pixel_depth(self):
		camera = front_camera(33)
		image, depth = oracle_render(unit_sphere_scene(), camera, WHITE)
		self.assertAlmostEqual(depth[16, 16], 3.0, places=12)
		self.assertTrue(np.all(image[16, 16] < 1.0))

	def test_miss_is_background_and_inf(self):
		camera = front_camera(33)
		image, depth = oracle_render(unit_sphere_scene(), camera, WHITE)
		self.assertTrue(np.isinf(depth[0, 0]))
		np.testing.assert_array_equal(image[0, 0], WHITE)

	def test_silhouette_radius(self):
		distance, radius = 4.0, 1.0
		camera = front_camera(41, distance)
		_, depth = oracle_render(unit_sphere_scene(), camera, WHITE)
		silhouette = camera.fx * radius / math.sqrt(distance**2 - radius**2)
		rho = np.linalg.norm(pixel_grid(camera) + 0.5 - np.array([camera.cx, camera.cy]), axis=1).reshape(depth.shape)
		clear = np.abs(rho - silhouette) > 1e-6
		np.testing.assert_array_equal(np.isfinite(depth)[clear], (rho < silhouette)[clear])

	def test_ray_from_inside(self):
		sphere = Sphere((0.0, 0.0, 0.0), 1.0, (1.0, 1.0, 1.0))
		t, normals = sphere.intersect(np.zeros((1, 3)), np.array([[0.0, 0.0, 1.0]]))
		self.assertAlmostEqual(t[0], 1.0)
		np.testing.assert_allclose(normals[0], [0.0, 0.0, 1.0])

	def test_rejects_bad_radius(self):
		with self.assertRaises(DatasetError):
			Sphere((0.0, 0.0, 0.0), 0.0, (0.5, 0.5, 0.5))


class TestBox(unittest.TestCase):
	def setUp(self):
		self.box = Box((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0), (0.2, 0.4, 0.6))

	def test_front_face(self):
		t, normals = self.box.intersect(np.array([[0.0, -4.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
		self.assertAlmostEqual(t[0], 3.0)
		np.testing.assert_allclose(normals[0], [0.0, -1.0, 0.0])

	def test_ray_on_slab_boundary(self):
		t, _ = self.box.intersect(np.array([[1.0, -4.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
		self.assertAlmostEqual(t[0], 3.0)

	def test_miss(self):
		t, normals = self.box.intersect(np.array([[3.0, -4.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
		self.assertTrue(np.isinf(t[0]))
		np.testing.assert_array_equal(normals[0], np.zeros(3))

	def test_exit_normal_from_inside(self):
		t, normals = self.box.intersect(np.zeros((1, 3)), np.array([[0.0, 1.0, 0.0]]))
		self.assertAlmostEqual(t[0], 1.0)
		np.testing.assert_allclose(normals[0], [0.0, 1.0, 0.0])

	def test_rejects_inverted_corners(self):
		with self.assertRaises(DatasetError):
			Box((0.0, 0.0, 0.0), (0.0, 1.0, 1.0), (0.5, 0.5, 0.5))


class TestAnalyticScene(unittest.TestCase):
	def test_nearest_primitive_wins(self):
		scene = AnalyticScene(
			"pair",
			[Sphere((0.0, 1.0, 0.0), 0.3, (1.0, 0.0, 0.0)), Sphere((0.0, -1.0, 0.0), 0.3, (0.0, 1.0, 0.0))],
			BOUNDS,
		)
		t, _, albedo = trace(scene, np.array([[0.0, -4.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
		self.assertAlmostEqual(t[0], 2.7)
		np.testing.assert_array_equal(albedo[0], [0.0, 1.0, 0.0])

	def test_primitive_outside_bounds(self):
		with self.assertRaises(DatasetError):
			AnalyticScene("out", [Sphere((1.4, 0.0, 0.0), 0.5, (0.5, 0.5, 0.5))], BOUNDS)

	def test_bad_albedo(self):
		with self.assertRaises(DatasetError):
			Sphere((0.0, 0.0, 0.0), 0.5, (1.2, 0.5, 0.5))

	def test_shading_in_unit_range(self):
		image, _ = oracle_render(unit_sphere_scene(), front_camera(17), np.zeros(3))
		self.assertGreaterEqual(image.min(), 0.0)
		self.assertLessEqual(image.max(), 1.0)
