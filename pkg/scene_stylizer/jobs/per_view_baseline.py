"""Per-view 2D stylization baseline.

Each view's pixels are optimised on their own with the stage-2 objective
(annealed content weight plus nearest-neighbour style loss), with no field
tying the views together. Warping the results with the coarse depth shows
how much inconsistency independent image stylization introduces.
"""
from __future__ import annotations

import math
from typing import Any, List, Mapping, Optional, Sequence

import numpy as np
from tqdm import tqdm

from scene_stylizer.diffcore.optim import Adam
from scene_stylizer.diffcore.tape import Node, backward
from scene_stylizer.exceptions import NonFiniteLossError, ValidationError
from scene_stylizer.jobs.style_stage import check_style_image, features_of, schedule_from
from scene_stylizer.services.features import FeatureExtractor, extract
from scene_stylizer.services.objectives import AnnealSchedule, content_loss, style_loss, total_loss
from scene_stylizer.utils.logger import log_error, logger


def stylize_image(
	content_image: np.ndarray,
	style_features: np.ndarray,
	extractor: FeatureExtractor,
	iterations: int,
	lr: float,
	schedule: AnnealSchedule,
	normalize: bool = False,
) -> np.ndarray:
	"""Optimise one image's pixels, starting from the content image; values stay in [0, 1]."""
	content_features = features_of(extractor, content_image)
	pixels = Node(np.clip(content_image, 0.0, 1.0), requires_grad=True, name="pixels")
	optimizer = Adam({"pixels": pixels}, lr)
	for t in range(iterations):
		features = extract(extractor, pixels)
		total = total_loss(
			content_loss(features, content_features, normalize), style_loss(features, style_features), schedule(t)
		)
		if not math.isfinite(float(total.value)):
			log_error(f"loss is {float(total.value)} at iteration {t}", "Non-finite Loss", "trainer")
			raise NonFiniteLossError(f"per-view baseline loss became {float(total.value)} at iteration {t}")
		backward(total)
		optimizer.step()
		np.clip(pixels.value, 0.0, 1.0, out=pixels.value)
	return pixels.value.copy()


def per_view_baseline(
	content_images: Sequence[np.ndarray],
	style_image: np.ndarray,
	cfg: Mapping[str, Any],
	extractor: Optional[FeatureExtractor] = None,
	progress: bool = True,
) -> List[np.ndarray]:
	"""
	Stylize every content image independently.

	Args:
		content_images: (H, W, 3) renders in [0, 1], typically coarse renders of a camera path
		style_image: Style reference, at least 64 px per side
		cfg: Resolved RunConfig; reads baseline.iterations, baseline.lr and objective.*

	Returns:
		One stylized image per content image, in order
	"""
	iterations, lr = cfg["baseline.iterations"], cfg["baseline.lr"]
	if iterations < 0 or not lr > 0:
		raise ValidationError(f"baseline needs iterations >= 0 and lr > 0, got {iterations}, {lr}", module="trainer")
	extractor = extractor or FeatureExtractor.load(cfg["features.weights"] or None)
	style_features = features_of(extractor, check_style_image(style_image))
	schedule = schedule_from(cfg)
	results = []
	for image in tqdm(content_images, desc="baseline", disable=not progress):
		results.append(
			stylize_image(image, style_features, extractor, iterations, lr, schedule, cfg["features.normalize"])
		)
	logger("trainer").info(f"Per-view baseline stylized {len(results)} view(s) with {iterations} step(s) each")
	return results
