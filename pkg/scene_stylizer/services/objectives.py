"""
Loss terms and the content-weight annealing schedule.

Stage 1 minimises the per-ray reconstruction error. Stage 2 minimises
lambda(t) * content + style, where the style term is the mean cosine distance
between every rendered feature and its nearest style feature, and lambda
decays exponentially from lambda0 to lambda0 * alpha over the first T steps.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Iterator, List, Optional

from scene_stylizer.diffcore import ops
from scene_stylizer.diffcore.tape import Node, as_node
from scene_stylizer.exceptions import NonFiniteError, ShapeError, ValidationError
from scene_stylizer.services.features import COSINE_EPS, FeatureMap, nn_match

NORMALIZE_EPS = 1e-12


def _feature_node(features) -> Node:
	if isinstance(features, FeatureMap):
		return features.values
	return as_node(features)


def recon_loss(rendered, ground_truth) -> Node:
	"""
	Mean over rays of the squared l2 color error.

	Args:
		rendered: (N, 3) rendered colors, Node or array
		ground_truth: (N, 3) target colors

	Raises:
		ShapeError: If the two batches differ in shape
	"""
	rendered, ground_truth = as_node(rendered), as_node(ground_truth)
	if rendered.shape != ground_truth.shape or rendered.value.ndim != 2:
		raise ShapeError(
			f"recon_loss: rendered {rendered.shape} vs ground truth {ground_truth.shape}", module="objectives"
		)
	diff = ops.sub(rendered, ground_truth)
	return ops.mean(ops.sum(ops.mul(diff, diff), axis=1))


def _unit_rows(x: Node) -> Node:
	sq = ops.sum(ops.mul(x, x), axis=1, keepdims=True)
	inv_norm = ops.exp(ops.mul(-0.5, ops.log(ops.add(sq, NORMALIZE_EPS))))
	return ops.mul(x, inv_norm)


def content_loss(rendered_feat, content_feat, normalize: bool = False) -> Node:
	"""
	Mean squared difference over every feature element.

	A constant offset v at every location gives |v|^2 / D. With normalize set,
	both maps are l2-normalised per location first.
	"""
	f, c = _feature_node(rendered_feat), _feature_node(content_feat)
	if f.shape != c.shape:
		raise ShapeError(f"content_loss: feature maps {f.shape} and {c.shape} differ", module="objectives")
	if normalize:
		f, c = _unit_rows(f), _unit_rows(c)
	diff = ops.sub(f, c)
	return ops.mean(ops.mul(diff, diff))


def style_loss(rendered_feat, style_feat, eps: float = COSINE_EPS) -> Node:
	"""
	Nearest-neighbour feature matching loss.

	Matches are recomputed on the current features and held fixed; the
	gradient flows through the cosine term only.
	"""
	f, s = _feature_node(rendered_feat), _feature_node(style_feat)
	match = nn_match(f.value, s.value, eps)
	matched = ops.gather(s, match.index, axis=0)
	return ops.mean(ops.sub(1.0, ops.cosine_similarity(f, matched, eps)))


@dataclass(frozen=True)
class AnnealSchedule:
	"""lambda(t) = lambda0 * alpha^(t/T) up to T, lambda0 * alpha after; or a constant."""

	lambda0: float = 10.0
	alpha: float = 0.01
	T: int = 100
	constant: Optional[float] = None

	def __post_init__(self):
		if not self.lambda0 > 0:
			raise ValidationError(f"lambda0 must be positive, got {self.lambda0}", module="objectives")
		if not 0 < self.alpha <= 1:
			raise ValidationError(f"alpha must lie in (0, 1], got {self.alpha}", module="objectives")
		if self.T < 1:
			raise ValidationError(f"T must be at least 1, got {self.T}", module="objectives")
		if self.constant is not None and self.constant < 0:
			raise ValidationError(f"constant lambda must be >= 0, got {self.constant}", module="objectives")

	def __call__(self, t: float) -> float:
		return lambda_at(self, t)


def lambda_at(schedule: AnnealSchedule, t: float) -> float:
	if t < 0:
		raise ValidationError(f"lambda_at needs t >= 0, got {t}", module="objectives")
	if schedule.constant is not None:
		return float(schedule.constant)
	if t >= schedule.T:
		return schedule.lambda0 * schedule.alpha
	return schedule.lambda0 * schedule.alpha ** (t / schedule.T)


def total_loss(content, style, lam: float) -> Node:
	if lam < 0:
		raise ValidationError(f"total_loss needs lambda >= 0, got {lam}", module="objectives")
	return ops.add(ops.mul(as_node(content), lam), as_node(style))


@dataclass
class LossReport:
	"""Loss terms of one optimisation step; terms a stage does not use stay 0."""

	iteration: int
	lam: float = 0.0
	recon: float = 0.0
	content: float = 0.0
	style: float = 0.0
	total: float = 0.0

	def __post_init__(self):
		for name in ("lam", "recon", "content", "style", "total"):
			value = float(getattr(self, name))
			if not math.isfinite(value):
				raise NonFiniteError(f"loss term '{name}' is {value} at iteration {self.iteration}", module="objectives")
			setattr(self, name, value)

	def to_record(self) -> dict:
		return {
			"iter": self.iteration,
			"lambda": self.lam,
			"recon": self.recon,
			"content": self.content,
			"style": self.style,
			"total": self.total,
		}

	@classmethod
	def from_record(cls, record: dict) -> "LossReport":
		return cls(
			int(record["iter"]),
			record["lambda"],
			record["recon"],
			record["content"],
			record["style"],
			record["total"],
		)


class LossLog:
	"""Append-only newline-delimited JSON trace, one record per step."""

	def __init__(self, path: str):
		self.path = path
		os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
		with open(path, "a", encoding="utf-8"):
			pass

	def append(self, report: LossReport) -> None:
		with open(self.path, "a", encoding="utf-8") as fh:
			fh.write(json.dumps(report.to_record()) + "\n")

	def __iter__(self) -> Iterator[LossReport]:
		return iter(read_loss_log(self.path))


def read_loss_log(path: str) -> List[LossReport]:
	"""Parse a loss log; a malformed line fails with its line number."""
	reports = []
	with open(path, encoding="utf-8") as fh:
		for lineno, line in enumerate(fh, start=1):
			if not line.strip():
				continue
			try:
				reports.append(LossReport.from_record(json.loads(line)))
			except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
				raise ValidationError(f"{path}:{lineno}: bad loss record ({e})", module="objectives")
	return reports

