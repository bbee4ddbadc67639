"""
Exception hierarchy for scene_stylizer.

Every failure raised by the package derives from StylizerError and records
the module it came from, so the command line can report which stage failed.
"""

from __future__ import annotations


class StylizerError(Exception):
	"""Base class for all package errors."""

	module = "scene_stylizer"

	def __init__(self, message: str, module: str | None = None):
		super().__init__(message)
		if module:
			self.module = module


class ValidationError(StylizerError):
	"""A precondition on an input was violated."""


class ShapeError(ValidationError):
	"""Operand shapes do not conform for an operation."""

	module = "diffcore"


class NonFiniteError(ValidationError):
	"""A NaN or infinity appeared where finite values are required."""


class ConfigError(StylizerError):
	"""Unknown configuration key or a value of the wrong type."""

	module = "sceneio"


class DatasetError(StylizerError):
	"""A scene dataset could not be generated or loaded."""

	module = "sceneio"


class ImageFormatError(StylizerError):
	"""An image file is truncated, malformed or uses an unsupported layout."""

	module = "sceneio"


class CheckpointError(StylizerError):
	"""A checkpoint container is malformed or does not match the model."""

	module = "diffcore"


class FreezeViolationError(StylizerError):
	"""Parameters that must stay frozen were modified during optimization."""

	module = "trainer"


class NonFiniteLossError(StylizerError):
	"""Training produced a non-finite loss; the last good checkpoint is kept."""

	module = "trainer"

	def __init__(self, message: str, checkpoint_path: str | None = None):
		super().__init__(message)
		self.checkpoint_path = checkpoint_path


class UsageError(StylizerError):
	"""Bad command-line usage."""

	module = "cli"
