"""
Logging entry points.

Library code calls ``logger(module).info(...)`` for progress and
``log_error(message, title)`` for recoverable problems. Handlers are only
installed by ``configure_logging``, which the command line calls once.
"""

from __future__ import annotations

import logging
from typing import Optional

ROOT_LOGGER = "scene_stylizer"

_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"


def logger(module: Optional[str] = None) -> logging.Logger:
	"""Return the package logger, namespaced by module when given."""
	if module:
		return logging.getLogger(f"{ROOT_LOGGER}.{module}")
	return logging.getLogger(ROOT_LOGGER)


def log_error(message: str, title: str = "Error", module: Optional[str] = None) -> None:
	"""Record a titled error record without raising."""
	logger(module).error("%s: %s", title, message)


def configure_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
	"""
	Install stream (and optional file) handlers on the package root logger.

	Args:
		level: Level name such as "INFO" or "DEBUG"
		log_file: Optional path that receives a copy of every record
	"""
	root = logging.getLogger(ROOT_LOGGER)
	root.setLevel(level.upper())
	for handler in list(root.handlers):
		root.removeHandler(handler)
		handler.close()

	stream = logging.StreamHandler()
	stream.setFormatter(logging.Formatter(_FORMAT))
	root.addHandler(stream)

	if log_file:
		file_handler = logging.FileHandler(log_file, encoding="utf-8")
		file_handler.setFormatter(logging.Formatter(_FORMAT))
		root.addHandler(file_handler)

	root.propagate = False
