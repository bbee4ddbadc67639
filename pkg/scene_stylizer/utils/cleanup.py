"""Checkpoint cleanup for training run directories.

Only files named ``<prefix>-<iteration>.sfck`` are ever removed; the final
checkpoint of a stage uses a different name and is always kept.

Usage:
    from scene_stylizer.utils.cleanup import prune_checkpoints
    prune_checkpoints(run_dir, "coarse", keep=3)
"""
from __future__ import annotations

import os
import re
from typing import List

from scene_stylizer.exceptions import ValidationError
from scene_stylizer.utils.logger import log_error, logger

CHECKPOINT_SUFFIX = ".sfck"


def checkpoint_name(prefix: str, iteration: int) -> str:
	return f"{prefix}-{iteration:06d}{CHECKPOINT_SUFFIX}"


def list_checkpoints(directory: str, prefix: str) -> List[str]:
	"""Periodic checkpoints of one stage, oldest first."""
	pattern = re.compile(rf"^{re.escape(prefix)}-(\d+){re.escape(CHECKPOINT_SUFFIX)}$")
	if not os.path.isdir(directory):
		return []
	found = []
	for name in os.listdir(directory):
		match = pattern.match(name)
		if match:
			found.append((int(match.group(1)), os.path.join(directory, name)))
	return [path for _, path in sorted(found)]


def prune_checkpoints(directory: str, prefix: str, keep: int) -> List[str]:
	"""Delete all but the newest `keep` periodic checkpoints.

	Args:
		directory: Run directory
		prefix: Stage prefix such as "coarse" or "style"
		keep: Number of newest checkpoints to retain (>= 1)

	Returns:
		Paths that were deleted
	"""
	if keep < 1:
		raise ValidationError(f"keep_checkpoints must be >= 1, got {keep}", module="trainer")
	doomed = list_checkpoints(directory, prefix)[:-keep]
	deleted = []
	for path in doomed:
		try:
			os.remove(path)
			deleted.append(path)
		except OSError as e:
			log_error(f"Could not delete {path}: {e.strerror}", "Checkpoint Cleanup", "trainer")
	if deleted:
		logger("trainer").debug(f"Pruned {len(deleted)} old {prefix} checkpoint(s)")
	return deleted
