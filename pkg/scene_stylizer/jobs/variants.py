"""
Stage-2 variants selected by ablation flags.

Flags:
- no-residual-density: render with sigma_c only
- pe-instead-of-hash: high-frequency positional encoding in place of the hash grid
- ec-only: the fine network sees only the coarse feature
- constant-lambda(v): fixed content weight v instead of the annealed one
- finetune-coarse: optimise the coarse field itself and skip the fine field

finetune-coarse conflicts with every fine-field flag; pe-instead-of-hash and
ec-only conflict with each other.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Any, Dict, Iterable, Optional, Tuple, Union

from scene_stylizer.exceptions import ValidationError
from scene_stylizer.services.objectives import AnnealSchedule

ABLATION_FLAGS = ("no-residual-density", "pe-instead-of-hash", "ec-only", "constant-lambda", "finetune-coarse")
FINE_FIELD_FLAGS = ("no-residual-density", "pe-instead-of-hash", "ec-only")

_CONSTANT = re.compile(r"^constant-lambda\s*(?:\(\s*([^)]*)\s*\)|[=:]\s*(\S+))$")


@dataclass(frozen=True)
class AblationMode:
	residual_density: bool = True
	fine_encoding: str = "hash"
	constant_lambda: Optional[float] = None
	finetune_coarse: bool = False
	flags: Tuple[str, ...] = ()

	@property
	def label(self) -> str:
		return "+".join(self.flags) if self.flags else "full"

	@property
	def render_mode(self) -> str:
		return "coarse" if self.finetune_coarse else "hierarchical"

	def field_overrides(self) -> Dict[str, Any]:
		return {"residual_density": self.residual_density, "fine_encoding": self.fine_encoding}

	def schedule(self, base: AnnealSchedule) -> AnnealSchedule:
		if self.constant_lambda is None:
			return base
		return replace(base, constant=self.constant_lambda)


def _split(flags: Union[str, Iterable[str], None]) -> list[str]:
	if flags is None:
		return []
	if isinstance(flags, str):
		flags = flags.split(",")
	return [f.strip() for f in flags if f and f.strip()]


def ablation_mode(flags: Union[str, Iterable[str], None] = None) -> AblationMode:
	"""
	Parse ablation flags into a trainer variant.

	Args:
		flags: Iterable of flags or one comma-separated string; empty selects the full method

	Raises:
		ValidationError: On unknown, repeated or conflicting flags
	"""
	names: list[str] = []
	constant: Optional[float] = None
	for raw in _split(flags):
		match = _CONSTANT.match(raw)
		if match:
			text = match.group(1) if match.group(1) is not None else match.group(2)
			try:
				constant = float(text)
			except ValueError:
				raise ValidationError(f"constant-lambda needs a number, got '{text}'", module="trainer")
			if constant < 0:
				raise ValidationError(f"constant-lambda must be >= 0, got {constant}", module="trainer")
			name = "constant-lambda"
		elif raw in ABLATION_FLAGS and raw != "constant-lambda":
			name = raw
		else:
			raise ValidationError(
				f"unknown ablation flag '{raw}', expected one of {', '.join(ABLATION_FLAGS)}", module="trainer"
			)
		if name in names:
			raise ValidationError(f"ablation flag '{name}' given twice", module="trainer")
		names.append(name)

	if "pe-instead-of-hash" in names and "ec-only" in names:
		raise ValidationError("conflicting ablation flags: pe-instead-of-hash and ec-only", module="trainer")
	if "finetune-coarse" in names:
		clash = [n for n in names if n in FINE_FIELD_FLAGS]
		if clash:
			raise ValidationError(
				f"conflicting ablation flags: finetune-coarse with {', '.join(clash)}", module="trainer"
			)

	encoding = "pe" if "pe-instead-of-hash" in names else "none" if "ec-only" in names else "hash"
	labels = tuple(f"constant-lambda({constant:g})" if n == "constant-lambda" else n for n in names)
	return AblationMode(
		residual_density="no-residual-density" not in names,
		fine_encoding=encoding,
		constant_lambda=constant,
		finetune_coarse="finetune-coarse" in names,
		flags=labels,
	)
