"""
Named-array checkpoint container.

Layout (little-endian): 4-byte magic, format version u32, array count u32,
then per array: name length u16, UTF-8 name, rank u8, one u64 per extent,
raw float64 data in row-major order.

Parameter checkpoints use the magic "SFCK"; feature-extractor weight files
use "SFFX".
"""

from __future__ import annotations

import os
import struct
from typing import Dict, Mapping

import numpy as np

from scene_stylizer.exceptions import CheckpointError

CHECKPOINT_MAGIC = b"SFCK"
EXTRACTOR_MAGIC = b"SFFX"
FORMAT_VERSION = 1


def encode_arrays(arrays: Mapping[str, np.ndarray], magic: bytes = CHECKPOINT_MAGIC) -> bytes:
	"""Serialize arrays in the mapping's iteration order."""
	if len(magic) != 4:
		raise CheckpointError(f"magic must be 4 bytes, got {magic!r}")
	chunks = [magic, struct.pack("<II", FORMAT_VERSION, len(arrays))]
	for name, value in arrays.items():
		arr = np.ascontiguousarray(value, dtype="<f8")
		encoded = name.encode("utf-8")
		if len(encoded) > 0xFFFF:
			raise CheckpointError(f"array name too long: {name[:40]}...")
		if arr.ndim > 0xFF:
			raise CheckpointError(f"array '{name}' has too many dimensions")
		chunks.append(struct.pack("<H", len(encoded)))
		chunks.append(encoded)
		chunks.append(struct.pack("<B", arr.ndim))
		chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
		chunks.append(arr.tobytes())
	return b"".join(chunks)


def decode_arrays(payload: bytes, magic: bytes = CHECKPOINT_MAGIC) -> Dict[str, np.ndarray]:
	"""
	Parse a container back into an ordered name -> array dict.

	Raises:
		CheckpointError: On wrong magic, unsupported version or truncation
	"""
	view = memoryview(payload)
	offset = 0

	def take(n: int, what: str) -> memoryview:
		nonlocal offset
		if offset + n > len(view):
			raise CheckpointError(f"checkpoint truncated while reading {what} at byte {offset}")
		chunk = view[offset:offset + n]
		offset += n
		return chunk

	found = bytes(take(4, "magic"))
	if found != magic:
		raise CheckpointError(f"bad magic {found!r}, expected {magic!r}")
	version, count = struct.unpack("<II", take(8, "header"))
	if version != FORMAT_VERSION:
		raise CheckpointError(f"unsupported checkpoint format version {version}")

	arrays: Dict[str, np.ndarray] = {}
	for _ in range(count):
		(name_len,) = struct.unpack("<H", take(2, "name length"))
		name = bytes(take(name_len, "name")).decode("utf-8")
		(rank,) = struct.unpack("<B", take(1, f"rank of '{name}'"))
		shape = struct.unpack(f"<{rank}Q", take(8 * rank, f"extents of '{name}'"))
		size = int(np.prod(shape, dtype=np.int64)) if rank else 1
		data = take(8 * size, f"data of '{name}'")
		arrays[name] = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)
	if offset != len(view):
		raise CheckpointError(f"{len(view) - offset} trailing bytes after {count} arrays")
	return arrays


def save_arrays(path: str, arrays: Mapping[str, np.ndarray], magic: bytes = CHECKPOINT_MAGIC) -> str:
	"""Write atomically through a temporary sibling file."""
	payload = encode_arrays(arrays, magic)
	tmp_path = f"{path}.tmp"
	with open(tmp_path, "wb") as f:
		f.write(payload)
	os.replace(tmp_path, path)
	return path


def load_arrays(path: str, magic: bytes = CHECKPOINT_MAGIC) -> Dict[str, np.ndarray]:
	try:
		with open(path, "rb") as f:
			payload = f.read()
	except OSError as e:
		raise CheckpointError(f"cannot read checkpoint {path}: {e}")
	return decode_arrays(payload, magic)
