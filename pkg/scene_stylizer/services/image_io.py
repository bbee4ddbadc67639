"""
Image file I/O.

PNG files are read and written through Pillow as 8-bit RGB. PFM files hold
raw floating-point maps: the standard little-endian float32 "PF" (color)
and "Pf" (single channel) layouts, plus "PD"/"Pd" float64 variants used for
lossless dumps. Rows are stored bottom to top as in the standard layout.
"""

from __future__ import annotations

import os
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from scene_stylizer.exceptions import ImageFormatError
from scene_stylizer.utils.validation import ensure_finite

PFM_HEADERS = {
	b"PF": (3, np.dtype("<f4")),
	b"Pf": (1, np.dtype("<f4")),
	b"PD": (3, np.dtype("<f8")),
	b"Pd": (1, np.dtype("<f8")),
}
_EIGHT_BIT_MODES = ("1", "L", "LA", "P", "RGB", "RGBA")


def read_png(path: str, background: Optional[np.ndarray] = None) -> np.ndarray:
	"""
	Read an 8-bit image as (H, W, 3) float64 in [0, 1].

	Images with an alpha channel are blended over background when one is given;
	otherwise alpha is dropped.

	Raises:
		ImageFormatError: If the file is missing, truncated or not 8 bits per channel
	"""
	try:
		with Image.open(path) as img:
			if img.mode not in _EIGHT_BIT_MODES:
				raise ImageFormatError(f"{path}: unsupported bit depth / mode '{img.mode}', expected 8-bit")
			img.load()
			has_alpha = "A" in img.getbands() or "transparency" in img.info
			rgba = img.convert("RGBA")
	except FileNotFoundError:
		raise ImageFormatError(f"{path}: no such image")
	except (UnidentifiedImageError, OSError, SyntaxError) as e:
		raise ImageFormatError(f"{path}: unreadable image ({e})")
	arr = np.asarray(rgba, dtype=np.float64) / 255.0
	rgb, alpha = arr[:, :, :3], arr[:, :, 3:]
	if has_alpha and background is not None:
		return rgb * alpha + np.asarray(background, dtype=np.float64).reshape(1, 1, 3) * (1.0 - alpha)
	return rgb


def to_uint8(image: np.ndarray) -> np.ndarray:
	arr = np.asarray(image, dtype=np.float64)
	if arr.ndim == 2:
		arr = np.repeat(arr[:, :, None], 3, axis=2)
	if arr.ndim != 3 or arr.shape[2] != 3:
		raise ImageFormatError(f"expected an (H, W, 3) or (H, W) image, got {arr.shape}")
	ensure_finite(arr, "image", "sceneio")
	return np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path: str, image: np.ndarray) -> str:
	"""Quantize an image in [0, 1] to 8 bits and write it."""
	os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
	Image.fromarray(to_uint8(image)).save(path)
	return path


def write_pfm(path: str, data: np.ndarray, double: bool = False) -> str:
	"""
	Write an (H, W) or (H, W, 3) map.

	Args:
		double: Store float64 (PD/Pd) instead of the standard float32 layout
	"""
	arr = np.asarray(data)
	if arr.ndim == 3 and arr.shape[2] == 3:
		tag = b"PD" if double else b"PF"
	elif arr.ndim == 2:
		tag = b"Pd" if double else b"Pf"
	else:
		raise ImageFormatError(f"PFM needs an (H, W) or (H, W, 3) array, got {arr.shape}")
	_, dtype = PFM_HEADERS[tag]
	height, width = arr.shape[:2]
	body = np.ascontiguousarray(np.flipud(arr).astype(dtype))
	os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
	with open(path, "wb") as fh:
		fh.write(tag + b"\n" + f"{width} {height}\n".encode("ascii") + b"-1.0\n")
		fh.write(body.tobytes())
	return path


def _read_token_line(payload: bytes, offset: int, path: str) -> tuple[bytes, int]:
	end = payload.find(b"\n", offset)
	if end < 0:
		raise ImageFormatError(f"{path}: truncated PFM header")
	return payload[offset:end].strip(), end + 1


def read_pfm(path: str) -> np.ndarray:
	"""
	Read a PFM map; float32 layouts come back as float32, PD/Pd as float64.

	Raises:
		ImageFormatError: On an unknown tag, malformed header or wrong data length
	"""
	try:
		with open(path, "rb") as fh:
			payload = fh.read()
	except FileNotFoundError:
		raise ImageFormatError(f"{path}: no such file")

	tag, offset = _read_token_line(payload, 0, path)
	if tag not in PFM_HEADERS:
		raise ImageFormatError(f"{path}: unknown PFM tag {tag!r}")
	channels, dtype = PFM_HEADERS[tag]
	dims, offset = _read_token_line(payload, offset, path)
	scale_text, offset = _read_token_line(payload, offset, path)
	try:
		width, height = (int(v) for v in dims.split())
		scale = float(scale_text)
	except ValueError:
		raise ImageFormatError(f"{path}: malformed PFM header")
	if width < 1 or height < 1 or scale == 0:
		raise ImageFormatError(f"{path}: invalid PFM dimensions or scale")
	if scale > 0:
		dtype = dtype.newbyteorder(">")

	expected = width * height * channels * dtype.itemsize
	body = payload[offset:]
	if len(body) != expected:
		raise ImageFormatError(f"{path}: PFM data is {len(body)} bytes, expected {expected} (truncated or padded)")
	arr = np.frombuffer(body, dtype=dtype)
	shape = (height, width, 3) if channels == 3 else (height, width)
	return np.flipud(arr.reshape(shape)).astype(dtype.newbyteorder("="))
