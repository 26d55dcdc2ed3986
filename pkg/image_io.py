"""
Image I/O
PFM read/write for lossless HDR interchange and 8-bit PNG previews via OpenCV
"""

import os

import cv2
import numpy as np

from diagnostics import false_color


class ImageFormatError(ValueError):
    """Malformed or truncated image file"""


def write_pfm(path: str, image: np.ndarray):
    """Little-endian RGB PFM, rows bottom-to-top"""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {image.shape}")
    height, width = image.shape[:2]
    header = f"PF\n{width} {height}\n-1.0\n".encode('ascii')
    data = np.ascontiguousarray(np.flipud(image).astype('<f4'))
    with open(path, 'wb') as f:
        f.write(header)
        f.write(data.tobytes())


def _read_token(data: bytes, offset: int):
    """Next whitespace-delimited header token and the offset just past its delimiter"""
    length = len(data)
    while offset < length and data[offset:offset + 1].isspace():
        offset += 1
    start = offset
    while offset < length and not data[offset:offset + 1].isspace():
        offset += 1
    if start == offset:
        raise ImageFormatError("truncated PFM header")
    return data[start:offset], offset + 1


def read_pfm(path: str) -> np.ndarray:
    """H x W x 3 float32 image; greyscale files are replicated to three channels"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"image not found: {path}")
    with open(path, 'rb') as f:
        data = f.read()

    magic, offset = _read_token(data, 0)
    if magic not in (b'PF', b'Pf'):
        raise ImageFormatError(f"{path}: not a PFM file (magic {magic!r})")
    channels = 3 if magic == b'PF' else 1
    try:
        width_token, offset = _read_token(data, offset)
        height_token, offset = _read_token(data, offset)
        scale_token, offset = _read_token(data, offset)
        width, height, scale = int(width_token), int(height_token), float(scale_token)
    except ValueError:
        raise ImageFormatError(f"{path}: malformed PFM header") from None
    if width <= 0 or height <= 0 or scale == 0.0:
        raise ImageFormatError(f"{path}: invalid PFM dimensions or scale")

    dtype = '<f4' if scale < 0 else '>f4'
    count = width * height * channels
    payload = data[offset:offset + 4 * count]
    if len(payload) != 4 * count:
        raise ImageFormatError(f"{path}: truncated PFM data ({len(payload)} of {4 * count} bytes)")
    pixels = np.frombuffer(payload, dtype=dtype).astype(np.float32).reshape(height, width, channels)
    pixels = np.flipud(pixels)
    if channels == 1:
        pixels = np.repeat(pixels, 3, axis=2)
    return np.ascontiguousarray(pixels)


def tonemap(image: np.ndarray, exposure: float = 0.0, gamma: float = 2.2) -> np.ndarray:
    """8-bit RGB after 2^exposure scaling, gamma and clamping"""
    scaled = np.clip(np.asarray(image, dtype=np.float64) * (2.0 ** exposure), 0.0, 1.0)
    return np.round(255.0 * scaled ** (1.0 / gamma)).astype(np.uint8)


def write_png_tonemapped(path: str, image: np.ndarray, exposure: float = 0.0, gamma: float = 2.2):
    rgb = tonemap(image, exposure, gamma)
    if not cv2.imwrite(path, cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR)):
        raise OSError(f"could not write {path}")


def write_error_map_png(path: str, error: np.ndarray, vmax: float = 1.0):
    if not cv2.imwrite(path, false_color(error, vmax)):
        raise OSError(f"could not write {path}")


def write_error_map_pfm(path: str, error: np.ndarray):
    """Raw per-pixel error, replicated into all three channels"""
    error = np.asarray(error, dtype=np.float32)
    if error.ndim != 2:
        raise ValueError(f"expected an H x W error map, got shape {error.shape}")
    write_pfm(path, np.repeat(error[..., None], 3, axis=2))
