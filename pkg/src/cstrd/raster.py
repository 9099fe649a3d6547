"""Image loading and the preprocessing chain: mask -> resize -> gray -> equalize."""
from __future__ import annotations

import os
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import DecodeFailure, DimensionMismatch, InputError, IOFailure, UnsupportedFormat

DEFAULT_SIZE = 1500
BACKGROUND_VALUE = 255

_SUPPORTED = {".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp"}


@dataclass
class PreprocessResult:
    image: np.ndarray          # uint8, (target_h, target_w)
    pith: tuple[float, float]  # (cx, cy) in the resized frame
    scale: tuple[float, float]  # (sx, sy)

    def to_original(self, xy: np.ndarray) -> np.ndarray:
        """Map ``(..., 2)`` resized-frame points back to the input frame."""
        xy = np.asarray(xy, dtype=float)
        return xy / np.array(self.scale)


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Read an image file as an RGB uint8 array of shape (H, W, 3)."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext not in _SUPPORTED:
        raise UnsupportedFormat(f"unsupported image format {ext!r}: {path}")
    if not os.path.exists(path):
        raise IOFailure(f"image not found: {path}")
    img = cv2.imread(path, cv2.IMREAD_COLOR)
    if img is None:
        raise DecodeFailure(f"cannot decode image: {path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


def load_mask(path: str | os.PathLike) -> np.ndarray:
    """Single-channel mask file; zero pixels are background."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise IOFailure(f"mask not found: {path}")
    m = cv2.imread(path, cv2.IMREAD_GRAYSCALE)
    if m is None:
        raise DecodeFailure(f"cannot decode mask: {path}")
    return m > 0


def apply_mask(image: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Paint background (mask == False) pixels white; foreground untouched."""
    if mask is None:
        return image
    mask = np.asarray(mask).astype(bool)
    if mask.shape != image.shape[:2]:
        raise DimensionMismatch(f"mask {mask.shape} does not match image {image.shape[:2]}")
    out = image.copy()
    out[~mask] = BACKGROUND_VALUE
    return out


def to_gray(image: np.ndarray) -> np.ndarray:
    # luma 0.299/0.587/0.114
    if image.ndim == 2:
        return image.astype(np.uint8, copy=False)
    return cv2.cvtColor(image.astype(np.uint8, copy=False), cv2.COLOR_RGB2GRAY)


def resize(image: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resample to ``size = (width, height)``.

    A pure scaling warp is used so that a point ``(x, y)`` of the input maps
    exactly to ``(x * sx, y * sy)``; this is the same map applied to the pith
    and to ground-truth polygons.
    """
    h, w = image.shape[:2]
    tw, th = size
    if (tw, th) == (w, h):
        return image.copy()
    sx, sy = tw / w, th / h
    m = np.array([[sx, 0.0, 0.0], [0.0, sy, 0.0]])
    return cv2.warpAffine(image, m, (tw, th), flags=cv2.INTER_LINEAR,
                          borderMode=cv2.BORDER_REPLICATE)


def equalize(gray: np.ndarray) -> np.ndarray:
    """Global histogram equalization; a constant image is returned unchanged."""
    gray = np.asarray(gray, dtype=np.uint8)
    if gray.min() == gray.max():
        return gray.copy()
    return cv2.equalizeHist(gray)


def preprocess(image: np.ndarray, pith, target_size: int | tuple[int, int] = DEFAULT_SIZE,
               mask: np.ndarray | None = None) -> PreprocessResult:
    h, w = image.shape[:2]
    cx, cy = float(pith[0]), float(pith[1])
    if not (0 <= cx < w and 0 <= cy < h):
        raise InputError(f"pith ({cx}, {cy}) outside image of size {w}x{h}")
    if isinstance(target_size, int):
        tw = th = target_size
    else:
        tw, th = target_size
    img = apply_mask(image, mask)
    img = resize(img, (tw, th))
    gray = equalize(to_gray(img))
    sx, sy = tw / w, th / h
    return PreprocessResult(image=gray, pith=(cx * sx, cy * sy), scale=(sx, sy))
