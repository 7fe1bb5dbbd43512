"""PNG interchange for float images and plain-text dataset manifests.

Images are ``float32`` arrays of shape ``(H, W, C)`` with ``C`` in {1, 3} and
values in ``[0, 1]``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from ..numerics.tensor import ContractError


class ImageFormatError(ValueError):
    pass


def as_image(arr) -> np.ndarray:
    """Validate and normalize an array to the ``(H, W, C)`` float32 layout."""
    img = np.asarray(arr, dtype=np.float32)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ContractError(f"image must be HxWx1 or HxWx3, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ContractError(f"image must be at least 1x1, got {img.shape[:2]}")
    return img


def to_bytes(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img, path) -> None:
    img = as_image(img)
    q = to_bytes(img)
    mode_arr = q[:, :, 0] if q.shape[2] == 1 else q
    PILImage.fromarray(mode_arr, mode="L" if q.shape[2] == 1 else "RGB").save(
        Path(path), format="PNG"
    )


def load_image(path) -> np.ndarray:
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            if im.format != "PNG":
                raise ImageFormatError(f"{path}: unsupported image format {im.format!r} (PNG only)")
            if im.mode not in ("L", "RGB"):
                im = im.convert("L" if im.mode in ("1", "I", "I;16", "F", "LA") else "RGB")
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: unrecognized image format") from exc
    return as_image(arr)


def write_manifest(paths, manifest_path) -> None:
    Path(manifest_path).write_text("".join(f"{p}\n" for p in paths))


def read_manifest(manifest_path) -> list[Path]:
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    out = []
    for line in manifest_path.read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            p = Path(line)
            out.append(p if p.is_absolute() else root / p)
    return out
