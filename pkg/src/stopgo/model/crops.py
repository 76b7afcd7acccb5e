"""Image patch geometry for the visual encoders, plus training augmentation.

Images are ``[C, H, W]`` float arrays in ``[0, 1]``. Pixel ``c`` covers the
continuous interval ``[c, c + 1)``; boxes use the same continuous coordinates.
All resampling is bilinear and reads zeros outside the image.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..schema import BBox

CROP_SIZE = 224
FULL_FRAME = (481, 1281)


def _axis(length: int, start: float, extent: float, out: int, keep=None) -> np.ndarray:
    u = start + (np.arange(out) + 0.5) * (extent / out) - 0.5
    lo = np.floor(u).astype(int)
    frac = u - lo
    w = np.zeros((out, length))
    rows = np.arange(out)
    for tap, weight in ((lo, 1.0 - frac), (lo + 1, frac)):
        ok = (tap >= 0) & (tap < length)
        np.add.at(w, (rows[ok], tap[ok]), weight[ok])
    if keep is not None:
        lo_k, hi_k = keep
        centers = np.arange(length) + 0.5
        w *= ((centers >= lo_k) & (centers <= hi_k))[None, :]
    return w


def resample(image: np.ndarray, x0: float, y0: float, width: float, height: float,
             out_hw: tuple[int, int], keep: BBox | None = None) -> np.ndarray:
    """Bilinear resample of the rectangle at ``(x0, y0)`` to ``out_hw``.

    With ``keep``, pixels outside that box read as zero as well.
    """
    _, H, W = image.shape
    kx = ky = None
    if keep is not None:
        x1, y1, x2, y2 = keep.corners()
        kx, ky = (x1, x2), (y1, y2)
    wy = _axis(H, y0, height, out_hw[0], ky)
    wx = _axis(W, x0, width, out_hw[1], kx)
    return wy @ image @ wx.T


def _check_box(box: BBox):
    if not box.is_valid():
        raise ValueError(f"degenerate box {box.as_list()}")


def box_square(box: BBox) -> tuple[float, float, float]:
    """``(x0, y0, side)`` of the square of side ``max(w, h)`` centered on ``box``."""
    _check_box(box)
    side = max(box.width, box.height)
    return box.x_center - side / 2.0, box.y_center - side / 2.0, side


def context_square(box: BBox, mode: str = "height") -> tuple[float, float, float]:
    """Enlarged square around ``box``: box doubled, then width matched to height.

    ``mode="height"`` gives side ``2h`` (width shrinks for wide boxes);
    ``mode="max"`` gives side ``2 * max(w, h)``.
    """
    _check_box(box)
    if mode == "height":
        side = 2.0 * box.height
    elif mode == "max":
        side = 2.0 * max(box.width, box.height)
    else:
        raise ValueError(f"unknown context square mode {mode!r}")
    return box.x_center - side / 2.0, box.y_center - side / 2.0, side


def crop_box(image: np.ndarray, box: BBox, size: int = CROP_SIZE) -> np.ndarray:
    """Box contents centered in a zero-padded square, rescaled to ``size``."""
    x0, y0, side = box_square(box)
    return resample(image, x0, y0, side, side, (size, size), keep=box)


def crop_context(image: np.ndarray, box: BBox, size: int = CROP_SIZE, mode: str = "height") -> np.ndarray:
    x0, y0, side = context_square(box, mode)
    return resample(image, x0, y0, side, side, (size, size))


def resize_frame(image: np.ndarray, boxes: list[BBox], out_hw=FULL_FRAME):
    """Resize a whole frame and its boxes to ``out_hw``."""
    _, H, W = image.shape
    sy, sx = out_hw[0] / H, out_hw[1] / W
    out = resample(image, 0.0, 0.0, W, H, out_hw)
    boxes = [BBox(b.x_center * sx, b.y_center * sy, b.width * sx, b.height * sy) for b in boxes]
    return out, boxes


@dataclass
class Augmentation:
    flip_prob: float = 0.5
    crop_top_third: bool = True
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    grayscale_prob: float = 0.1

    def __call__(self, image: np.ndarray, boxes: list[BBox], rng: np.random.Generator):
        """Return an augmented copy of ``image`` with matching boxes."""
        _, H, W = image.shape
        if rng.random() < self.flip_prob:
            image = image[:, :, ::-1]
            boxes = [BBox(W - b.x_center, b.y_center, b.width, b.height) for b in boxes]
        if self.crop_top_third:
            cut = H // 3
            image = image[:, cut:, :]
            boxes = [b.shifted(0.0, -cut) for b in boxes]
        image = np.array(image, dtype=np.float64)
        image *= rng.uniform(1 - self.brightness, 1 + self.brightness)
        mean = image.mean()
        image = (image - mean) * rng.uniform(1 - self.contrast, 1 + self.contrast) + mean
        if image.shape[0] == 3:
            gray = _gray(image)
            s = rng.uniform(1 - self.saturation, 1 + self.saturation)
            image = gray + (image - gray) * s
            if rng.random() < self.grayscale_prob:
                image = np.broadcast_to(_gray(image), image.shape).copy()
        return np.clip(image, 0.0, 1.0), boxes


def _gray(image: np.ndarray) -> np.ndarray:
    return (0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2])[None]
