"""Binary 8-bit PGM (P5) masks and frames.

Image rows run top to bottom, so row 0 maps to the largest y.  On the grid
an image pixel (row, col) lands at (x = col, y = -row).
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .units import SimulationGrid


class PGMError(ValueError):
    pass


_TOKEN = re.compile(rb"(#[^\n]*\n)|(\S+)")


def read_pgm(path) -> np.ndarray:
    """Return the raw 8-bit image as a (height, width) uint8 array."""
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        m = _TOKEN.search(data, pos)
        if m is None:
            raise PGMError(f"{path}: truncated PGM header")
        pos = m.end()
        if m.group(2) is not None:
            fields.append(m.group(2))
    if fields[0] != b"P5":
        raise PGMError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError as exc:
        raise PGMError(f"{path}: malformed PGM header") from exc
    if maxval != 255:
        raise PGMError(f"{path}: only 8-bit PGM (maxval 255) is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos) \
        if len(data) - pos >= width * height else None
    if pixels is None:
        raise PGMError(f"{path}: pixel data shorter than {width}x{height}")
    return pixels.reshape(height, width).copy()


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + image.tobytes())


def image_to_grid(image: np.ndarray) -> np.ndarray:
    """(height, width) image -> (nx, ny) array with y increasing upward."""
    return np.asarray(image)[::-1, :].T


def grid_to_image(frame: np.ndarray) -> np.ndarray:
    return np.asarray(frame).T[::-1, :]


def _axis_weights(nodes, pts):
    """Lower node index and fractional offset for each point (0 outside the nodes)."""
    i = np.clip(np.searchsorted(nodes, pts, side="right") - 1, 0, len(nodes) - 2)
    w = (pts - nodes[i]) / (nodes[i + 1] - nodes[i])
    inside = (pts >= nodes[0]) & (pts <= nodes[-1])
    return i, np.clip(w, 0.0, 1.0), inside


def _bilinear(img, xs, ys, px, py):
    """Separable linear interpolation written as a + w (b - a), exact for constant images."""
    i, wx, in_x = _axis_weights(xs, px)
    j, wy, in_y = _axis_weights(ys, py)
    rows = img[i] + wx[:, None] * (img[i + 1] - img[i])  # (len(px), len(ys))
    out = rows[:, j] + wy[None, :] * (rows[:, j + 1] - rows[:, j])
    return out * np.outer(in_x, in_y)


def load_mask(path, grid: SimulationGrid, extent_mm=None, magnification: float = 1.0) -> np.ndarray:
    """Load a P5 mask onto ``grid`` as an intensity mask in [0, 1].

    Without ``extent_mm`` the image is stretched over the whole grid.  With
    ``extent_mm=(width, height)`` it is treated as a physical object of
    that size, imaged with ``magnification`` and centred on the axis;
    the grid outside the image is dark.  Resampling is bilinear.
    """
    img = image_to_grid(read_pgm(path)).astype(float) / 255.0
    w_px, h_px = img.shape
    if extent_mm is None:
        width, height = grid.width, grid.height
    else:
        width, height = extent_mm[0] * magnification, extent_mm[1] * magnification
    xs = (np.arange(w_px) + 0.5) / w_px * width - width / 2.0
    ys = (np.arange(h_px) + 0.5) / h_px * height - height / 2.0
    # Pad with the edge value for stretched images and with zeros for placed ones.
    pad_mode = "edge" if extent_mm is None else "constant"
    img = np.pad(img, 1, mode=pad_mode)
    xs = np.concatenate([[-width / 2.0], xs, [width / 2.0]])
    ys = np.concatenate([[-height / 2.0], ys, [height / 2.0]])
    mask = _bilinear(img, xs, ys, grid.x, grid.y)
    return np.clip(mask, 0.0, 1.0)


def save_frame(frame: np.ndarray, path, scale: float | None = None) -> None:
    """Write a (nx, ny) frame as 8-bit PGM; values are divided by ``scale`` then clamped to [0, 1]."""
    frame = np.asarray(frame, dtype=float)
    if scale is not None and scale > 0:
        frame = frame / scale
    img = np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    write_pgm(path, grid_to_image(img))
