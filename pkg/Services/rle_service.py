"""Run-length codecs for binary masks, compatible with the COCO mask API.

Runs are column-major and always start with a run of zeros. The compressed
string form packs each run into 5-bit groups (continuation bit 0x20, sign
bit 0x10, ASCII offset 48). From the fourth run on, a run is stored as the
difference to the run two positions earlier, matching the reference
implementation byte for byte.
"""
from typing import List, Sequence, Tuple

import numpy as np

from exceptions import RleFormatError
from Models.RleMask import RleMask


def rle_encode(bitmap: np.ndarray) -> RleMask:
    bitmap = np.asarray(bitmap)
    if bitmap.ndim != 2:
        raise ValueError(f"Expected a 2-D bitmap, got shape {bitmap.shape}")
    height, width = bitmap.shape
    flat = bitmap.ravel(order="F").astype(bool)
    if flat.size == 0:
        return RleMask(height=height, width=width, counts=())

    change_points = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    boundaries = np.concatenate(([0], change_points, [flat.size]))
    runs = np.diff(boundaries).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return RleMask(height=height, width=width, counts=tuple(runs))


def rle_decode(mask: RleMask) -> np.ndarray:
    total = sum(mask.counts)
    if total != mask.height * mask.width:
        raise RleFormatError(
            f"RLE counts sum to {total}, expected {mask.height}x{mask.width}={mask.height * mask.width}"
        )
    values = np.arange(len(mask.counts), dtype=np.uint8) % 2
    flat = np.repeat(values, mask.counts)
    return flat.reshape((mask.height, mask.width), order="F")


def rle_compress_string(mask: RleMask) -> str:
    chars: List[str] = []
    counts = mask.counts
    for i, run in enumerate(counts):
        x = run - counts[i - 2] if i > 2 else run
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            chars.append(chr(c + 48))
    return "".join(chars)


def rle_decompress_string(s: str, height: int, width: int) -> RleMask:
    counts: List[int] = []
    position = 0
    length = len(s)
    while position < length:
        x = 0
        k = 0
        more = True
        while more:
            if position >= length:
                raise RleFormatError(f"Truncated RLE string: run {len(counts)} is incomplete")
            c = ord(s[position]) - 48
            if not 0 <= c < 64:
                raise RleFormatError(f"Invalid RLE character {s[position]!r} at position {position}")
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            position += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        if x < 0:
            raise RleFormatError(f"Negative run length {x} at run {len(counts)}")
        counts.append(x)

    total = sum(counts)
    if total != height * width:
        raise RleFormatError(f"RLE counts sum to {total}, expected {height}x{width}={height * width}")
    return RleMask(height=height, width=width, counts=tuple(counts))


def bbox_and_area(mask: RleMask) -> Tuple[Tuple[int, int, int, int], int]:
    """Tight (x, y, w, h) box and popcount, computed from the runs directly."""
    height = mask.height
    counts = np.asarray(mask.counts, dtype=np.int64)
    if counts.size < 2 or height == 0:
        return (0, 0, 0, 0), 0

    ends = np.cumsum(counts)
    starts = ends - counts
    fg_starts = starts[1::2]
    fg_lengths = counts[1::2]
    keep = fg_lengths > 0
    fg_starts, fg_lengths = fg_starts[keep], fg_lengths[keep]
    if fg_starts.size == 0:
        return (0, 0, 0, 0), 0
    fg_lasts = fg_starts + fg_lengths - 1

    area = int(fg_lengths.sum())
    x_min = int(fg_starts.min() // height)
    x_max = int(fg_lasts.max() // height)
    # a run crossing a column boundary covers the full height
    spans_columns = (fg_starts // height) != (fg_lasts // height)
    if spans_columns.any():
        y_min, y_max = 0, height - 1
    else:
        y_min = int((fg_starts % height).min())
        y_max = int((fg_lasts % height).max())
    return (x_min, y_min, x_max - x_min + 1, y_max - y_min + 1), area


def rasterize_polygons(polygons: Sequence[Sequence[float]], height: int, width: int) -> np.ndarray:
    """Even-odd fill of flat [x0, y0, x1, y1, ...] polygons, sampled at pixel centers.

    Each polygon is filled on its own and the results are unioned.
    """
    result = np.zeros((height, width), dtype=bool)
    centers_x = np.arange(width, dtype=np.float64) + 0.5
    centers_y = np.arange(height, dtype=np.float64) + 0.5
    for polygon in polygons:
        coords = np.asarray(polygon, dtype=np.float64)
        if coords.size < 6 or coords.size % 2:
            continue
        xs, ys = coords[0::2], coords[1::2]
        inside = np.zeros((height, width), dtype=bool)
        for x0, y0, x1, y1 in zip(xs, ys, np.roll(xs, -1), np.roll(ys, -1)):
            if y0 == y1:
                continue
            rows = np.flatnonzero((np.minimum(y0, y1) <= centers_y) & (centers_y < np.maximum(y0, y1)))
            if rows.size == 0:
                continue
            crossings = x0 + (centers_y[rows] - y0) * (x1 - x0) / (y1 - y0)
            inside[rows] ^= centers_x[None, :] < crossings[:, None]
        result |= inside
    return result
