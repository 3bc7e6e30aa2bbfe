"""Procedural instance pools and annotated datasets with known ground truth.

Scores produced here are hash-derived pseudo-scores in the range CLIP
similarities usually take; they are not model output.
"""
from pathlib import Path
from typing import List, Optional, Tuple, Union
import hashlib
import logging
import math

import cv2
import numpy as np

from Models.Annotation import Annotation
from Models.Category import Category, FrequencyBand
from Models.Dataset import Dataset
from Models.ImageInfo import ImageInfo
from Models.InstanceRecord import CandidateMask, InstanceRecord, InstanceSource
from Models.PoolManifest import PoolManifest
from Models.SynthSpec import ShapeFamily, SynthSpec
from Services.dataset_service import write_dataset
from Services.image_service import save_png
from Services.pool_service import write_manifest
from Services.rle_service import rasterize_polygons, rle_encode

logger = logging.getLogger(__name__)

SEGMENTERS = ("SelfReformer", "CLIPseg", "UFO", "U2Net")
SCORE_LOW, SCORE_HIGH = 0.15, 0.35
BAND_CYCLE = (FrequencyBand.RARE, FrequencyBand.COMMON, FrequencyBand.FREQUENT)
PLACEMENT_ATTEMPTS = 100
DECOY_MARGIN = 1e-3


def pseudo_clip_score(seed: int, record_id: str, segmenter: str) -> float:
    digest = hashlib.sha256(f"{seed}:{record_id}:{segmenter}".encode("utf-8")).digest()
    unit = int.from_bytes(digest[:8], "big") / 2 ** 64
    return SCORE_LOW + (SCORE_HIGH - SCORE_LOW) * unit


def synth_categories(spec: SynthSpec) -> List[Category]:
    return [
        Category(id=c, name=f"shape_{c}", frequency_band=BAND_CYCLE[(c - 1) % len(BAND_CYCLE)])
        for c in range(1, spec.category_count + 1)
    ]


def _rectangle(rng: np.random.Generator, width: int, height: int, w: int, h: int) -> np.ndarray:
    w, h = min(max(1, w), width), min(max(1, h), height)
    x = int(rng.integers(0, width - w + 1))
    y = int(rng.integers(0, height - h + 1))
    return rasterize_polygons([[x, y, x + w, y, x + w, y + h, x, y + h]], height, width)


def _ellipse(rng: np.random.Generator, width: int, height: int, fraction: float) -> np.ndarray:
    aspect = float(rng.uniform(0.7, 1.4))
    area = fraction * width * height
    a = min(math.sqrt(area * aspect / math.pi), width / 2.0)
    b = min(area / (math.pi * a), height / 2.0)
    cx = float(rng.uniform(a, width - a)) if width > 2 * a else width / 2.0
    cy = float(rng.uniform(b, height - b)) if height > 2 * b else height / 2.0
    ys, xs = np.mgrid[0:height, 0:width] + 0.5
    return ((xs - cx) / a) ** 2 + ((ys - cy) / b) ** 2 <= 1.0


def _polygon(rng: np.random.Generator, width: int, height: int, fraction: float) -> np.ndarray:
    vertices = int(rng.integers(5, 9))
    angles = np.sort(rng.uniform(0, 2 * math.pi, vertices))
    radii = rng.uniform(0.7, 1.0, vertices)
    # area of the star polygon for unit radius, used to hit the target fraction
    unit_area = 0.5 * abs(sum(
        radii[i] * radii[(i + 1) % vertices] * math.sin(angles[(i + 1) % vertices] - angles[i])
        for i in range(vertices)
    ))
    radius = math.sqrt(fraction * width * height / max(unit_area, 1e-6))
    radius = min(radius, width / 2.0, height / 2.0)
    cx = float(rng.uniform(radius, width - radius)) if width > 2 * radius else width / 2.0
    cy = float(rng.uniform(radius, height - radius)) if height > 2 * radius else height / 2.0
    points = []
    for angle, r in zip(angles, radii):
        points.extend([cx + radius * r * math.cos(angle), cy + radius * r * math.sin(angle)])
    return rasterize_polygons([points], height, width)


def shape_mask(family: ShapeFamily, rng: np.random.Generator, width: int, height: int,
               scale: float) -> np.ndarray:
    """Binary mask of one shape whose relative scale is about `scale`.

    Rectangles are pixel-exact: round(scale*W) x round(scale*H).
    """
    if family == ShapeFamily.RECTANGLE:
        return _rectangle(rng, width, height, int(round(scale * width)), int(round(scale * height)))
    if family == ShapeFamily.ELLIPSE:
        return _ellipse(rng, width, height, scale ** 2)
    return _polygon(rng, width, height, scale ** 2)


def _shifted(mask: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(mask)
    h, w = mask.shape
    out[max(0, dy):h + min(0, dy), max(0, dx):w + min(0, dx)] = \
        mask[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
    return out


def decoy_masks(truth: np.ndarray) -> List[np.ndarray]:
    """Dilated, eroded, shifted and full-frame perturbations of the ground truth."""
    kernel = np.ones((5, 5), dtype=np.uint8)
    truth_u8 = truth.astype(np.uint8)
    return [
        cv2.dilate(truth_u8, kernel).astype(bool),
        cv2.erode(truth_u8, kernel).astype(bool),
        _shifted(truth, 3, 3),
        np.ones_like(truth, dtype=bool),
    ]


def record_id_for(category_id: int, index: int) -> str:
    return f"syn-c{category_id:03d}-{index:04d}"


def render_instance(spec: SynthSpec, category_id: int, index: int) -> Tuple[np.ndarray, np.ndarray]:
    """Image and exact ground-truth mask of one pool instance."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, category_id, index]))
    width, height = spec.canvas_width, spec.canvas_height
    scale = float(rng.uniform(math.sqrt(0.15), math.sqrt(0.5)))
    truth = shape_mask(spec.shape_family, rng, width, height, scale)
    image = np.empty((height, width, 3), dtype=np.uint8)
    image[:] = spec.background_color
    image[truth] = spec.palette[(category_id - 1) % len(spec.palette)]
    return image, truth


def build_candidates(spec: SynthSpec, record_id: str, truth: np.ndarray) -> Tuple[CandidateMask, ...]:
    """Ground truth goes to the segmenter with the highest pseudo-score; decoys score strictly lower.

    Each other segmenter gets the decoy at its own position, so which three
    decoy kinds a record carries depends on where the ground truth lands.
    All scores stay within [SCORE_LOW, SCORE_HIGH].
    """
    scores = [pseudo_clip_score(spec.seed, record_id, name) for name in SEGMENTERS]
    best = int(np.argmax(scores))
    best_score = max(scores[best], SCORE_LOW + DECOY_MARGIN)
    decoys = decoy_masks(truth)
    candidates = []
    for slot, name in enumerate(SEGMENTERS):
        if slot == best:
            mask, score = truth, best_score
        else:
            mask = decoys[slot]
            score = max(SCORE_LOW, min(scores[slot], best_score - DECOY_MARGIN))
        candidates.append(CandidateMask(segmenter=name, mask=rle_encode(mask), clip_score=round(score, 6)))
    return tuple(candidates)


def generate_pool(spec: SynthSpec, out_dir: Union[str, Path]) -> PoolManifest:
    """Write pool images and manifest.jsonl under out_dir; sources alternate generated/retrieved."""
    out_dir = Path(out_dir)
    records = []
    for category_id in range(1, spec.category_count + 1):
        for index in range(spec.per_category_count):
            record_id = record_id_for(category_id, index)
            image, truth = render_instance(spec, category_id, index)
            image_path = f"images/{record_id}.png"
            save_png(image, out_dir / image_path)
            records.append(InstanceRecord(
                id=record_id,
                category_id=category_id,
                source=InstanceSource.GENERATED if index % 2 == 0 else InstanceSource.RETRIEVED,
                image_path=image_path,
                width=spec.canvas_width,
                height=spec.canvas_height,
                candidates=build_candidates(spec, record_id, truth),
            ))
    pool = PoolManifest(records=tuple(records), categories=tuple(synth_categories(spec)))
    write_manifest(pool, out_dir / "manifest.jsonl")
    logger.info(f"Generated synthetic pool of {len(records)} records in {out_dir}")
    return pool


def place_disjoint(family: ShapeFamily, rng: np.random.Generator, width: int, height: int, scale: float,
                   occupied: np.ndarray, attempts: int = PLACEMENT_ATTEMPTS) -> Optional[np.ndarray]:
    """Rejection-sample a shape that shares no pixel with `occupied`; None when none fits."""
    for _ in range(attempts):
        mask = shape_mask(family, rng, width, height, scale)
        if mask.any() and not (mask & occupied).any():
            return mask
    return None


def generate_annotated_dataset(spec: SynthSpec, out_dir: Union[str, Path]) -> Dataset:
    """Write background images and annotations.json with shapes at the recipe's scales.

    Object o goes to category o % C + 1 with scale scales[(o // C) % len(scales)],
    so every category sees the scales in turn. Shapes within an image never
    overlap, so each annotation's mask is exactly the pixels its object shows.
    """
    out_dir = Path(out_dir)
    width, height = spec.canvas_width, spec.canvas_height
    images, annotations = [], []
    object_index = 0
    for image_id in range(1, spec.image_count + 1):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0, image_id]))
        canvas = np.empty((height, width, 3), dtype=np.uint8)
        canvas[:] = spec.background_color
        occupied = np.zeros((height, width), dtype=bool)
        for _ in range(spec.objects_per_image):
            category_id = object_index % spec.category_count + 1
            scale = spec.scales[(object_index // spec.category_count) % len(spec.scales)]
            object_index += 1
            mask = place_disjoint(spec.shape_family, rng, width, height, scale, occupied)
            if mask is None:
                logger.warning(f"No free spot for a scale {scale} object on image {image_id}, skipping it")
                continue
            occupied |= mask
            canvas[mask] = spec.palette[(category_id - 1) % len(spec.palette)]
            annotations.append(Annotation.from_mask(len(annotations) + 1, image_id, category_id, rle_encode(mask)))
        file_name = f"images/{image_id:06d}.png"
        save_png(canvas, out_dir / file_name)
        images.append(ImageInfo(id=image_id, width=width, height=height, file_name=file_name))

    dataset = Dataset(images=tuple(images), annotations=tuple(annotations), categories=tuple(synth_categories(spec)))
    write_dataset(dataset, out_dir / "annotations.json")
    return dataset
