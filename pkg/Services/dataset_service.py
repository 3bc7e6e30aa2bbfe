"""COCO/LVIS dataset parsing, serialization and validation."""
from pathlib import Path
from typing import Any, Dict, List, Union
import json
import logging

from pydantic import ValidationError

from exceptions import DatasetParseError, ReferentialIntegrityError, RleFormatError
from Models.Annotation import Annotation, Provenance
from Models.Category import Category, FrequencyBand, LVIS_FREQUENCY_CODES
from Models.Dataset import Dataset
from Models.ImageInfo import ImageInfo
from Models.RleMask import RleMask
from Services.rle_service import (
    bbox_and_area,
    rasterize_polygons,
    rle_compress_string,
    rle_decompress_string,
    rle_encode,
)

logger = logging.getLogger(__name__)


def _load_json(json_bytes: bytes) -> Any:
    try:
        text = json_bytes.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DatasetParseError(f"Dataset is not valid UTF-8: {e.reason}", e.start) from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        byte_offset = len(text[:e.pos].encode("utf-8"))
        raise DatasetParseError(f"Malformed dataset JSON: {e.msg}", byte_offset) from e


def _parse_category(raw: Dict[str, Any]) -> Category:
    band = LVIS_FREQUENCY_CODES.get(raw.get("frequency"), FrequencyBand.UNKNOWN)
    return Category(id=raw["id"], name=raw["name"], frequency_band=band)


def _parse_mask(segmentation: Any, image: ImageInfo) -> RleMask:
    height, width = image.height, image.width
    if isinstance(segmentation, list):
        return rle_encode(rasterize_polygons(segmentation, height, width))
    if isinstance(segmentation, dict):
        size = tuple(segmentation.get("size", ()))
        if size != (height, width):
            raise RleFormatError(f"RLE size {list(size)} does not match image {image.id} size {[height, width]}")
        counts = segmentation.get("counts")
        if isinstance(counts, str):
            return rle_decompress_string(counts, height, width)
        if isinstance(counts, list):
            mask = RleMask(height=height, width=width, counts=tuple(counts))
            problems = mask.problems()
            if problems:
                raise RleFormatError("; ".join(problems))
            return mask
    raise RleFormatError(f"Unsupported segmentation of type {type(segmentation).__name__}")


def parse_dataset(json_bytes: bytes) -> Dataset:
    data = _load_json(json_bytes)
    if not isinstance(data, dict):
        raise DatasetParseError("Dataset JSON must be an object")

    try:
        images = [ImageInfo(**{k: raw[k] for k in ("id", "width", "height", "file_name")})
                  for raw in data.get("images", [])]
        categories = [_parse_category(raw) for raw in data.get("categories", [])]
    except (KeyError, TypeError, ValidationError) as e:
        raise DatasetParseError(f"Invalid image or category entry: {e}") from e

    image_index = {image.id: image for image in images}
    category_ids = {category.id for category in categories}
    if len(image_index) != len(images):
        raise ReferentialIntegrityError("Duplicate image ids in dataset", [])
    if len(category_ids) != len(categories):
        raise ReferentialIntegrityError("Duplicate category ids in dataset", [])

    raw_annotations = data.get("annotations", [])
    if not isinstance(raw_annotations, list):
        raise DatasetParseError("Dataset annotations must be a list")
    for position, raw in enumerate(raw_annotations):
        if not isinstance(raw, dict):
            raise DatasetParseError(f"Annotation entry {position} is a {type(raw).__name__}, not an object")

    dangling, seen, duplicates = [], set(), []
    for raw in raw_annotations:
        annotation_id = raw.get("id")
        try:
            if annotation_id in seen:
                duplicates.append(annotation_id)
            seen.add(annotation_id)
            if raw.get("image_id") not in image_index or raw.get("category_id") not in category_ids:
                dangling.append(annotation_id)
        except TypeError as e:
            raise DatasetParseError(f"Invalid id field in annotation {annotation_id!r}: {e}") from e
    if dangling:
        raise ReferentialIntegrityError(
            f"{len(dangling)} annotations reference unknown images or categories", dangling
        )
    if duplicates:
        raise ReferentialIntegrityError("Duplicate annotation ids in dataset", duplicates)

    annotations = []
    for raw in raw_annotations:
        image = image_index[raw["image_id"]]
        try:
            mask = _parse_mask(raw.get("segmentation"), image)
        except RleFormatError as e:
            raise RleFormatError(f"Annotation {raw.get('id')}: {e.message}", {"annotation_id": raw.get("id")}) from e
        bbox, area = bbox_and_area(mask)
        if area == 0:
            logger.warning(f"Dropping annotation {raw.get('id')} with an empty mask")
            continue
        try:
            annotations.append(Annotation(
                id=raw.get("id"),
                image_id=raw["image_id"],
                category_id=raw["category_id"],
                mask=mask,
                bbox=bbox,
                area=area,
                provenance=Provenance(raw.get("provenance", Provenance.ORIGINAL.value)),
            ))
        except (ValueError, ValidationError) as e:
            raise DatasetParseError(f"Invalid annotation {raw.get('id')}: {e}") from e

    return Dataset(images=tuple(images), annotations=tuple(annotations), categories=tuple(categories))


def audit_annotations(json_bytes: bytes) -> List[str]:
    """Problems in the stored annotation fields that parsing would repair or hide.

    Checks each entry's `bbox` and `area` against its decoded mask, empty
    masks, and zero-length runs after the first position. Entries whose image
    is unknown or whose segmentation cannot be decoded are left to
    `parse_dataset`.
    """
    data = _load_json(json_bytes)
    if not isinstance(data, dict) or not isinstance(data.get("annotations", []), list):
        return []
    image_index = {}
    for raw in data.get("images", []):
        try:
            image = ImageInfo(**{k: raw[k] for k in ("id", "width", "height", "file_name")})
        except (KeyError, TypeError, ValidationError):
            continue
        image_index[image.id] = image

    issues: List[str] = []
    for raw in data.get("annotations", []):
        if not isinstance(raw, dict) or raw.get("image_id") not in image_index:
            continue
        prefix = f"annotation {raw.get('id')}"
        try:
            mask = _parse_mask(raw.get("segmentation"), image_index[raw["image_id"]])
        except RleFormatError:
            continue
        issues.extend(f"{prefix}: {p}" for p in mask.problems())
        bbox, area = bbox_and_area(mask)
        if area == 0:
            issues.append(f"{prefix}: empty mask")
        stored_area, stored_bbox = raw.get("area"), raw.get("bbox")
        if stored_area != area:
            issues.append(f"{prefix}: area {stored_area} != mask popcount {area}")
        if not isinstance(stored_bbox, list) or stored_bbox != list(bbox):
            issues.append(f"{prefix}: bbox {stored_bbox} != mask bound {list(bbox)}")
    return issues


def _annotation_to_dict(annotation: Annotation) -> Dict[str, Any]:
    return {
        "id": annotation.id,
        "image_id": annotation.image_id,
        "category_id": annotation.category_id,
        "segmentation": {
            "size": [annotation.mask.height, annotation.mask.width],
            "counts": rle_compress_string(annotation.mask),
        },
        "area": annotation.area,
        "bbox": list(annotation.bbox),
        "iscrowd": 0,
        "provenance": annotation.provenance.value,
    }


def _category_to_dict(category: Category) -> Dict[str, Any]:
    entry = {"id": category.id, "name": category.name}
    if category.frequency_code is not None:
        entry["frequency"] = category.frequency_code
    return entry


def serialize_dataset(dataset: Dataset) -> bytes:
    """Compact COCO JSON with a pinned key order; equal datasets give equal bytes."""
    document = {
        "images": [
            {"id": i.id, "width": i.width, "height": i.height, "file_name": i.file_name}
            for i in dataset.images
        ],
        "annotations": [_annotation_to_dict(a) for a in dataset.annotations],
        "categories": [_category_to_dict(c) for c in dataset.categories],
    }
    return json.dumps(document, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def load_dataset(path: Union[str, Path]) -> Dataset:
    dataset = parse_dataset(Path(path).read_bytes())
    logger.info(f"Loaded {len(dataset.images)} images, {len(dataset.annotations)} annotations from {path}")
    return dataset


def write_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(serialize_dataset(dataset))
    logger.info(f"Wrote {len(dataset.images)} images, {len(dataset.annotations)} annotations to {path}")


def validate_dataset(dataset: Dataset) -> List[str]:
    """Every invariant violation found in the dataset, empty when clean."""
    issues: List[str] = []
    image_index = {}
    for image in dataset.images:
        if image.id in image_index:
            issues.append(f"image {image.id}: duplicate id")
        image_index[image.id] = image
    category_ids = set()
    for category in dataset.categories:
        if category.id in category_ids:
            issues.append(f"category {category.id}: duplicate id")
        category_ids.add(category.id)

    annotation_ids = set()
    for annotation in dataset.annotations:
        prefix = f"annotation {annotation.id}"
        if annotation.id in annotation_ids:
            issues.append(f"{prefix}: duplicate id")
        annotation_ids.add(annotation.id)
        if annotation.category_id not in category_ids:
            issues.append(f"{prefix}: unknown category {annotation.category_id}")
        image = image_index.get(annotation.image_id)
        if image is None:
            issues.append(f"{prefix}: unknown image {annotation.image_id}")
        elif annotation.mask.size != (image.height, image.width):
            issues.append(f"{prefix}: mask size {annotation.mask.size} != image size {(image.height, image.width)}")

        problems = annotation.mask.problems()
        if problems:
            issues.extend(f"{prefix}: {p}" for p in problems)
            continue
        bbox, area = bbox_and_area(annotation.mask)
        if area == 0:
            issues.append(f"{prefix}: empty mask")
        if area != annotation.area:
            issues.append(f"{prefix}: area {annotation.area} != mask popcount {area}")
        if bbox != tuple(annotation.bbox):
            issues.append(f"{prefix}: bbox {list(annotation.bbox)} != mask bound {list(bbox)}")
    return issues
