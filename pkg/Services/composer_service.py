"""Class-balanced Copy-Paste composition with occlusion-correct annotations."""
from concurrent import futures
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
import json
import logging
import math

import cv2
import numpy as np

from Config import ComposeConfig
from exceptions import ImageLoadError, PlanningError, XPasteError
from Models.Annotation import Annotation, Provenance
from Models.CompositionPlan import (
    ComposedSample,
    CompositionPlan,
    PasteAction,
    PastedInstance,
    SkippedPaste,
)
from Models.Dataset import Dataset
from Models.ImageInfo import ImageInfo
from Models.InstanceRecord import InstanceRecord
from Models.PoolManifest import PoolManifest
from Models.ScaleStats import ScaleStats
from Services.dataset_service import validate_dataset, write_dataset
from Services.image_service import ImageStore, save_png
from Services.pool_service import ensure_selected
from Services.rle_service import bbox_and_area, rle_decode, rle_encode
from Services.scale_stats_service import scale_for

logger = logging.getLogger(__name__)


class PoolIndex:
    """Pool records grouped for sampling, restricted to the allowed sources."""

    def __init__(self, pool: PoolManifest, cfg: Optional[ComposeConfig] = None):
        pool = ensure_selected(pool)
        sources = cfg.sources if cfg is not None else None
        records = [r for r in pool.records if sources is None or r.source in sources]
        self.by_id: Dict[str, InstanceRecord] = {r.id: r for r in records}
        grouped: Dict[int, List[InstanceRecord]] = {}
        for record in records:
            grouped.setdefault(record.category_id, []).append(record)
        self.category_ids: List[int] = sorted(grouped)
        self.by_category: Dict[int, List[InstanceRecord]] = grouped

    def __len__(self) -> int:
        return len(self.by_id)


def derive_sample_seed(seed: int, image_id: int, repeat_index: int) -> int:
    """Hash (seed, image id, repeat index) into an independent 64-bit stream seed."""
    state = np.random.SeedSequence([seed, image_id, repeat_index]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def derive_sample_rng(seed: int, image_id: int, repeat_index: int) -> np.random.Generator:
    return np.random.default_rng(derive_sample_seed(seed, image_id, repeat_index))


def plan_sample(rng: np.random.Generator, pool: Union[PoolManifest, PoolIndex], stats: ScaleStats,
                background: ImageInfo, background_annotations: Sequence[Annotation],
                cfg: ComposeConfig, sample_seed: int = 0, repeat_index: int = 0) -> CompositionPlan:
    index = pool if isinstance(pool, PoolIndex) else PoolIndex(pool, cfg)
    if len(index) == 0:
        raise PlanningError("Cannot plan a composition from an empty instance pool")

    width, height = background.width, background.height
    count = int(rng.integers(1, cfg.n_max + 1))
    actions = []
    for z in range(count):
        category_id = index.category_ids[int(rng.integers(len(index.category_ids)))]
        candidates = index.by_category[category_id]
        record = candidates[int(rng.integers(len(candidates)))]
        scale = scale_for(stats, category_id, rng, cfg.scale_min, cfg.scale_max)

        if cfg.placement == "reference" and background_annotations:
            x, y, w, h = background_annotations[int(rng.integers(len(background_annotations)))].bbox
            center = (x + w / 2.0, y + h / 2.0)
        else:
            center = (float(rng.uniform(0, width)), float(rng.uniform(0, height)))
        actions.append(PasteAction(instance_id=record.id, scale=scale, center=center, z=z))

    return CompositionPlan(
        background_image_id=background.id,
        repeat_index=repeat_index,
        sample_seed=sample_seed,
        actions=tuple(actions),
    )


def _instance_patch(record: InstanceRecord, images: ImageStore) -> Tuple[np.ndarray, np.ndarray]:
    """RGB pixels and binary mask of the instance, cropped to its mask bbox."""
    image = images.load_rgb(record.image_path)
    if image.shape[:2] != (record.height, record.width):
        raise ImageLoadError(
            f"Image {record.image_path} is {image.shape[1]}x{image.shape[0]}, "
            f"manifest says {record.width}x{record.height}"
        )
    mask = record.chosen_mask
    (x, y, w, h), _ = bbox_and_area(mask)
    bitmap = rle_decode(mask)
    return (
        np.ascontiguousarray(image[y:y + h, x:x + w]),
        np.ascontiguousarray(bitmap[y:y + h, x:x + w]),
    )


def _paste(canvas: np.ndarray, action: PasteAction, record: InstanceRecord,
           images: ImageStore) -> Optional[np.ndarray]:
    """Paste one instance in place; returns its canvas-sized mask or None when nothing is visible."""
    height, width = canvas.shape[:2]
    patch, patch_mask = _instance_patch(record, images)
    area = int(patch_mask.sum())
    if area == 0:
        return None

    factor = math.sqrt(action.scale ** 2 * height * width / area)
    new_w = max(1, int(round(patch.shape[1] * factor)))
    new_h = max(1, int(round(patch.shape[0] * factor)))
    resized = cv2.resize(patch, (new_w, new_h), interpolation=cv2.INTER_LINEAR)
    resized_mask = cv2.resize(patch_mask.astype(np.float32), (new_w, new_h),
                              interpolation=cv2.INTER_LINEAR) >= 0.5

    cx, cy = action.center
    x0 = int(math.floor(cx - new_w / 2.0))
    y0 = int(math.floor(cy - new_h / 2.0))
    left, top = max(0, x0), max(0, y0)
    right, bottom = min(width, x0 + new_w), min(height, y0 + new_h)
    if left >= right or top >= bottom:
        return None

    visible = resized_mask[top - y0:bottom - y0, left - x0:right - x0]
    if not visible.any():
        return None
    region = canvas[top:bottom, left:right]
    region[visible] = resized[top - y0:bottom - y0, left - x0:right - x0][visible]

    full_mask = np.zeros((height, width), dtype=bool)
    full_mask[top:bottom, left:right] = visible
    return full_mask


def _kept(visible_area: int, full_area: int, drop_fraction: float) -> bool:
    if visible_area == 0:
        return False
    return drop_fraction <= 0 or visible_area / full_area >= drop_fraction


def update_annotations(image_id: int, background_annotations: Sequence[Annotation],
                       pasted: Sequence[PastedInstance], occlusion_drop_fraction: float = 0.0,
                       next_id: int = 1) -> List[Annotation]:
    """Visible annotations after pasting `pasted` in order over the background.

    A mask loses every pixel covered by a strictly later paste. Background
    annotations sit below all pastes and never occlude each other. Objects
    left with no visible pixels (or less than occlusion_drop_fraction of their
    area) are dropped; untouched background annotations are returned as-is.
    """
    if not pasted:
        return list(background_annotations)

    covered = np.zeros(pasted[0].mask.shape, dtype=bool)
    visible_pasted: List[np.ndarray] = [None] * len(pasted)
    for i in range(len(pasted) - 1, -1, -1):
        mask = pasted[i].mask.astype(bool)
        visible_pasted[i] = mask & ~covered
        covered |= mask

    result: List[Annotation] = []
    for annotation in background_annotations:
        original = rle_decode(annotation.mask).astype(bool)
        if not (original & covered).any():
            result.append(annotation)
            continue
        visible = original & ~covered
        visible_area = int(visible.sum())
        if not _kept(visible_area, annotation.area, occlusion_drop_fraction):
            logger.debug(f"Dropping occluded annotation {annotation.id} on image {image_id}")
            continue
        result.append(Annotation.from_mask(
            annotation.id, annotation.image_id, annotation.category_id, rle_encode(visible), annotation.provenance
        ))

    for instance, visible in zip(pasted, visible_pasted):
        if not _kept(int(visible.sum()), int(instance.mask.sum()), occlusion_drop_fraction):
            logger.debug(f"Dropping occluded paste z={instance.z} ({instance.instance_id}) on image {image_id}")
            continue
        result.append(Annotation.from_mask(
            next_id, image_id, instance.category_id, rle_encode(visible), Provenance.PASTED
        ))
        next_id += 1
    return result


def render(plan: CompositionPlan, pool: Union[PoolManifest, PoolIndex], images: ImageStore,
           background_image: np.ndarray, background_annotations: Sequence[Annotation],
           cfg: ComposeConfig) -> ComposedSample:
    index = pool if isinstance(pool, PoolIndex) else PoolIndex(pool, cfg)
    canvas = np.array(background_image, dtype=np.uint8, copy=True)
    pasted: List[PastedInstance] = []
    skipped: List[SkippedPaste] = []

    for action in plan.actions:
        record = index.by_id[action.instance_id]
        mask = _paste(canvas, action, record, images)
        if mask is None:
            logger.debug(f"Skipping paste z={action.z} ({record.id}): nothing visible on the canvas")
            skipped.append(SkippedPaste(z=action.z, instance_id=record.id, reason="empty after clipping"))
            continue
        pasted.append(PastedInstance(z=action.z, instance_id=record.id, category_id=record.category_id, mask=mask))

    first_new_id = max((a.id for a in background_annotations), default=0) + 1
    annotations = update_annotations(
        plan.background_image_id, background_annotations, pasted, cfg.occlusion_drop_fraction, first_new_id
    )
    return ComposedSample(image=canvas, annotations=annotations, plan=plan, skipped=skipped)


@dataclass
class ComposeContext:
    pool: PoolIndex
    stats: ScaleStats
    annotations_by_image: Dict[int, List[Annotation]]
    cfg: ComposeConfig
    pool_images: ImageStore
    background_images: ImageStore
    image_dir: Path


_CONTEXT: Optional[ComposeContext] = None


def _init_worker(context: ComposeContext) -> None:
    global _CONTEXT
    _CONTEXT = context


def output_file_name(image: ImageInfo, repeat_index: int) -> str:
    return f"{image.id:012d}_{repeat_index}.png"


def _compose_task(task: Tuple[ImageInfo, int]) -> Dict:
    image, repeat_index = task
    ctx = _CONTEXT
    file_name = output_file_name(image, repeat_index)
    background_annotations = ctx.annotations_by_image.get(image.id, [])
    background = ctx.background_images.load_rgb(image.file_name)

    try:
        if background.shape[:2] != (image.height, image.width):
            raise ImageLoadError(f"Background {image.file_name} size does not match its image entry")
        sample_seed = derive_sample_seed(ctx.cfg.seed, image.id, repeat_index)
        rng = np.random.default_rng(sample_seed)
        plan = plan_sample(rng, ctx.pool, ctx.stats, image, background_annotations, ctx.cfg,
                           sample_seed=sample_seed, repeat_index=repeat_index)
        sample = render(plan, ctx.pool, ctx.pool_images, background, background_annotations, ctx.cfg)
        pixels, annotations, trace = sample.image, sample.annotations, sample.trace()
    except XPasteError as e:
        logger.error(f"Composition failed for image {image.id} repeat {repeat_index}, passing background through: {e}")
        pixels, annotations = background, list(background_annotations)
        trace = {"background_image_id": image.id, "repeat_index": repeat_index, "error": e.to_dict()}

    save_png(pixels, ctx.image_dir / file_name)
    return {
        "image": ImageInfo(id=image.id, width=image.width, height=image.height, file_name=f"images/{file_name}"),
        "annotations": annotations,
        "trace": trace,
    }


def compose_dataset(pool: PoolManifest, stats: ScaleStats, dataset: Dataset, cfg: ComposeConfig,
                    out_dir: Union[str, Path], pool_images: ImageStore, background_images: ImageStore,
                    jobs: int = 1) -> Dataset:
    """Compose repeat_factor samples per background image into out_dir.

    Writes images/*.png, annotations.json and plans.jsonl. Image and
    annotation ids are renumbered in task order, so the output does not
    depend on the number of workers.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.repeat_factor == 0:
        logger.info("Repeat factor 0: emitting the source dataset unchanged")
        write_dataset(dataset, out_dir / "annotations.json")
        return dataset

    context = ComposeContext(
        pool=PoolIndex(pool, cfg),
        stats=stats,
        annotations_by_image=dataset.annotations_by_image(),
        cfg=cfg,
        pool_images=pool_images,
        background_images=background_images,
        image_dir=out_dir / "images",
    )
    if len(context.pool) == 0:
        raise PlanningError("Cannot compose from an empty instance pool")
    tasks = [(image, repeat) for repeat in range(cfg.repeat_factor) for image in dataset.images]
    logger.info(f"Composing {len(tasks)} samples with {jobs} worker(s)")

    if jobs > 1 and len(tasks) > 1:
        chunk_size = max(1, len(tasks) // (jobs * 4))
        with futures.ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                         initargs=(context,)) as executor:
            results = list(executor.map(_compose_task, tasks, chunksize=chunk_size))
    else:
        _init_worker(context)
        try:
            results = [_compose_task(task) for task in tasks]
        finally:
            _init_worker(None)

    images, annotations, traces = [], [], []
    next_annotation_id = 1
    for image_id, result in enumerate(results, start=1):
        images.append(result["image"].model_copy(update={"id": image_id}))
        for annotation in result["annotations"]:
            annotations.append(annotation.model_copy(update={"id": next_annotation_id, "image_id": image_id}))
            next_annotation_id += 1
        traces.append(result["trace"])

    composed = Dataset(images=tuple(images), annotations=tuple(annotations), categories=dataset.categories)
    issues = validate_dataset(composed)
    if issues:
        raise XPasteError("Composed dataset failed validation", issues)

    write_dataset(composed, out_dir / "annotations.json")
    with open(out_dir / "plans.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for trace in traces:
            f.write(json.dumps(trace, separators=(",", ":")) + "\n")
    pasted = sum(1 for a in annotations if a.provenance == Provenance.PASTED)
    logger.info(f"Composed {len(images)} images with {len(annotations)} annotations ({pasted} pasted)")
    return composed
