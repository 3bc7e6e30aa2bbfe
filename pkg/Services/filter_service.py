"""Instance filtering: background simplicity, mask area and category-specific CLIP thresholds."""
from concurrent import futures
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
import itertools
import logging
import math

import numpy as np
import pandas as pd

from Config import FilterConfig
from exceptions import ImageLoadError
from Models.Category import Category, FrequencyBand
from Models.FilterReport import FilterReport, FilterRule, Rejection
from Models.InstanceRecord import InstanceRecord
from Models.PoolManifest import PoolManifest
from Services.image_service import ImageStore
from Services.pool_service import ensure_selected

logger = logging.getLogger(__name__)

RETENTION_BANDS = (FrequencyBand.RARE, FrequencyBand.COMMON, FrequencyBand.FREQUENT)


def background_simplicity(image: np.ndarray, cfg: FilterConfig) -> bool:
    """True when enough pixels lie close to the image's dominant color.

    The dominant color is the mean of the most populated bin of a per-channel
    quantized histogram (bin width color_tolerance + 1, lowest bin on ties).
    Closeness is the per-channel maximum absolute difference. Integer
    arithmetic keeps the verdict independent of pixel order.
    """
    pixels = np.asarray(image, dtype=np.int64).reshape(-1, 3)
    if pixels.shape[0] == 0:
        return False
    step = cfg.color_tolerance + 1
    bins_per_channel = 256 // step + 1
    quantized = pixels // step
    keys = (quantized[:, 0] * bins_per_channel + quantized[:, 1]) * bins_per_channel + quantized[:, 2]
    bin_keys, bin_counts = np.unique(keys, return_counts=True)
    dominant_bin = int(bin_keys[np.argmax(bin_counts)])

    members = pixels[keys == dominant_bin]
    n = members.shape[0]
    color_sum = members.sum(axis=0)
    # |p - sum/n| <= tol  <=>  |p*n - sum| <= tol*n
    distance = np.abs(pixels * n - color_sum).max(axis=1)
    close = int(np.count_nonzero(distance <= cfg.color_tolerance * n))
    return close >= cfg.background_dominance * pixels.shape[0]


def category_thresholds(pool: PoolManifest, cfg: FilterConfig) -> Dict[int, float]:
    """thres_i = min(t, max(C_i) - d) for every category with at least one record."""
    pool = ensure_selected(pool)
    best: Dict[int, float] = {}
    for record in pool.records:
        score = record.clip_score
        if record.category_id not in best or score > best[record.category_id]:
            best[record.category_id] = score
    return {
        category_id: min(cfg.clip_threshold, max_score - cfg.subtractive)
        for category_id, max_score in sorted(best.items())
    }


def _area_fraction(record: InstanceRecord) -> float:
    return record.chosen_mask.area / (record.width * record.height)


def evaluate_record(record: InstanceRecord, threshold: float, cfg: FilterConfig,
                    images: ImageStore) -> Optional[Rejection]:
    """First failing rule for one record, or None when it is kept."""
    def reject(rule: FilterRule, detail: str) -> Rejection:
        logger.debug(f"Rejected {record.id} by {rule.value}: {detail}")
        return Rejection(id=record.id, category_id=record.category_id, rule=rule, detail=detail)

    fraction = _area_fraction(record)
    if not cfg.area_min <= fraction <= cfg.area_max:
        return reject(FilterRule.AREA, f"area fraction {fraction:.4f} outside [{cfg.area_min}, {cfg.area_max}]")
    if record.clip_score < threshold:
        return reject(FilterRule.CLIP_THRESHOLD, f"clip score {record.clip_score:.4f} < {threshold:.4f}")
    if not images.exists(record.image_path):
        return reject(FilterRule.IO, f"image not found: {record.image_path}")
    if record.source in cfg.require_background_check_for:
        try:
            simple = background_simplicity(images.load_rgb(record.image_path), cfg)
        except ImageLoadError as e:
            return reject(FilterRule.IO, e.message)
        if not simple:
            return reject(FilterRule.BACKGROUND, "no dominant background color")
    return None


def _evaluate_chunk(records: Sequence[InstanceRecord], thresholds: Dict[int, float],
                    cfg: FilterConfig, images: ImageStore) -> List[Optional[Rejection]]:
    return [evaluate_record(r, thresholds[r.category_id], cfg, images) for r in records]


def _chunks(items: Sequence, size: int) -> Iterable[Sequence]:
    for start in range(0, len(items), size):
        yield items[start:start + size]


def _cap_per_source(kept: List[InstanceRecord], cap: int) -> Dict[str, Rejection]:
    capped: Dict[str, Rejection] = {}
    by_source: Dict[str, List[Tuple[int, InstanceRecord]]] = {}
    for order, record in enumerate(kept):
        by_source.setdefault(record.source.value, []).append((order, record))
    for source, entries in by_source.items():
        ranked = sorted(entries, key=lambda e: (-e[1].clip_score, e[0]))
        for _, record in ranked[cap:]:
            capped[record.id] = Rejection(
                id=record.id, category_id=record.category_id, rule=FilterRule.SOURCE_CAP,
                detail=f"beyond the {cap} best-scoring {source} instances",
            )
    return capped


def filter_pool(pool: PoolManifest, cfg: FilterConfig, images: ImageStore,
                jobs: int = 1) -> Tuple[PoolManifest, FilterReport]:
    """Apply the area, CLIP-threshold, image and background rules to every record.

    Thresholds come from the whole input pool, so the rule order only
    changes which tag a rejected record carries.
    """
    pool = ensure_selected(pool)
    thresholds = category_thresholds(pool, cfg)
    records = list(pool.records)

    if jobs > 1 and len(records) > 1:
        chunk_size = max(1, math.ceil(len(records) / (jobs * 4)))
        with futures.ProcessPoolExecutor(max_workers=jobs) as executor:
            results = executor.map(
                _evaluate_chunk, _chunks(records, chunk_size),
                itertools.repeat(thresholds), itertools.repeat(cfg), itertools.repeat(images),
            )
            verdicts = [v for chunk in results for v in chunk]
    else:
        verdicts = _evaluate_chunk(records, thresholds, cfg, images)

    if cfg.max_per_source is not None:
        capped = _cap_per_source([r for r, v in zip(records, verdicts) if v is None], cfg.max_per_source)
        verdicts = [capped.get(r.id) if v is None else v for r, v in zip(records, verdicts)]

    report = FilterReport(thresholds=thresholds)
    for record, verdict in zip(records, verdicts):
        report.record(record.category_id, verdict)
    kept = tuple(r for r, v in zip(records, verdicts) if v is None)

    logger.info(f"Filtered pool: kept {report.kept}/{report.total} records")
    return pool.model_copy(update={"records": kept}), report


def _passes(scores: np.ndarray, threshold: float, category_max: float, d: Optional[float]) -> np.ndarray:
    if d is None:
        return scores >= threshold
    return scores >= min(threshold, category_max - d)


def retention_curve(pool: PoolManifest, thresholds: Sequence[float], d: Optional[float] = None,
                    categories: Optional[Sequence[Category]] = None,
                    bands: Sequence[FrequencyBand] = RETENTION_BANDS,
                    include_all: bool = False) -> pd.DataFrame:
    """Fraction of each band's records kept at each CLIP threshold.

    With d=None the plain rule score >= t is applied (the overall score
    distribution); with a number the category-specific rule
    score >= min(t, max(C_i) - d) is used. category_min / category_max give
    the envelope of per-category retention inside each band. Bands without
    records get NaN.
    """
    pool = ensure_selected(pool)
    category_table = {c.id: c for c in (categories if categories is not None else pool.categories)}
    scores_by_category = {
        category_id: np.array([r.clip_score for r in records], dtype=np.float64)
        for category_id, records in sorted(pool.by_category().items())
    }

    def band_of(category_id: int) -> FrequencyBand:
        category = category_table.get(category_id)
        return category.frequency_band if category is not None else FrequencyBand.UNKNOWN

    groups = [(band.value, [cid for cid in scores_by_category if band_of(cid) == band]) for band in bands]
    if include_all:
        groups.append(("all", list(scores_by_category)))

    rows = []
    for band_name, category_ids in groups:
        for threshold in thresholds:
            kept = total = 0
            per_category = []
            for category_id in category_ids:
                scores = scores_by_category[category_id]
                passed = int(np.count_nonzero(_passes(scores, threshold, scores.max(), d)))
                kept += passed
                total += scores.size
                per_category.append(passed / scores.size)
            rows.append({
                "band": band_name,
                "threshold": float(threshold),
                "records": total,
                "retention": kept / total if total else float("nan"),
                "category_min": min(per_category) if per_category else float("nan"),
                "category_max": max(per_category) if per_category else float("nan"),
            })
    return pd.DataFrame(rows, columns=["band", "threshold", "records", "retention", "category_min", "category_max"])
