from pathlib import Path
from typing import Dict, List, Union
import json
import logging

import numpy as np

from exceptions import ScaleStatsError
from Models.Dataset import Dataset
from Models.ScaleStats import CategoryScale, ScaleStats

logger = logging.getLogger(__name__)

DEFAULT_SCALE_MIN = 0.02
DEFAULT_SCALE_MAX = 0.95


def _summarize(scales: np.ndarray) -> CategoryScale:
    # population standard deviation; a single sample gives sigma 0
    return CategoryScale(mu=float(np.mean(scales)), sigma=float(np.std(scales)), n=int(scales.size))


def compute_scale_stats(dataset: Dataset) -> ScaleStats:
    """Per-category mean and std of sqrt(mask area / image area)."""
    if not dataset.annotations:
        raise ScaleStatsError("Cannot compute scale statistics from a dataset without annotations")

    images = dataset.image_index()
    per_category: Dict[int, List[float]] = {}
    for annotation in dataset.annotations:
        image = images[annotation.image_id]
        scale = float(np.sqrt(annotation.area / (image.width * image.height)))
        per_category.setdefault(annotation.category_id, []).append(scale)

    categories = {cid: _summarize(np.array(values)) for cid, values in sorted(per_category.items())}
    global_scale = _summarize(np.array([s for cid in sorted(per_category) for s in per_category[cid]]))
    logger.info(f"Scale statistics for {len(categories)} categories from {len(dataset.annotations)} annotations")
    return ScaleStats(categories=categories, global_scale=global_scale)


def scale_for(stats: ScaleStats, category_id: int, rng: np.random.Generator,
              s_min: float = DEFAULT_SCALE_MIN, s_max: float = DEFAULT_SCALE_MAX) -> float:
    """Draw S_r ~ N(mu_C, sigma_C^2), falling back to the global statistics, clamped."""
    entry = stats.for_category(category_id)
    return float(np.clip(rng.normal(entry.mu, entry.sigma), s_min, s_max))


def scale_stats_to_dict(stats: ScaleStats) -> Dict:
    document = {str(cid): entry.model_dump() for cid, entry in sorted(stats.categories.items())}
    document["global"] = stats.global_scale.model_dump()
    return document


def save_scale_stats(stats: ScaleStats, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(scale_stats_to_dict(stats), indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote scale statistics to {path}")


def load_scale_stats(path: Union[str, Path]) -> ScaleStats:
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
        global_scale = CategoryScale(**document.pop("global"))
        categories = {int(cid): CategoryScale(**entry) for cid, entry in document.items()}
    except (KeyError, ValueError, TypeError) as e:
        raise ScaleStatsError(f"Invalid scale statistics sidecar {path}: {e}") from e
    return ScaleStats(categories=categories, global_scale=global_scale)
