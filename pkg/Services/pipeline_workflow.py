from pathlib import Path
from typing import Dict, List, Optional, Sequence
import json
import logging

from Config import PipelineConfig
from config_manager import ConfigManager
from exceptions import ConfigError
from Models.Category import Category
from Models.SynthSpec import SynthSpec
from Services.composer_service import compose_dataset
from Services.dataset_service import audit_annotations, load_dataset, parse_dataset, validate_dataset
from Services.filter_service import filter_pool, retention_curve
from Services.image_service import ImageStore
from Services.pool_service import load_manifest, select_pool, write_manifest
from Services.scale_stats_service import compute_scale_stats, load_scale_stats, save_scale_stats
from Services.synth_service import generate_annotated_dataset, generate_pool

logger = logging.getLogger(__name__)

DEFAULT_RETENTION_THRESHOLDS = [round(0.15 + 0.01 * i, 2) for i in range(21)]


class PipelineWorkflow:
    """Runs each pipeline stage from files to files."""

    def __init__(self, config: PipelineConfig):
        self.config = config

    def _path(self, explicit: Optional[Path], key: str) -> Path:
        path = explicit if explicit is not None else getattr(self.config.paths, key)
        if path is None:
            raise ConfigError(f"No path given for {key}", [f"paths.{key}"])
        return Path(path)

    def _input(self, explicit: Optional[Path], key: str) -> Path:
        path = self._path(explicit, key)
        if not path.exists():
            raise ConfigError(f"Input path does not exist: {path}", [f"paths.{key}"])
        return path

    def _categories(self, dataset_path: Optional[Path] = None) -> Optional[List[Category]]:
        path = dataset_path or self.config.paths.source_dataset
        if path is None:
            return None
        return list(load_dataset(self._input(Path(path), "source_dataset")).categories)

    def _pool_images(self, manifest_path: Path) -> ImageStore:
        return ImageStore(self.config.paths.pool_image_root or manifest_path.parent)

    def select(self, manifest_in: Optional[Path], manifest_out: Path) -> Dict:
        manifest_in = self._input(manifest_in, "pool_manifest")
        pool = select_pool(load_manifest(manifest_in, self._categories()))
        write_manifest(pool, manifest_out)
        return {"status": "success", "records": len(pool.records)}

    def filter(self, manifest_in: Optional[Path], manifest_out: Path, report_out: Optional[Path]) -> Dict:
        manifest_in = self._input(manifest_in, "pool_manifest")
        pool = load_manifest(manifest_in, self._categories())
        kept, report = filter_pool(pool, self.config.filter, self._pool_images(manifest_in), jobs=self.config.JOBS)
        write_manifest(kept, manifest_out)
        if report_out is not None:
            report_out.parent.mkdir(parents=True, exist_ok=True)
            report_out.write_text(json.dumps(report.summary(), indent=2) + "\n", encoding="utf-8")
        return {"status": "success", "total": report.total, "kept": report.kept}

    def stats(self, dataset_in: Optional[Path], stats_out: Optional[Path]) -> Dict:
        dataset = load_dataset(self._input(dataset_in, "source_dataset"))
        stats = compute_scale_stats(dataset)
        save_scale_stats(stats, self._path(stats_out, "stats_sidecar"))
        return {"status": "success", "categories": len(stats.categories)}

    def retention(self, manifest_in: Optional[Path], table_out: Path, thresholds: Sequence[float],
                  d: Optional[float], dataset_path: Optional[Path]) -> Dict:
        manifest_in = self._input(manifest_in, "pool_manifest")
        categories = self._categories(dataset_path)
        pool = load_manifest(manifest_in, categories)
        table = retention_curve(pool, thresholds, d=d, categories=categories, include_all=True)
        table_out.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(table_out, index=False, float_format="%.6f", lineterminator="\n")
        return {"status": "success", "rows": len(table)}

    def compose(self, pool_in: Optional[Path], dataset_in: Optional[Path], stats_in: Optional[Path],
                out_dir: Optional[Path]) -> Dict:
        pool_in = self._input(pool_in, "pool_manifest")
        dataset_in = self._input(dataset_in, "source_dataset")
        out_dir = self._path(out_dir, "output_dir")
        dataset = load_dataset(dataset_in)
        pool = load_manifest(pool_in, list(dataset.categories))
        stats_path = stats_in or self.config.paths.stats_sidecar
        if stats_path is not None and Path(stats_path).exists():
            stats = load_scale_stats(stats_path)
        else:
            logger.info("No scale statistics sidecar, computing them from the source dataset")
            stats = compute_scale_stats(dataset)

        composed = compose_dataset(
            pool, stats, dataset, self.config.compose, out_dir,
            pool_images=self._pool_images(pool_in),
            background_images=ImageStore(self.config.paths.dataset_image_root or dataset_in.parent),
            jobs=self.config.JOBS,
        )
        return {"status": "success", "images": len(composed.images), "annotations": len(composed.annotations)}

    def validate(self, dataset_in: Optional[Path]) -> Dict:
        path = self._input(dataset_in, "source_dataset")
        raw = path.read_bytes()
        dataset = parse_dataset(raw)
        # stored fields first; parsing recomputes bbox and area and drops empty masks
        issues = list(dict.fromkeys(audit_annotations(raw) + validate_dataset(dataset)))
        for issue in issues:
            logger.error(f"Validation issue: {issue}")
        return {"status": "success" if not issues else "invalid", "issues": issues}

    def synth(self, spec_in: Optional[Path], out_dir: Path) -> Dict:
        values = json.loads(spec_in.read_text(encoding="utf-8")) if spec_in is not None else {}
        spec = SynthSpec(**values)
        ConfigManager.create_required_directories(self.config)
        pool = generate_pool(spec, out_dir / "pool")
        dataset = generate_annotated_dataset(spec, out_dir / "dataset")
        return {"status": "success", "records": len(pool.records), "images": len(dataset.images)}
