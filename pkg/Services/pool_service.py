"""Instance pool manifests: reading, writing and CLIP-guided mask selection."""
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union
import json
import logging

from pydantic import ValidationError

from exceptions import ManifestError, RleFormatError
from Models.Category import Category
from Models.InstanceRecord import CandidateMask, InstanceRecord
from Models.PoolManifest import PoolManifest
from Models.RleMask import RleMask
from Services.rle_service import rle_compress_string, rle_decompress_string

logger = logging.getLogger(__name__)


def _parse_mask(raw: Dict[str, Any]) -> RleMask:
    height, width = raw["size"]
    counts = raw["counts"]
    if isinstance(counts, str):
        return rle_decompress_string(counts, height, width)
    mask = RleMask(height=height, width=width, counts=tuple(counts))
    problems = mask.problems()
    if problems:
        raise RleFormatError("; ".join(problems))
    return mask


def _parse_record(raw: Dict[str, Any]) -> InstanceRecord:
    candidates = [
        CandidateMask(
            segmenter=candidate["segmenter"],
            clip_score=candidate["clip_score"],
            mask=_parse_mask(candidate["mask"]),
        )
        for candidate in raw.get("candidates", [])
    ]
    fields = {k: raw[k] for k in ("id", "category_id", "source", "image_path", "width", "height")}
    return InstanceRecord(
        **fields,
        candidates=tuple(candidates),
        chosen=raw.get("chosen"),
        clip_score=raw.get("clip_score"),
    )


def load_manifest(path: Union[str, Path], categories: Optional[Sequence[Category]] = None) -> PoolManifest:
    """Read a newline-delimited JSON pool manifest.

    Every problem in the file is collected before raising, so one
    ManifestError lists all offending line numbers. When a category table is
    given, records must reference one of its categories; otherwise the table
    is derived from the records.
    """
    known_categories = {c.id: c for c in categories} if categories is not None else None
    records: List[InstanceRecord] = []
    problems: List[Dict[str, Any]] = []
    seen_ids: Dict[str, int] = {}

    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = _parse_record(json.loads(line))
            except json.JSONDecodeError as e:
                problems.append({"line": line_number, "reason": f"malformed JSON: {e.msg}"})
                continue
            except (AttributeError, KeyError, TypeError, ValueError, RleFormatError) as e:
                reason = e.message if isinstance(e, RleFormatError) else str(e)
                if isinstance(e, ValidationError):
                    reason = "; ".join(
                        f"{'.'.join(str(p) for p in err['loc']) or 'record'}: {err['msg']}" for err in e.errors()
                    )
                elif isinstance(e, KeyError):
                    reason = f"missing field {e}"
                problems.append({"line": line_number, "reason": reason})
                continue

            if record.id in seen_ids:
                problems.append({
                    "line": line_number,
                    "reason": f"duplicate id {record.id} (first on line {seen_ids[record.id]})",
                })
                continue
            if known_categories is not None and record.category_id not in known_categories:
                problems.append({"line": line_number, "reason": f"unknown category {record.category_id}"})
                continue
            seen_ids[record.id] = line_number
            records.append(record)

    if problems:
        raise ManifestError(problems)

    if known_categories is None:
        table = [Category(id=cid, name=f"category_{cid}") for cid in sorted({r.category_id for r in records})]
    else:
        table = list(known_categories.values())
    logger.info(f"Loaded {len(records)} pool records from {path}")
    return PoolManifest(records=tuple(records), categories=tuple(table))


def record_to_dict(record: InstanceRecord) -> Dict[str, Any]:
    entry = {
        "id": record.id,
        "category_id": record.category_id,
        "source": record.source.value,
        "image_path": record.image_path,
        "width": record.width,
        "height": record.height,
        "candidates": [
            {
                "segmenter": c.segmenter_name,
                "clip_score": c.clip_score,
                "mask": {"size": [c.mask.height, c.mask.width], "counts": rle_compress_string(c.mask)},
            }
            for c in record.candidates
        ],
    }
    if record.chosen is not None:
        entry["chosen"] = record.chosen
        entry["clip_score"] = record.clip_score
    return entry


def write_manifest(pool: PoolManifest, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in pool.records:
            f.write(json.dumps(record_to_dict(record), separators=(",", ":")) + "\n")
    logger.info(f"Wrote {len(pool.records)} pool records to {path}")


def select_mask_by_clip(record: InstanceRecord) -> InstanceRecord:
    """Choose the candidate with the highest CLIP score; the earliest wins ties."""
    best = 0
    for index, candidate in enumerate(record.candidates):
        if candidate.clip_score > record.candidates[best].clip_score:
            best = index
    return record.model_copy(update={"chosen": best, "clip_score": record.candidates[best].clip_score})


def select_pool(pool: PoolManifest) -> PoolManifest:
    return pool.model_copy(update={"records": tuple(select_mask_by_clip(r) for r in pool.records)})


def ensure_selected(pool: PoolManifest) -> PoolManifest:
    if all(r.is_selected for r in pool.records):
        return pool
    return pool.model_copy(update={
        "records": tuple(r if r.is_selected else select_mask_by_clip(r) for r in pool.records)
    })
