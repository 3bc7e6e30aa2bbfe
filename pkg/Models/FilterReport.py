from enum import Enum
from typing import Dict, List, Optional
from pydantic import BaseModel, Field


class FilterRule(str, Enum):
    AREA = "area"
    CLIP_THRESHOLD = "clip_threshold"
    IO = "io"
    BACKGROUND = "background"
    SOURCE_CAP = "source_cap"


class Rejection(BaseModel):
    id: str
    category_id: int
    rule: FilterRule
    detail: str = ""


class FilterReport(BaseModel):
    total: int = 0
    kept: int = 0
    thresholds: Dict[int, float] = Field(default_factory=dict)
    kept_per_category: Dict[int, int] = Field(default_factory=dict)
    rejected: Dict[FilterRule, Dict[int, int]] = Field(default_factory=dict)
    rejections: List[Rejection] = Field(default_factory=list)

    def record(self, category_id: int, rejection: Optional[Rejection]) -> None:
        self.total += 1
        if rejection is None:
            self.kept += 1
            self.kept_per_category[category_id] = self.kept_per_category.get(category_id, 0) + 1
            return
        per_category = self.rejected.setdefault(rejection.rule, {})
        per_category[category_id] = per_category.get(category_id, 0) + 1
        self.rejections.append(rejection)

    def merge(self, other: "FilterReport") -> "FilterReport":
        """Associative merge; `other` covers records after this report's."""
        merged = self.model_copy(deep=True)
        merged.total += other.total
        merged.kept += other.kept
        merged.thresholds.update(other.thresholds)
        for category_id, count in other.kept_per_category.items():
            merged.kept_per_category[category_id] = merged.kept_per_category.get(category_id, 0) + count
        for rule, per_category in other.rejected.items():
            target = merged.rejected.setdefault(rule, {})
            for category_id, count in per_category.items():
                target[category_id] = target.get(category_id, 0) + count
        merged.rejections.extend(other.rejections)
        return merged

    def rejected_total(self) -> int:
        return sum(sum(per_category.values()) for per_category in self.rejected.values())

    def summary(self) -> Dict:
        """JSON-ready summary with rules and categories in a fixed order."""
        return {
            "total": self.total,
            "kept": self.kept,
            "rejected": self.rejected_total(),
            "thresholds": {str(k): self.thresholds[k] for k in sorted(self.thresholds)},
            "kept_per_category": {str(k): self.kept_per_category[k] for k in sorted(self.kept_per_category)},
            "rejected_per_rule": {
                rule.value: {str(k): self.rejected[rule][k] for k in sorted(self.rejected[rule])}
                for rule in FilterRule if rule in self.rejected
            },
            "rejections": [r.model_dump(mode="json") for r in self.rejections],
        }
