from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from Models.Annotation import Annotation


class PasteAction(BaseModel):
    model_config = ConfigDict(frozen=True)

    instance_id: str
    scale: float = Field(..., gt=0.0)
    # bbox center in canvas pixels; the pasted box may extend off-canvas
    center: Tuple[float, float]
    z: int = Field(..., ge=0)


class CompositionPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    background_image_id: int
    repeat_index: int = 0
    sample_seed: int
    actions: Tuple[PasteAction, ...] = Field(..., min_length=1)

    @model_validator(mode="after")
    def contiguous_z(self) -> "CompositionPlan":
        if [a.z for a in self.actions] != list(range(len(self.actions))):
            raise ValueError("paste z indices must be 0..n-1 in order")
        return self


class SkippedPaste(BaseModel):
    z: int
    instance_id: str
    reason: str


@dataclass(frozen=True)
class PastedInstance:
    """A paste rasterized at background resolution, in z order."""
    z: int
    instance_id: str
    category_id: int
    mask: np.ndarray


@dataclass
class ComposedSample:
    image: np.ndarray
    annotations: List[Annotation]
    plan: CompositionPlan
    skipped: List[SkippedPaste] = field(default_factory=list)

    def trace(self) -> dict:
        return {
            "plan": self.plan.model_dump(mode="json"),
            "skipped": [s.model_dump(mode="json") for s in self.skipped],
        }
