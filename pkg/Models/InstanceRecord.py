from enum import Enum
from typing import Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, model_validator

from Models.RleMask import RleMask


class InstanceSource(str, Enum):
    GENERATED = "generated"
    RETRIEVED = "retrieved"


class CandidateMask(BaseModel):
    """One segmenter's foreground prediction with its precomputed CLIP score."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    segmenter_name: str = Field(..., alias="segmenter")
    mask: RleMask
    clip_score: float = Field(..., ge=-1.0, le=1.0)


class InstanceRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1)
    category_id: int
    source: InstanceSource
    image_path: str
    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)
    candidates: Tuple[CandidateMask, ...] = Field(..., min_length=1)
    chosen: Optional[int] = None
    clip_score: Optional[float] = None

    @model_validator(mode="after")
    def check_candidates(self) -> "InstanceRecord":
        for index, candidate in enumerate(self.candidates):
            if candidate.mask.size != (self.height, self.width):
                raise ValueError(
                    f"candidate {index} ({candidate.segmenter_name}) mask size "
                    f"{candidate.mask.size} != image size {(self.height, self.width)}"
                )
        if self.chosen is not None:
            if not 0 <= self.chosen < len(self.candidates):
                raise ValueError(f"chosen index {self.chosen} out of range")
            if self.clip_score != self.candidates[self.chosen].clip_score:
                raise ValueError("clip_score must equal the chosen candidate's score")
        elif self.clip_score is not None:
            raise ValueError("clip_score is set but no candidate is chosen")
        return self

    @property
    def is_selected(self) -> bool:
        return self.chosen is not None

    @property
    def chosen_mask(self) -> RleMask:
        if self.chosen is None:
            raise ValueError(f"Instance {self.id} has no selected mask")
        return self.candidates[self.chosen].mask
