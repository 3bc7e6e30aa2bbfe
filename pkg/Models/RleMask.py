from typing import Tuple
from pydantic import BaseModel, ConfigDict, Field, field_validator


class RleMask(BaseModel):
    """Column-major run-length mask; counts[0] is always a run of zeros.

    Construction only checks that runs are non-negative. The sum and
    zero-run rules are checked by `problems()` and by the decoders, so a
    malformed mask read from disk reports a format error instead of a
    schema error.
    """
    model_config = ConfigDict(frozen=True)

    height: int = Field(..., ge=0)
    width: int = Field(..., ge=0)
    counts: Tuple[int, ...]

    @field_validator("counts")
    @classmethod
    def non_negative_runs(cls, counts: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(c < 0 for c in counts):
            raise ValueError("RLE runs must be non-negative")
        return counts

    @property
    def size(self) -> Tuple[int, int]:
        return self.height, self.width

    @property
    def area(self) -> int:
        return sum(self.counts[1::2])

    def problems(self) -> list:
        issues = []
        total = sum(self.counts)
        if total != self.height * self.width:
            issues.append(f"counts sum {total} != {self.height}x{self.width}")
        if any(c == 0 for c in self.counts[1:]):
            issues.append("zero-length run after the first position")
        return issues
