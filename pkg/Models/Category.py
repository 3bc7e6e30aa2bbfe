from enum import Enum
from pydantic import BaseModel, ConfigDict, Field


class FrequencyBand(str, Enum):
    RARE = "rare"
    COMMON = "common"
    FREQUENT = "frequent"
    UNKNOWN = "unknown"


# LVIS stores the band as a single letter
LVIS_FREQUENCY_CODES = {
    "r": FrequencyBand.RARE,
    "c": FrequencyBand.COMMON,
    "f": FrequencyBand.FREQUENT,
}


class Category(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int = Field(..., gt=0)
    name: str
    frequency_band: FrequencyBand = FrequencyBand.UNKNOWN

    @property
    def frequency_code(self):
        """LVIS letter for the band, None when the band is unknown."""
        for code, band in LVIS_FREQUENCY_CODES.items():
            if band == self.frequency_band:
                return code
        return None
