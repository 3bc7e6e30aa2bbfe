from typing import Dict, List, Tuple
from pydantic import BaseModel, ConfigDict, model_validator

from Models.Category import Category
from Models.InstanceRecord import InstanceRecord


class PoolManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    records: Tuple[InstanceRecord, ...] = ()
    categories: Tuple[Category, ...] = ()

    @model_validator(mode="after")
    def unique_ids(self) -> "PoolManifest":
        seen = set()
        for record in self.records:
            if record.id in seen:
                raise ValueError(f"duplicate instance id {record.id}")
            seen.add(record.id)
        return self

    def by_id(self) -> Dict[str, InstanceRecord]:
        return {record.id: record for record in self.records}

    def by_category(self) -> Dict[int, List[InstanceRecord]]:
        grouped: Dict[int, List[InstanceRecord]] = {}
        for record in self.records:
            grouped.setdefault(record.category_id, []).append(record)
        return grouped
