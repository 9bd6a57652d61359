"""
Report Schemas

Interval summaries for a single fit and coverage tables over replicates.
"""

from typing import Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, Field


class IntervalSummary(BaseModel):
    name: str
    estimate: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    truth: Optional[float] = None

    @property
    def width(self) -> Optional[float]:
        if self.lower is None or self.upper is None:
            return None
        return self.upper - self.lower


class FitSummary(BaseModel):
    family: str
    method: str
    level: float
    seed: int
    config_hash: str
    n_draws: int
    runtime_seconds: float
    quantile_method: str = "linear"
    intervals: List[IntervalSummary] = Field(default_factory=list)
    reject_null: Optional[bool] = None
    extra: Dict[str, float] = Field(default_factory=dict)


class CoverageRow(BaseModel):
    group: str
    method: str
    coverage: Optional[float] = None
    width_mean: Optional[float] = None
    width_std: Optional[float] = None
    reject_rate: Optional[float] = None
    count: int = 0


class ReplicateFailure(BaseModel):
    replicate: int
    method: str
    error: str


class CoverageReport(BaseModel):
    experiment: str
    level: float
    replicates: int
    rows: List[CoverageRow] = Field(default_factory=list)
    failures: List[ReplicateFailure] = Field(default_factory=list)

    def row(self, group: str, method: str) -> CoverageRow:
        for row in self.rows:
            if row.group == group and row.method == method:
                return row
        raise KeyError(f"no coverage row for group '{group}' and method '{method}'")

    def to_frame(self) -> pd.DataFrame:
        columns = list(CoverageRow.model_fields)
        return pd.DataFrame([row.model_dump() for row in self.rows], columns=columns)
