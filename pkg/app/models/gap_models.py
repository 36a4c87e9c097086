"""
Desirability-gap records, per-sender profiles and binned curves.
"""

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator

GAP_RECORD_COLUMNS = [
    "sender_id",
    "receiver_id",
    "sender_sex",
    "city",
    "timestamp",
    "sender_rank",
    "receiver_rank",
    "gap",
    "replied",
    "word_count",
    "positive_fraction",
    "pct_positive",
]
PROFILE_COLUMNS = [
    "user_id",
    "sex",
    "city",
    "median_gap",
    "mean_gap",
    "iqr_gap",
    "n_contacted",
]


class GapRecord(BaseModel):
    """초기 메시지 한 건의 격차 기록"""

    sender_id: str
    receiver_id: str
    gap: float = Field(ge=-1.0, le=1.0)
    replied: bool
    word_count: int = Field(default=0, ge=0)
    positive_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    sender_rank: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    receiver_rank: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    sender_sex: Optional[str] = None
    city: Optional[str] = None


class UserGapProfile(BaseModel):
    """발신자별 격차 요약"""

    user_id: str
    median_gap: float
    mean_gap: float
    iqr_gap: float = Field(ge=0.0)
    n_contacted: int = Field(ge=1)

    @model_validator(mode="after")
    def singleton_has_zero_iqr(self) -> "UserGapProfile":
        if self.n_contacted == 1 and self.iqr_gap != 0.0:
            raise ValueError("iqr_gap must be 0 for a single contact")
        return self


def records_to_frame(records: Iterable[GapRecord]) -> pd.DataFrame:
    rows = [record.model_dump() for record in records]
    frame = pd.DataFrame(rows)
    if frame.empty:
        return pd.DataFrame(columns=GAP_RECORD_COLUMNS)
    frame["pct_positive"] = frame["positive_fraction"] * 100.0
    return frame


def profiles_to_frame(profiles: Iterable[UserGapProfile]) -> pd.DataFrame:
    frame = pd.DataFrame([profile.model_dump() for profile in profiles])
    if frame.empty:
        return pd.DataFrame(columns=PROFILE_COLUMNS)
    return frame


@dataclass(frozen=True)
class BinnedCurve:
    """Curve over ordered bin centres.

    ``counts`` and ``standard_errors`` are None for curves that are not
    built from binned observations (densities, model predictions).
    """

    bin_centers: np.ndarray
    values: np.ndarray
    counts: Optional[np.ndarray] = None
    standard_errors: Optional[np.ndarray] = None
    omitted: int = 0
    label: str = ""

    def __len__(self) -> int:
        return int(self.bin_centers.shape[0])

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def to_frame(self) -> pd.DataFrame:
        size = len(self)
        return pd.DataFrame(
            {
                "bin_center": self.bin_centers,
                "value": self.values,
                "count": self.counts if self.counts is not None else [pd.NA] * size,
                "standard_error": (
                    self.standard_errors
                    if self.standard_errors is not None
                    else [np.nan] * size
                ),
            }
        )

    @classmethod
    def empty(cls, omitted: int = 0, label: str = "") -> "BinnedCurve":
        nothing = np.array([], dtype=float)
        return cls(
            bin_centers=nothing,
            values=nothing,
            counts=np.array([], dtype=np.int64),
            standard_errors=nothing,
            omitted=omitted,
            label=label,
        )
