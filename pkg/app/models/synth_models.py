"""
합성 시장 생성 모델
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator


class Strategy(str, Enum):
    MATCHING = "matching"
    COMPETITION = "competition"
    HYBRID = "hybrid"


class TextModel(BaseModel):
    """Maps a message's gap to its word-count and positivity distributions.

    Word counts are NB2 with mean ``exp(length_intercept + length_slope * gap)``
    and dispersion ``length_dispersion``; positive words are binomial with
    probability ``expit(positivity_intercept + positivity_slope * gap)``.
    """

    model_config = ConfigDict(frozen=True)

    length_intercept: float = Field(default=3.2)
    length_slope: float = Field(default=0.26)
    length_dispersion: float = Field(default=0.5, gt=0.0)
    positivity_intercept: float = Field(default=-2.5)
    positivity_slope: float = Field(default=-0.1)


class GenerativeConfig(BaseModel):
    """합성 시장 설정"""

    model_config = ConfigDict(frozen=True)

    n_men: int = Field(ge=2, description="남성 수")
    n_women: int = Field(ge=2, description="여성 수")
    strategy: Strategy = Field(default=Strategy.HYBRID)
    reach: float = Field(default=0.25, ge=-1.0, le=1.0, description="hybrid 목표 격차")
    gap_noise: float = Field(default=0.1, ge=0.0)
    mean_contacts: float = Field(default=10.0, gt=0.0)
    women_contact_ratio: float = Field(
        default=1.0, gt=0.0, description="여성 발신자의 평균 접촉 수 배율"
    )
    reply_intercept: float = Field(default=0.0)
    reply_slope: float = Field(default=-1.5)
    text_model: TextModel = Field(default_factory=TextModel)
    seed: int = Field(default=0, ge=0)
    city: str = Field(default="boston", min_length=1)
    window_length: int = Field(default=30 * 24 * 3600, ge=10)

    @model_validator(mode="after")
    def check_market_size(self) -> "GenerativeConfig":
        if self.window_length < 2 * int(self.mean_contacts + 1):
            raise ValueError("window_length too short for the requested contact volume")
        return self

    def summary(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


@dataclass(frozen=True)
class GroundTruth:
    """Latent quantities behind a generated market.

    ``messages`` has one row per retained initiation with the intended
    (``true_gap``) and realised gap, the reply probability and the draw.
    """

    latent_rank: pd.Series
    messages: pd.DataFrame
    counts: Dict[str, Any] = field(default_factory=dict)

    @property
    def mean_true_gap(self) -> float:
        return float(self.messages["true_gap"].mean()) if len(self.messages) else 0.0

    def mean_median_true_gap(self, sex: Optional[str] = None) -> float:
        frame = self.messages
        if sex is not None:
            frame = frame[frame["sender_sex"] == sex]
        if frame.empty:
            return float("nan")
        return float(frame.groupby("sender_id")["true_gap"].median().mean())

    def latent_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"user_id": self.latent_rank.index.astype(str), "latent_rank": self.latent_rank.values}
        )


class RoundtripReport(BaseModel):
    """Pipeline estimates set against the generator's ground truth."""

    strategy: Strategy
    n_users: int
    n_ranked: int
    n_initiations: int
    rank_spearman: float = Field(description="latent rank vs PageRank scaled rank")
    rank_spearman_receivers: Optional[float] = Field(
        default=None, description="restricted to receivers with >= 5 in-edges"
    )
    true_mean_median_gap: float
    estimated_mean_median_gap: float
    true_reply_slope: float
    estimated_reply_slope: float
    reply_slope_se: float
    reply_slope_sign_recovered: bool
    reply_curve_spearman: Optional[float] = None
    fit_converged: bool

    @property
    def median_gap_error(self) -> float:
        return self.estimated_mean_median_gap - self.true_mean_median_gap

    def to_dict(self) -> Dict[str, Any]:
        payload = self.model_dump(mode="json")
        payload["median_gap_error"] = self.median_gap_error
        return payload


def latent_grid(size: int) -> np.ndarray:
    """Equally spaced latent ranks 0, 1/(m-1), ..., 1."""
    return np.linspace(0.0, 1.0, size)
