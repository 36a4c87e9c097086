"""
Domain models.
"""

from .gap_models import BinnedCurve, GapRecord, UserGapProfile
from .graph_models import ContactGraph, DesirabilityTable
from .market_models import (
    BuildReport,
    Education,
    MarketDataset,
    MessageEvent,
    Sex,
    UserRecord,
)
from .regression_models import DesignMatrix, DesignSpec, FitResult, ModelFamily
from .synth_models import (
    GenerativeConfig,
    GroundTruth,
    RoundtripReport,
    Strategy,
    TextModel,
)
from .text_models import Lexicon, MatchMode, MessageTextStats

__all__ = [
    # 시장 데이터
    "UserRecord",
    "MessageEvent",
    "MarketDataset",
    "BuildReport",
    "Sex",
    "Education",
    # 네트워크
    "ContactGraph",
    "DesirabilityTable",
    # 격차 분석
    "GapRecord",
    "UserGapProfile",
    "BinnedCurve",
    # 텍스트
    "Lexicon",
    "MatchMode",
    "MessageTextStats",
    # 회귀
    "DesignMatrix",
    "DesignSpec",
    "FitResult",
    "ModelFamily",
    # 합성 시장
    "GenerativeConfig",
    "GroundTruth",
    "RoundtripReport",
    "Strategy",
    "TextModel",
]
