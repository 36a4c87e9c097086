"""
Environment configuration management using Pydantic BaseSettings.
"""

from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, NoDecode, SettingsConfigDict


class Settings(BaseSettings):
    """애플리케이션 설정 클래스"""

    model_config = SettingsConfigDict(
        env_prefix="LADDER_", env_file=".env", extra="ignore"
    )

    # 기본 설정
    app_name: str = "desirability-ladder"
    app_version: str = "1.0.0"
    environment: str = "development"

    # 로깅 설정
    log_level: str = Field(default="INFO")
    log_format: Literal["console", "json"] = Field(default="console")
    log_file: Optional[str] = Field(default=None)

    # PageRank 설정
    pagerank_alpha: float = Field(default=0.85)
    pagerank_tolerance: float = Field(default=1e-12)
    pagerank_max_iterations: int = Field(default=1000, ge=1)

    # 격차 분석 설정
    gap_bins: int = Field(default=20, ge=1)
    min_bin_count: int = Field(default=50, ge=1)
    kde_grid_points: int = Field(default=201, ge=3)
    kde_bandwidth: str = Field(default="silverman")
    iqr_control: Literal["log_residual", "none"] = Field(default="log_residual")

    # 회귀 설정
    glm_tolerance: float = Field(default=1e-8)
    negbin_tolerance: float = Field(default=1e-6)
    glm_max_iterations: int = Field(default=100, ge=1)
    cluster_correction: bool = Field(default=False)
    reference_levels: Dict[str, str] = Field(
        default={"city": "boston", "education": "college", "ethnicity": "asian"}
    )
    word_count_scale: float = Field(default=100.0, gt=0)

    # 시장 필터 설정
    non_romantic_seeking: Annotated[List[str], NoDecode] = Field(
        default=["friendship", "activity"]
    )

    # 실행 설정
    threads: int = Field(default=1, ge=1)
    output_dir: str = Field(default="./results")

    @field_validator("non_romantic_seeking", mode="before")
    @classmethod
    def parse_non_romantic_seeking(cls, v):
        """non_romantic_seeking 문자열을 리스트로 파싱"""
        if isinstance(v, str):
            return [item.strip().lower() for item in v.split(",") if item.strip()]
        return v

    @field_validator("pagerank_alpha")
    @classmethod
    def validate_alpha(cls, v: float) -> float:
        if not 0.0 <= v < 1.0:
            raise ValueError(f"pagerank_alpha must lie in [0, 1), got {v}")
        return v

    @field_validator("pagerank_tolerance", "glm_tolerance", "negbin_tolerance")
    @classmethod
    def validate_tolerance(cls, v: float) -> float:
        if v <= 0:
            raise ValueError(f"tolerance must be positive, got {v}")
        return v

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level {v!r}")
        return level

    @property
    def output_path(self) -> Path:
        """결과 디렉토리 경로 반환"""
        return Path(self.output_dir)


# 전역 설정 인스턴스
settings = Settings()


def get_settings() -> Settings:
    """설정 인스턴스를 반환하는 함수"""
    return settings
