"""
매력도 격차 분석 서비스
격차 기록, 발신자별 요약, 밀도 추정, 격차별 곡선
"""

from typing import Callable, Dict, Iterable, Optional, Union

import numpy as np
import pandas as pd
from scipy import stats
from scipy.integrate import trapezoid

from app.config import Settings, get_settings
from app.exceptions import ConfigurationError, DataValidationError
from app.models.gap_models import (
    GAP_RECORD_COLUMNS,
    PROFILE_COLUMNS,
    BinnedCurve,
    GapRecord,
    UserGapProfile,
    profiles_to_frame,
    records_to_frame,
)
from app.models.graph_models import DesirabilityTable
from app.models.market_models import MarketDataset
from app.utils.logging_config import get_logger

logger = get_logger(__name__)

GapsInput = Union[pd.DataFrame, Iterable[GapRecord]]
ProfilesInput = Union[pd.DataFrame, Iterable[UserGapProfile]]

_KDE_CHUNK = 4096


def desirability_gap(sender_rank: float, receiver_rank: float) -> float:
    """receiver_rank - sender_rank"""
    for name, value in (("sender_rank", sender_rank), ("receiver_rank", receiver_rank)):
        if not 0.0 <= value <= 1.0:
            raise DataValidationError(
                f"{name} must lie in [0, 1], got {value}", **{name: value}
            )
    return float(receiver_rank - sender_rank)


def _gaps_frame(gaps: GapsInput) -> pd.DataFrame:
    return gaps if isinstance(gaps, pd.DataFrame) else records_to_frame(gaps)


def _profiles_frame(profiles: ProfilesInput) -> pd.DataFrame:
    if isinstance(profiles, pd.DataFrame):
        return profiles
    return profiles_to_frame(profiles)


def build_gap_records(dataset: MarketDataset, table: DesirabilityTable) -> pd.DataFrame:
    """
    먼저 보낸 첫 접촉마다 격차 기록 한 행

    발신자와 수신자 모두 순위가 있는 접촉만 포함한다.

    Returns:
        GAP_RECORD_COLUMNS 스키마의 데이터프레임
    """
    ranks = table.rank_lookup()
    contacts = dataset.first_contacts
    contacts = contacts[contacts["is_initiation"]]
    ranked = contacts["sender_id"].isin(ranks.index) & contacts["receiver_id"].isin(
        ranks.index
    )
    contacts = contacts[ranked]

    sender_rank = ranks.reindex(contacts["sender_id"]).to_numpy(dtype=float)
    receiver_rank = ranks.reindex(contacts["receiver_id"]).to_numpy(dtype=float)
    users = dataset.users.set_index("user_id")
    words = pd.to_numeric(contacts["word_count"], errors="coerce").to_numpy(dtype=float)
    positive = pd.to_numeric(contacts["positive_word_count"], errors="coerce").to_numpy(
        dtype=float
    )
    fraction = positive / np.maximum(words, 1.0)

    frame = pd.DataFrame(
        {
            "sender_id": contacts["sender_id"].to_numpy(),
            "receiver_id": contacts["receiver_id"].to_numpy(),
            "sender_sex": users["sex"].reindex(contacts["sender_id"]).to_numpy(),
            "city": users["city"].reindex(contacts["sender_id"]).to_numpy(),
            "timestamp": contacts["timestamp"].to_numpy(),
            "sender_rank": sender_rank,
            "receiver_rank": receiver_rank,
            "gap": receiver_rank - sender_rank,
            "replied": contacts["replied"].to_numpy(dtype=bool),
            "word_count": words,
            "positive_fraction": fraction,
            "pct_positive": fraction * 100.0,
        },
        columns=GAP_RECORD_COLUMNS,
    )
    logger.info(
        "gap_records_built",
        records=len(frame),
        unranked_skipped=int((~ranked).sum()),
    )
    return frame


def user_gap_profiles(gaps: GapsInput) -> pd.DataFrame:
    """
    발신자별 격차 중앙값, 평균, IQR, 접촉 수

    백분위수는 가장 가까운 두 순위 사이 선형 보간.
    """
    frame = _gaps_frame(gaps)
    if frame.empty:
        return pd.DataFrame(columns=PROFILE_COLUMNS)

    grouped = frame.groupby("sender_id", sort=True)
    gap = grouped["gap"]
    q25 = gap.quantile(0.25)
    q75 = gap.quantile(0.75)
    profiles = pd.DataFrame(
        {
            "user_id": q25.index,
            "sex": grouped["sender_sex"].first().to_numpy()
            if "sender_sex" in frame
            else None,
            "city": grouped["city"].first().to_numpy() if "city" in frame else None,
            "median_gap": gap.median().to_numpy(),
            "mean_gap": gap.mean().to_numpy(),
            "iqr_gap": (q75 - q25).clip(lower=0.0).to_numpy(),
            "n_contacted": gap.size().to_numpy(),
        },
        columns=PROFILE_COLUMNS,
    )
    return profiles.reset_index(drop=True)


def silverman_bandwidth(values: np.ndarray) -> float:
    std = float(np.std(values, ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    spread = min(std, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = std
    return 0.9 * spread * len(values) ** (-0.2)


def scott_bandwidth(values: np.ndarray) -> float:
    return 1.06 * float(np.std(values, ddof=1)) * len(values) ** (-0.2)


BANDWIDTH_METHODS: Dict[str, Callable[[np.ndarray], float]] = {
    "silverman": silverman_bandwidth,
    "scott": scott_bandwidth,
}


def gap_density(
    values: Iterable[float],
    bandwidth: Union[str, float, None] = None,
    grid_points: Optional[int] = None,
    settings: Optional[Settings] = None,
) -> BinnedCurve:
    """
    가우시안 커널 밀도 추정 ([-1, 1] 균등 격자, 사다리꼴 적분 = 1)

    Args:
        values: 격차 값 (보통 발신자별 중앙값)
        bandwidth: 양수 또는 "silverman" / "scott"
        grid_points: 격자 점 개수

    Raises:
        DataValidationError: 값이 2 개 미만
        ConfigurationError: 알 수 없는 대역폭 규칙
    """
    settings = settings or get_settings()
    bandwidth = settings.kde_bandwidth if bandwidth is None else bandwidth
    grid_points = grid_points or settings.kde_grid_points

    data = np.asarray(list(values), dtype=float)
    data = data[np.isfinite(data)]
    if data.size < 2:
        raise DataValidationError(
            f"density estimation needs at least 2 values, got {data.size}"
        )

    grid = np.linspace(-1.0, 1.0, grid_points)
    step = grid[1] - grid[0]
    if isinstance(bandwidth, str):
        method = BANDWIDTH_METHODS.get(bandwidth.lower())
        if method is None:
            raise ConfigurationError(
                f"unknown bandwidth rule {bandwidth!r}; "
                f"expected a positive number or one of {sorted(BANDWIDTH_METHODS)}"
            )
        h = method(data)
    else:
        h = float(bandwidth)
        if h <= 0:
            raise ConfigurationError(f"bandwidth must be positive, got {h}")
    if not np.isfinite(h) or h <= 0:
        h = step

    density = np.zeros_like(grid)
    for begin in range(0, data.size, _KDE_CHUNK):
        chunk = data[begin : begin + _KDE_CHUNK]
        density += stats.norm.pdf((grid[:, None] - chunk[None, :]) / h).sum(axis=1)
    density /= data.size * h

    area = trapezoid(density, grid)
    if area <= 0:
        raise DataValidationError("density has no mass on [-1, 1]")
    density /= area

    logger.debug("gap_density", values=int(data.size), bandwidth=h)
    return BinnedCurve(bin_centers=grid, values=density, label="density")


def _binned(
    x: np.ndarray,
    y: np.ndarray,
    n_bins: int,
    min_count: int,
    standard_error: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    label: str,
) -> BinnedCurve:
    """관측 범위를 같은 폭 구간으로 나눠 평균, 최소 개수 미만 구간은 생략"""
    if n_bins < 1:
        raise ConfigurationError(f"n_bins must be positive, got {n_bins}")
    if x.size == 0:
        return BinnedCurve.empty(label=label)

    lo, hi = float(np.min(x)), float(np.max(x))
    if hi > lo:
        edges = np.linspace(lo, hi, n_bins + 1)
        index = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_bins - 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
    else:
        index = np.zeros(x.size, dtype=np.int64)
        centers = np.array([lo])

    size = centers.size
    counts = np.bincount(index, minlength=size)
    sums = np.bincount(index, weights=y, minlength=size)
    squares = np.bincount(index, weights=y * y, minlength=size)

    keep = (counts >= min_count) & (counts > 0)
    omitted = int(counts[~keep].sum())
    n = counts[keep]
    means = sums[keep] / n
    errors = standard_error(means, squares[keep] / n, n)

    if omitted:
        logger.debug("sparse_bins_omitted", label=label, omitted=omitted)
    return BinnedCurve(
        bin_centers=centers[keep],
        values=means,
        counts=n.astype(np.int64),
        standard_errors=errors,
        omitted=omitted,
        label=label,
    )


def _binomial_se(mean: np.ndarray, _: np.ndarray, n: np.ndarray) -> np.ndarray:
    return np.sqrt(mean * (1.0 - mean) / n)


def _mean_se(mean: np.ndarray, mean_square: np.ndarray, n: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        variance = (mean_square - mean**2) * n / (n - 1)
        return np.where(n > 1, np.sqrt(np.clip(variance, 0.0, None) / n), np.nan)


def reply_rate_by_gap(
    gaps: GapsInput,
    n_bins: Optional[int] = None,
    min_count: Optional[int] = None,
    settings: Optional[Settings] = None,
) -> BinnedCurve:
    """격차 구간별 답장 비율 (이항 표준오차)"""
    settings = settings or get_settings()
    frame = _gaps_frame(gaps)
    return _binned(
        frame["gap"].to_numpy(dtype=float),
        frame["replied"].to_numpy(dtype=float),
        n_bins or settings.gap_bins,
        settings.min_bin_count if min_count is None else min_count,
        _binomial_se,
        "reply_rate",
    )


def volume_by_gap(
    profiles: ProfilesInput,
    n_bins: Optional[int] = None,
    min_count: Optional[int] = None,
    settings: Optional[Settings] = None,
) -> BinnedCurve:
    """평균 격차 구간별 평균 접촉 수"""
    settings = settings or get_settings()
    frame = _profiles_frame(profiles)
    return _binned(
        frame["mean_gap"].to_numpy(dtype=float),
        frame["n_contacted"].to_numpy(dtype=float),
        n_bins or settings.gap_bins,
        settings.min_bin_count if min_count is None else min_count,
        _mean_se,
        "volume",
    )


def iqr_by_gap(
    profiles: ProfilesInput,
    n_bins: Optional[int] = None,
    min_count: Optional[int] = None,
    control: Optional[str] = None,
    settings: Optional[Settings] = None,
) -> BinnedCurve:
    """
    평균 격차 구간별 IQR (접촉 수 통제)

    control="log_residual": iqr 을 log(n_contacted) 에 회귀한 잔차 + 전체 평균.
    control="none": 원래 iqr.
    """
    settings = settings or get_settings()
    control = control or settings.iqr_control
    frame = _profiles_frame(profiles)
    iqr = frame["iqr_gap"].to_numpy(dtype=float)

    if control == "log_residual" and iqr.size:
        log_n = np.log(frame["n_contacted"].to_numpy(dtype=float))
        design = np.column_stack([np.ones_like(log_n), log_n])
        coef, *_ = np.linalg.lstsq(design, iqr, rcond=None)
        iqr = iqr - design @ coef + iqr.mean()
    elif control not in ("log_residual", "none"):
        raise ConfigurationError(f"unknown IQR control {control!r}")

    return _binned(
        frame["mean_gap"].to_numpy(dtype=float),
        iqr,
        n_bins or settings.gap_bins,
        settings.min_bin_count if min_count is None else min_count,
        _mean_se,
        "iqr",
    )


def _pearson(x: np.ndarray, y: np.ndarray, what: str) -> float:
    if x.size < 2:
        raise DataValidationError(f"{what}: need at least 2 observations, got {x.size}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DataValidationError(f"{what}: zero variance in one margin")
    r = stats.pearsonr(x, y).statistic
    return float(np.clip(r, -1.0, 1.0))


def sender_receiver_correlation(
    gaps: GapsInput, ranks: Optional[DesirabilityTable] = None
) -> float:
    """첫 접촉의 발신자 순위와 수신자 순위 사이 Pearson 상관"""
    frame = _gaps_frame(gaps)
    has_ranks = {"sender_rank", "receiver_rank"} <= set(frame.columns) and not (
        frame[["sender_rank", "receiver_rank"]].isna().any().any()
    )
    if has_ranks:
        sender = frame["sender_rank"].to_numpy(dtype=float)
        receiver = frame["receiver_rank"].to_numpy(dtype=float)
    else:
        if ranks is None:
            raise DataValidationError("gap records carry no ranks and no table given")
        lookup = ranks.rank_lookup()
        sender = lookup.reindex(frame["sender_id"]).to_numpy(dtype=float)
        receiver = lookup.reindex(frame["receiver_id"]).to_numpy(dtype=float)
    return _pearson(sender, receiver, "sender/receiver correlation")


def absolute_gap_success_correlation(gaps: GapsInput) -> float:
    """
    발신자별 평균 |격차| 와 답장 성공률의 상관

    절대 격차는 위/아래 방향을 지우므로 격차의 비대칭을 보지 못한다.
    """
    frame = _gaps_frame(gaps)
    grouped = frame.assign(abs_gap=frame["gap"].abs()).groupby("sender_id")
    mean_abs = grouped["abs_gap"].mean().to_numpy(dtype=float)
    success = grouped["replied"].mean().to_numpy(dtype=float)
    return _pearson(mean_abs, success, "absolute gap/success correlation")


def desirability_profile(
    table: DesirabilityTable, users: pd.DataFrame, attribute: str
) -> pd.DataFrame:
    """인구통계 수준별 평균 척도화 순위 (±1 표준오차), 성별"""
    if attribute not in users.columns:
        raise DataValidationError(f"unknown user attribute {attribute!r}")
    ranked = table.to_frame()
    if "scaled_rank" not in ranked:
        raise DataValidationError("scaled ranks have not been computed")
    merged = ranked.merge(users[["user_id", attribute]], on="user_id", how="inner")
    grouped = merged.groupby(["sex", attribute])["scaled_rank"]
    summary = grouped.agg(["mean", "std", "count"]).reset_index()
    summary["standard_error"] = summary["std"] / np.sqrt(summary["count"])
    return summary.rename(
        columns={attribute: "level", "mean": "mean_scaled_rank"}
    )[["sex", "level", "mean_scaled_rank", "standard_error", "count"]]


def strata(frame: pd.DataFrame, sex_column: str = "sender_sex"):
    """(성별, 도시) 층별 반복"""
    for (sex, city), group in frame.groupby([sex_column, "city"], sort=True):
        yield sex, city, group
