"""
시장 데이터 서비스
사용자/메시지 CSV 로드, 첫 접촉 추출, 활성 사용자 필터, 요약 통계
"""

from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from app.config import Settings, get_settings
from app.exceptions import ConfigurationError, DataValidationError, InputFileError
from app.models.market_models import (
    FIRST_CONTACT_COLUMNS,
    MESSAGE_COLUMNS,
    MISSING_LEVEL,
    USER_COLUMNS,
    BuildReport,
    MarketDataset,
    MessageEvent,
    UserRecord,
)
from app.services.text_metrics_service import tokenize
from app.utils.logging_config import get_logger
from app.validators.market_validator import (
    MESSAGE_REQUIRED_COLUMNS,
    USER_REQUIRED_COLUMNS,
    MarketValidator,
    ValidationReport,
)

logger = get_logger(__name__)

UsersInput = Union[pd.DataFrame, Iterable[UserRecord]]
MessagesInput = Union[pd.DataFrame, Iterable[MessageEvent]]


def _read_csv(path: str) -> pd.DataFrame:
    csv_path = Path(path)
    if not csv_path.is_file():
        raise InputFileError(f"input file not found: {path}", path=str(path))
    try:
        frame = pd.read_csv(
            csv_path, dtype=str, keep_default_na=False, skipinitialspace=True
        )
    except pd.errors.EmptyDataError as e:
        raise InputFileError(f"{path}: file has no header", path=str(path)) from e
    frame.columns = [str(c).strip() for c in frame.columns]
    return frame


class MarketDataService:
    """시장 데이터 처리 서비스"""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()
        self.last_report: Optional[ValidationReport] = None

    def load_users(self, path: str, city: Optional[str] = None) -> List[UserRecord]:
        """
        사용자 CSV 로드

        Args:
            path: users CSV 경로
            city: 도시 필터 (None 이면 전체)

        Returns:
            해당 도시의 UserRecord 목록 (잘못된 행은 행 번호와 함께 보고)

        Raises:
            InputFileError: 파일 또는 필수 컬럼 누락
            DataValidationError: user_id 중복
        """
        frame = _read_csv(path)
        validator = MarketValidator(path)
        validator.validate_columns(frame.columns, USER_REQUIRED_COLUMNS)

        records: List[UserRecord] = []
        seen: Dict[str, int] = {}
        for offset, row in enumerate(frame.to_dict(orient="records")):
            line = offset + 2
            record = validator.validate_user_row(row, line)
            if record is None:
                continue
            if record.user_id in seen:
                raise DataValidationError(
                    f"{path}: duplicate user_id {record.user_id!r} "
                    f"(lines {seen[record.user_id]} and {line})",
                    path=str(path),
                    user_id=record.user_id,
                )
            seen[record.user_id] = line
            records.append(record)

        if city is not None:
            wanted = city.strip().lower()
            records = [r for r in records if r.city == wanted]

        self.last_report = validator.report
        logger.info(
            "users_loaded",
            path=str(path),
            city=city,
            records=len(records),
            rejected=validator.report.rows_rejected,
        )
        return records

    def load_messages(self, path: str) -> pd.DataFrame:
        """
        메시지 CSV 로드

        word_count 가 비어 있고 텍스트가 있으면 토큰 수로 채운다.

        Returns:
            MESSAGE_COLUMNS 스키마의 데이터프레임 (입력 순서 유지)
        """
        frame = _read_csv(path)
        validator = MarketValidator(path)
        validator.validate_columns(frame.columns, MESSAGE_REQUIRED_COLUMNS)

        rows = []
        for offset, raw in enumerate(frame.to_dict(orient="records")):
            row = validator.validate_message_row(raw, offset + 2)
            if row is None:
                continue
            if row["word_count"] is None:
                row["word_count"] = len(tokenize(row["text"]))
                if (
                    row["positive_word_count"] is not None
                    and row["positive_word_count"] > row["word_count"]
                ):
                    validator.report.rows_accepted -= 1
                    validator.report.add_error(
                        offset + 2, "positive_word_count exceeds word_count"
                    )
                    continue
            rows.append(row)

        self.last_report = validator.report
        logger.info(
            "messages_loaded",
            path=str(path),
            messages=len(rows),
            rejected=validator.report.rows_rejected,
        )
        return _messages_frame(pd.DataFrame(rows, columns=MESSAGE_COLUMNS))

    def build_market(
        self,
        users: UsersInput,
        messages: MessagesInput,
        window: Optional[Tuple[int, int]] = None,
        city: Optional[str] = None,
        romantic_only: bool = True,
    ) -> MarketDataset:
        """
        첫 접촉 시장 데이터셋 구성

        처리 순서: 관측 기간 필터 -> 미등록 사용자 -> 자기 자신 -> 동성 ->
        순서쌍별 최초 메시지 -> 답장 플래그 -> 활성 사용자 필터.

        Args:
            users: UserRecord 목록 또는 USER_COLUMNS 데이터프레임
            messages: MessageEvent 목록 또는 MESSAGE_COLUMNS 데이터프레임
            window: 관측 기간 [start, end] (양 끝 포함). None 이면 메시지 범위
            city: 데이터셋 도시 라벨
            romantic_only: 연애 목적이 아닌 사용자 제외 여부

        Raises:
            ConfigurationError: end <= start
        """
        user_frame = _users_frame(users)
        message_frame = _messages_frame(messages)
        input_messages = len(message_frame)

        if window is None:
            if input_messages:
                start = int(message_frame["timestamp"].min())
                end = max(int(message_frame["timestamp"].max()), start + 1)
            else:
                start, end = 0, 1
            window = (start, end)
        start, end = int(window[0]), int(window[1])
        if end <= start:
            raise ConfigurationError(
                f"observation window end ({end}) must be after start ({start})",
                window=[start, end],
            )

        non_romantic_dropped = 0
        if romantic_only and self.settings.non_romantic_seeking:
            romantic = ~user_frame["seeking"].isin(self.settings.non_romantic_seeking)
            non_romantic_dropped = int((~romantic).sum())
            user_frame = user_frame[romantic]

        # 1. 관측 기간
        ts = message_frame["timestamp"]
        in_window = (ts >= start) & (ts <= end)
        outside_window = int((~in_window).sum())
        frame = message_frame[in_window]

        # 2. 미등록 사용자
        sex_of = pd.Series(user_frame["sex"].values, index=user_frame["user_id"].values)
        known = frame["sender_id"].isin(sex_of.index) & frame["receiver_id"].isin(
            sex_of.index
        )
        unknown_user = int((~known).sum())
        frame = frame[known]

        # 3. 자기 자신에게 보낸 메시지
        is_self = frame["sender_id"] == frame["receiver_id"]
        self_messages = int(is_self.sum())
        frame = frame[~is_self]

        # 4. 동성 메시지
        same_sex = (
            sex_of.reindex(frame["sender_id"]).values
            == sex_of.reindex(frame["receiver_id"]).values
        )
        same_sex_count = int(same_sex.sum())
        frame = frame[~same_sex]

        # 5. 순서쌍별 최초 메시지 (동시각이면 입력 순서)
        frame = frame.sort_values("timestamp", kind="mergesort")
        first = frame.drop_duplicates(["sender_id", "receiver_id"], keep="first")
        duplicates = len(frame) - len(first)

        # 6. 답장 플래그 / 먼저 보낸 메시지 여부
        reverse = first[["sender_id", "receiver_id", "timestamp"]].rename(
            columns={
                "sender_id": "receiver_id",
                "receiver_id": "sender_id",
                "timestamp": "reverse_timestamp",
            }
        )
        merged = first.merge(reverse, on=["sender_id", "receiver_id"], how="left")
        reverse_ts = merged["reverse_timestamp"]
        merged["replied"] = (reverse_ts > merged["timestamp"]).fillna(False).astype(bool)
        merged["is_initiation"] = ~(reverse_ts < merged["timestamp"]).fillna(False).astype(
            bool
        )
        first_contacts = merged[FIRST_CONTACT_COLUMNS].reset_index(drop=True)

        # 7. 활성 사용자
        active = set(first_contacts["sender_id"]) | set(first_contacts["receiver_id"])
        is_active = user_frame["user_id"].isin(active)
        inactive_dropped = int((~is_active).sum())
        user_frame = user_frame[is_active].reset_index(drop=True)

        report = BuildReport(
            input_messages=input_messages,
            outside_window=outside_window,
            unknown_user=unknown_user,
            self_messages=self_messages,
            same_sex=same_sex_count,
            duplicates=duplicates,
            retained=len(first_contacts),
            inactive_users_dropped=inactive_dropped,
            non_romantic_users_dropped=non_romantic_dropped,
        )
        if city is None:
            cities = sorted(user_frame["city"].unique())
            city = cities[0] if len(cities) == 1 else ",".join(cities)

        logger.info("market_built", city=city, users=len(user_frame), **report.to_dict())
        return MarketDataset(
            users=user_frame,
            first_contacts=first_contacts,
            observation_window=(start, end),
            city=city,
            report=report,
        )

    def market_summary(self, dataset: MarketDataset) -> Dict[str, Dict[str, Any]]:
        """
        성별 요약 통계

        messages_sent 는 성별 사용자 1인당 먼저 보낸 메시지 수,
        replies_received_pct 는 그 메시지 중 답장을 받은 비율.
        """
        users = dataset.users
        contacts = dataset.first_contacts
        initiations = contacts[contacts["is_initiation"]]
        sex_of = pd.Series(users["sex"].values, index=users["user_id"].values)
        sender_sex = sex_of.reindex(initiations["sender_id"]).values

        summary: Dict[str, Dict[str, Any]] = {}
        for sex in ("male", "female"):
            group = users[users["sex"] == sex]
            count = len(group)
            sent = initiations[sender_sex == sex]
            ethnicity = (
                group["ethnicity"].value_counts(normalize=True).sort_index() * 100.0
            )
            summary[sex] = {
                "users": count,
                "ethnicity_pct": {k: float(v) for k, v in ethnicity.items()},
                "college_pct": _pct(group["education"].isin(["college", "post_college"])),
                "post_college_pct": _pct(group["education"] == "post_college"),
                "children_pct": _pct(group["has_children"] == "yes"),
                "mean_age": float(group["age"].mean()) if count else float("nan"),
                "initiations": int(len(sent)),
                "mean_messages_sent": len(sent) / count if count else float("nan"),
                "replies_received_pct": _pct(sent["replied"]),
            }
        return summary

    def received_histogram(self, dataset: MarketDataset) -> pd.DataFrame:
        """사용자별 받은 첫 메시지 수 분포 (성별)"""
        users = dataset.users
        contacts = dataset.first_contacts
        received = (
            contacts[contacts["is_initiation"]]
            .groupby("receiver_id")
            .size()
            .reindex(users["user_id"], fill_value=0)
        )
        frame = pd.DataFrame(
            {"sex": users["sex"].values, "messages_received": received.values}
        )
        return (
            frame.groupby(["sex", "messages_received"])
            .size()
            .rename("users")
            .reset_index()
        )

    def attribute_histogram(self, dataset: MarketDataset, column: str) -> pd.DataFrame:
        """인구통계 속성 값별 사용자 수 (성별)"""
        if column not in dataset.users.columns:
            raise DataValidationError(f"unknown user attribute {column!r}", column=column)
        return (
            dataset.users.groupby(["sex", column])
            .size()
            .rename("users")
            .reset_index()
            .rename(columns={column: "level"})
        )


def _pct(mask: pd.Series) -> float:
    return float(mask.mean() * 100.0) if len(mask) else float("nan")


def _users_frame(users: UsersInput) -> pd.DataFrame:
    if isinstance(users, pd.DataFrame):
        frame = users.copy()
    else:
        frame = pd.DataFrame([u.to_row() for u in users], columns=USER_COLUMNS)
    for column in USER_COLUMNS:
        if column not in frame.columns:
            frame[column] = MISSING_LEVEL
    frame = frame[USER_COLUMNS].reset_index(drop=True)
    frame["user_id"] = frame["user_id"].astype(str)
    frame["age"] = frame["age"].astype(np.int64)
    return frame


def _messages_frame(messages: MessagesInput) -> pd.DataFrame:
    if isinstance(messages, pd.DataFrame):
        frame = messages.copy()
    else:
        frame = pd.DataFrame([m.to_row() for m in messages], columns=MESSAGE_COLUMNS)
    if "word_count" not in frame.columns:
        frame["word_count"] = 0
    if "positive_word_count" not in frame.columns:
        frame["positive_word_count"] = pd.NA
    if "text" not in frame.columns:
        frame["text"] = ""
    frame = frame[MESSAGE_COLUMNS].reset_index(drop=True)
    frame["sender_id"] = frame["sender_id"].astype(str)
    frame["receiver_id"] = frame["receiver_id"].astype(str)
    frame["timestamp"] = frame["timestamp"].astype(np.int64)
    frame["word_count"] = pd.array(frame["word_count"].fillna(0), dtype="Int64")
    frame["positive_word_count"] = pd.array(
        frame["positive_word_count"].astype(object).where(
            frame["positive_word_count"].notna(), None
        ),
        dtype="Int64",
    )
    frame["text"] = frame["text"].fillna("").astype(str)
    return frame
