"""
시장 데이터 검증 시스템
CSV 헤더, 사용자 행, 메시지 행 검증 및 행 번호 단위 오류 보고를 담당
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional

import pandas as pd
from pydantic import ValidationError

from app.exceptions import InputFileError
from app.models.market_models import MISSING_LEVEL, UserRecord
from app.utils.logging_config import get_logger

logger = get_logger(__name__)

USER_REQUIRED_COLUMNS = ["user_id", "sex", "city", "age", "education"]
USER_OPTIONAL_COLUMNS = ["ethnicity", "body_type", "has_children", "seeking"]
MESSAGE_REQUIRED_COLUMNS = ["sender_id", "receiver_id", "timestamp"]
MESSAGE_OPTIONAL_COLUMNS = ["word_count", "positive_word_count", "text"]

_CHILDREN_YES = {"yes", "y", "true", "1", "has_children", "at_home"}
_CHILDREN_NO = {"no", "n", "false", "0", "none"}


@dataclass
class RowIssue:
    """행 단위 문제"""

    line: int
    reason: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.reason}"


@dataclass
class ValidationReport:
    """파일 하나에 대한 검증 결과"""

    path: str
    rows_read: int = 0
    rows_accepted: int = 0
    errors: List[RowIssue] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.errors

    @property
    def rows_rejected(self) -> int:
        return len(self.errors)

    def add_error(self, line: int, reason: str) -> None:
        self.errors.append(RowIssue(line=line, reason=reason))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "path": self.path,
            "is_valid": self.is_valid,
            "rows_read": self.rows_read,
            "rows_accepted": self.rows_accepted,
            "errors": [str(issue) for issue in self.errors],
            "warnings": list(self.warnings),
        }


def _blank(value: Any) -> bool:
    return value is None or (isinstance(value, float) and pd.isna(value)) or str(
        value
    ).strip() == ""


def _parse_int(value: Any, name: str) -> int:
    text = str(value).strip()
    try:
        return int(text)
    except ValueError:
        number = float(text)
        if not number.is_integer():
            raise ValueError(f"{name} must be an integer, got {text!r}")
        return int(number)


class MarketValidator:
    """사용자/메시지 CSV 검증 클래스"""

    def __init__(self, path: str):
        self.report = ValidationReport(path=str(path))

    def validate_columns(
        self, columns: Iterable[str], required: List[str]
    ) -> None:
        """
        필수 컬럼 존재 여부 검증

        Args:
            columns: CSV 헤더
            required: 필수 컬럼 목록

        Raises:
            InputFileError: 필수 컬럼 누락 시
        """
        present = {str(c).strip() for c in columns}
        missing = [c for c in required if c not in present]
        if missing:
            raise InputFileError(
                f"{self.report.path}: missing required column(s) {', '.join(missing)}",
                path=self.report.path,
                missing=missing,
            )

    def validate_user_row(self, row: Dict[str, Any], line: int) -> Optional[UserRecord]:
        """
        사용자 행 검증

        Args:
            row: CSV 행 (컬럼명 -> 문자열)
            line: 파일 내 행 번호 (헤더 = 1)

        Returns:
            검증된 UserRecord, 실패 시 None (오류는 보고서에 기록)
        """
        self.report.rows_read += 1
        try:
            if _blank(row.get("user_id")):
                raise ValueError("user_id is empty")
            if _blank(row.get("age")):
                raise ValueError("age is empty")
            extra = {
                "body_type": self._label(row.get("body_type")),
                "has_children": self.normalize_children(row.get("has_children")),
                "seeking": self._label(row.get("seeking")),
            }
            record = UserRecord(
                user_id=str(row["user_id"]).strip(),
                sex=row.get("sex"),
                city=row.get("city"),
                age=_parse_int(row["age"], "age"),
                ethnicity=row.get("ethnicity"),
                education=row.get("education"),
                extra_attributes=extra,
            )
        except (ValidationError, ValueError) as e:
            self._reject(line, e)
            return None

        self.report.rows_accepted += 1
        return record

    def validate_message_row(
        self, row: Dict[str, Any], line: int
    ) -> Optional[Dict[str, Any]]:
        """
        메시지 행 검증

        자기 자신에게 보낸 메시지는 여기서 거르지 않는다 (build_market 에서 집계).

        Args:
            row: CSV 행
            line: 파일 내 행 번호

        Returns:
            정규화된 메시지 행, 실패 시 None
        """
        self.report.rows_read += 1
        try:
            sender = str(row.get("sender_id") or "").strip()
            receiver = str(row.get("receiver_id") or "").strip()
            if not sender or not receiver:
                raise ValueError("sender_id and receiver_id are required")
            if _blank(row.get("timestamp")):
                raise ValueError("timestamp is empty")
            timestamp = _parse_int(row["timestamp"], "timestamp")

            text = "" if _blank(row.get("text")) else str(row["text"])
            word_count = (
                None
                if _blank(row.get("word_count"))
                else _parse_int(row["word_count"], "word_count")
            )
            positive = (
                None
                if _blank(row.get("positive_word_count"))
                else _parse_int(row["positive_word_count"], "positive_word_count")
            )
            if word_count is not None and word_count < 0:
                raise ValueError("word_count must be nonnegative")
            if positive is not None:
                if positive < 0:
                    raise ValueError("positive_word_count must be nonnegative")
                if word_count is not None and positive > word_count:
                    raise ValueError("positive_word_count exceeds word_count")
        except ValueError as e:
            self._reject(line, e)
            return None

        self.report.rows_accepted += 1
        return {
            "sender_id": sender,
            "receiver_id": receiver,
            "timestamp": timestamp,
            "word_count": word_count,
            "positive_word_count": positive,
            "text": text,
        }

    @staticmethod
    def normalize_children(value: Any) -> str:
        """자녀 동거 여부를 yes / no / missing 으로 정규화"""
        if _blank(value):
            return MISSING_LEVEL
        text = str(value).strip().lower()
        if text in _CHILDREN_YES:
            return "yes"
        if text in _CHILDREN_NO:
            return "no"
        return MISSING_LEVEL

    @staticmethod
    def _label(value: Any) -> str:
        return MISSING_LEVEL if _blank(value) else str(value).strip().lower()

    def _reject(self, line: int, error: Exception) -> None:
        if isinstance(error, ValidationError):
            reason = "; ".join(
                f"{'.'.join(str(p) for p in item['loc']) or 'row'}: {item['msg']}"
                for item in error.errors()
            )
        else:
            reason = str(error)
        self.report.add_error(line, reason)
        logger.warning(
            "malformed_row", path=self.report.path, line=line, reason=reason
        )
