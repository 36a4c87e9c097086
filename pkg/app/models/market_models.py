"""
시장 데이터 모델
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, Optional, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

MISSING_LEVEL = "missing"

USER_COLUMNS = [
    "user_id",
    "sex",
    "city",
    "age",
    "ethnicity",
    "education",
    "body_type",
    "has_children",
    "seeking",
]
MESSAGE_COLUMNS = [
    "sender_id",
    "receiver_id",
    "timestamp",
    "word_count",
    "positive_word_count",
    "text",
]
FIRST_CONTACT_COLUMNS = MESSAGE_COLUMNS + ["replied", "is_initiation"]


class Sex(str, Enum):
    MALE = "male"
    FEMALE = "female"


class Education(str, Enum):
    NO_COLLEGE = "no_college"
    COLLEGE = "college"
    POST_COLLEGE = "post_college"


class UserRecord(BaseModel):
    """시장 참여자 한 명"""

    model_config = ConfigDict(frozen=True)

    user_id: str = Field(min_length=1, description="사용자 ID")
    sex: Sex = Field(description="성별")
    city: str = Field(min_length=1, description="도시")
    age: int = Field(ge=18, description="나이")
    ethnicity: str = Field(default=MISSING_LEVEL, description="인종")
    education: Education = Field(description="최종 학력")
    extra_attributes: Dict[str, str] = Field(
        default_factory=dict, description="체형, 자녀 동거 여부, 찾는 관계"
    )

    @field_validator("city", "ethnicity", mode="before")
    @classmethod
    def normalize_label(cls, v):
        if v is None or (isinstance(v, float) and pd.isna(v)) or str(v).strip() == "":
            return MISSING_LEVEL
        return str(v).strip().lower()

    @field_validator("sex", "education", mode="before")
    @classmethod
    def normalize_enum(cls, v):
        return str(v).strip().lower() if v is not None else v

    def to_row(self) -> Dict[str, object]:
        row = {
            "user_id": self.user_id,
            "sex": self.sex.value,
            "city": self.city,
            "age": self.age,
            "ethnicity": self.ethnicity,
            "education": self.education.value,
        }
        for column in ("body_type", "has_children", "seeking"):
            row[column] = self.extra_attributes.get(column, MISSING_LEVEL)
        return row


class MessageEvent(BaseModel):
    """메시지 이벤트"""

    model_config = ConfigDict(frozen=True)

    sender_id: str = Field(min_length=1)
    receiver_id: str = Field(min_length=1)
    timestamp: int = Field(description="epoch seconds")
    word_count: int = Field(default=0, ge=0)
    positive_word_count: Optional[int] = Field(default=None, ge=0)
    raw_text: Optional[str] = Field(default=None)

    @model_validator(mode="after")
    def check_consistency(self) -> "MessageEvent":
        if self.sender_id == self.receiver_id:
            raise ValueError("sender_id and receiver_id must differ")
        if (
            self.positive_word_count is not None
            and self.positive_word_count > self.word_count
        ):
            raise ValueError("positive_word_count exceeds word_count")
        return self

    def to_row(self) -> Dict[str, object]:
        return {
            "sender_id": self.sender_id,
            "receiver_id": self.receiver_id,
            "timestamp": self.timestamp,
            "word_count": self.word_count,
            "positive_word_count": self.positive_word_count,
            "text": self.raw_text or "",
        }


@dataclass(frozen=True)
class BuildReport:
    """build_market 처리 결과 집계"""

    input_messages: int = 0
    outside_window: int = 0
    unknown_user: int = 0
    self_messages: int = 0
    same_sex: int = 0
    duplicates: int = 0
    retained: int = 0
    inactive_users_dropped: int = 0
    non_romantic_users_dropped: int = 0

    def to_dict(self) -> Dict[str, int]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class MarketDataset:
    """Canonical single-city market.

    ``users`` has the USER_COLUMNS schema; ``first_contacts`` has
    FIRST_CONTACT_COLUMNS with one row per ordered user pair, sorted by
    timestamp (input order breaks ties).
    """

    users: pd.DataFrame
    first_contacts: pd.DataFrame
    observation_window: Tuple[int, int]
    city: str
    report: BuildReport = field(default_factory=BuildReport)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def replies(self) -> Dict[Tuple[str, str], bool]:
        frame = self.first_contacts
        return {
            (s, r): bool(flag)
            for s, r, flag in zip(frame["sender_id"], frame["receiver_id"], frame["replied"])
        }

    def user_records(self) -> Iterator[UserRecord]:
        for row in self.users.to_dict(orient="records"):
            yield UserRecord(
                user_id=row["user_id"],
                sex=row["sex"],
                city=row["city"],
                age=int(row["age"]),
                ethnicity=row["ethnicity"],
                education=row["education"],
                extra_attributes={
                    key: str(row[key]) for key in ("body_type", "has_children", "seeking")
                },
            )

    def message_events(self) -> Iterator[MessageEvent]:
        for row in self.first_contacts.to_dict(orient="records"):
            positive = row.get("positive_word_count")
            yield MessageEvent(
                sender_id=row["sender_id"],
                receiver_id=row["receiver_id"],
                timestamp=int(row["timestamp"]),
                word_count=int(row["word_count"]),
                positive_word_count=None if pd.isna(positive) else int(positive),
                raw_text=row.get("text") or None,
            )
