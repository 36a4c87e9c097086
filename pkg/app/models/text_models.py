"""
감성 사전 및 메시지 텍스트 통계 모델
"""

from enum import Enum
from functools import cached_property
from typing import FrozenSet

from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

WILDCARD = "*"


class MatchMode(str, Enum):
    EXACT = "exact"
    PREFIX_WILDCARD = "prefix-wildcard"


class Lexicon(BaseModel):
    """긍정어 사전"""

    model_config = ConfigDict(frozen=True)

    positive_terms: FrozenSet[str] = Field(description="소문자 단어 또는 접두어*")
    match_mode: MatchMode = Field(default=MatchMode.PREFIX_WILDCARD)

    @model_validator(mode="after")
    def check_terms(self) -> "Lexicon":
        if not self.positive_terms:
            raise ValueError("lexicon must contain at least one term")
        for term in self.positive_terms:
            if term != term.lower():
                raise ValueError(f"lexicon term {term!r} is not lowercase")
            stem = term[:-1] if term.endswith(WILDCARD) else term
            if not stem or WILDCARD in stem:
                raise ValueError(
                    f"lexicon term {term!r} must carry at most one trailing {WILDCARD}"
                )
            if term.endswith(WILDCARD) and self.match_mode is MatchMode.EXACT:
                raise ValueError(f"wildcard term {term!r} in an exact-match lexicon")
        return self

    @cached_property
    def exact_terms(self) -> FrozenSet[str]:
        return frozenset(t for t in self.positive_terms if not t.endswith(WILDCARD))

    @cached_property
    def prefixes(self) -> FrozenSet[str]:
        return frozenset(t[:-1] for t in self.positive_terms if t.endswith(WILDCARD))

    def matches(self, token: str) -> bool:
        if token in self.exact_terms:
            return True
        if self.match_mode is MatchMode.EXACT:
            return False
        prefixes = self.prefixes
        return any(token[:k] in prefixes for k in range(1, len(token) + 1))


class MessageTextStats(BaseModel):
    """메시지 한 건의 단어 통계"""

    model_config = ConfigDict(frozen=True)

    word_count: int = Field(ge=0)
    positive_count: int = Field(ge=0)

    @model_validator(mode="after")
    def check_counts(self) -> "MessageTextStats":
        if self.positive_count > self.word_count:
            raise ValueError("positive_count exceeds word_count")
        return self

    @computed_field
    @property
    def positive_fraction(self) -> float:
        return self.positive_count / max(self.word_count, 1)

    @computed_field
    @property
    def scaled_word_count(self) -> float:
        return self.word_count / 100.0

    @property
    def percent_positive(self) -> float:
        return self.positive_fraction * 100.0
