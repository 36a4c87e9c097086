"""
Pytest configuration and shared fixtures.

Fixtures write small CSV markets to tmp_path and build synthetic markets that
several test modules share.
"""

import csv
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Sequence

import pytest

from app.config import Settings
from app.models.market_models import (
    MESSAGE_COLUMNS,
    USER_COLUMNS,
    MessageEvent,
    UserRecord,
)
from app.models.synth_models import GenerativeConfig, Strategy
from app.services.synth_market_service import generate_market

CsvWriter = Callable[[str, Sequence[str], Iterable[Sequence[object]]], Path]


@pytest.fixture
def test_settings() -> Settings:
    """Settings with defaults, isolated from any local .env file."""
    return Settings(_env_file=None)


@pytest.fixture
def write_csv(tmp_path: Path) -> CsvWriter:
    """Write rows under a header into tmp_path and return the path."""

    def _write(
        name: str, header: Sequence[str], rows: Iterable[Sequence[object]]
    ) -> Path:
        path = tmp_path / name
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
        return path

    return _write


def user(
    user_id: str,
    sex: str,
    age: int = 30,
    city: str = "boston",
    education: str = "college",
    ethnicity: str = "white",
    **extra: str,
) -> UserRecord:
    return UserRecord(
        user_id=user_id,
        sex=sex,
        city=city,
        age=age,
        ethnicity=ethnicity,
        education=education,
        extra_attributes={"seeking": "dating", **extra},
    )


def message(
    sender: str, receiver: str, timestamp: int, words: int = 10
) -> MessageEvent:
    return MessageEvent(
        sender_id=sender, receiver_id=receiver, timestamp=timestamp, word_count=words
    )


@pytest.fixture
def two_node_files(write_csv: CsvWriter) -> Dict[str, Path]:
    """m1 writes to f1 once, no reply: PageRank scores 1 and 1.85."""
    users = write_csv(
        "users.csv",
        USER_COLUMNS,
        [
            ["m1", "male", "boston", 30, "white", "college", "average", "no", "dating"],
            ["f1", "female", "boston", 29, "asian", "college", "thin", "no", "dating"],
        ],
    )
    messages = write_csv(
        "messages.csv",
        MESSAGE_COLUMNS[:4],
        [["m1", "f1", 100, 12]],
    )
    return {"users": users, "messages": messages}


@pytest.fixture
def small_users() -> List[UserRecord]:
    return [
        user("m1", "male", 25),
        user("m2", "male", 31, education="post_college"),
        user("m3", "male", 40, education="no_college"),
        user("f1", "female", 27),
        user("f2", "female", 33, ethnicity="asian"),
        user("f3", "female", 38, has_children="yes"),
    ]


@pytest.fixture
def small_messages() -> List[MessageEvent]:
    return [
        message("m1", "f1", 10),
        message("f1", "m1", 20),
        message("m2", "f1", 15),
        message("m3", "f2", 30),
        message("f2", "m3", 40),
        message("f3", "m2", 50),
        message("m1", "f1", 60),
    ]


def synthetic_config(**overrides) -> GenerativeConfig:
    values = dict(
        n_men=300,
        n_women=300,
        strategy=Strategy.HYBRID,
        reach=0.25,
        gap_noise=0.1,
        mean_contacts=8.0,
        reply_slope=-2.0,
        seed=11,
    )
    values.update(overrides)
    return GenerativeConfig(**values)


@pytest.fixture(scope="session")
def hybrid_market():
    """A small hybrid market shared by read-only tests."""
    return generate_market(synthetic_config())
