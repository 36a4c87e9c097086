"""
메시지 텍스트 지표 서비스
단어 수, 긍정어 수, 긍정어 비율 계산
"""

import string
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from app.config import get_settings
from app.exceptions import DataValidationError, InputFileError
from app.models.text_models import Lexicon, MatchMode, MessageTextStats
from app.utils.logging_config import get_logger

logger = get_logger(__name__)

# ASCII punctuation plus the typographic quotes and dashes common in messages
EDGE_PUNCTUATION = string.punctuation + "‘’“”…–—¡¿"


def tokenize(text: Optional[str]) -> List[str]:
    """Split on whitespace, strip edge punctuation, lowercase, drop empties."""
    if not text:
        return []
    tokens = (raw.strip(EDGE_PUNCTUATION).lower() for raw in text.split())
    return [token for token in tokens if token]


def score_message(text: Optional[str], lexicon: Lexicon) -> MessageTextStats:
    tokens = tokenize(text)
    positive = sum(1 for token in tokens if lexicon.matches(token))
    return MessageTextStats(word_count=len(tokens), positive_count=positive)


def load_lexicon(
    path: str, match_mode: MatchMode = MatchMode.PREFIX_WILDCARD
) -> Lexicon:
    """
    감성 사전 파일 로드

    한 줄에 한 단어, ``*`` 접미사는 접두어 매칭, ``#`` 이후는 주석.

    Args:
        path: 사전 파일 경로
        match_mode: 매칭 방식

    Returns:
        Lexicon

    Raises:
        InputFileError: 파일 없음
        DataValidationError: 빈 사전 또는 잘못된 단어
    """
    lexicon_path = Path(path)
    if not lexicon_path.is_file():
        raise InputFileError(f"lexicon file not found: {path}", path=str(path))

    terms = set()
    with lexicon_path.open(encoding="utf-8") as handle:
        for line in handle:
            term = line.split("#", 1)[0].strip().lower()
            if term:
                terms.add(term)

    try:
        lexicon = Lexicon(positive_terms=frozenset(terms), match_mode=match_mode)
    except ValidationError as e:
        raise DataValidationError(
            f"{path}: invalid lexicon ({e.errors()[0]['msg']})", path=str(path)
        ) from e

    logger.info(
        "lexicon_loaded",
        path=str(path),
        terms=len(lexicon.positive_terms),
        prefixes=len(lexicon.prefixes),
    )
    return lexicon


def _score_chunk(texts: Sequence[str], lexicon: Lexicon) -> List[MessageTextStats]:
    return [score_message(text, lexicon) for text in texts]


def score_messages(
    frame: pd.DataFrame, lexicon: Lexicon, threads: Optional[int] = None
) -> pd.DataFrame:
    """
    텍스트가 있는 메시지 행의 word_count / positive_word_count 채우기

    텍스트가 없는 행은 그대로 둔다. 결과 순서는 스레드 수와 무관하다.

    Args:
        frame: MESSAGE_COLUMNS 스키마의 데이터프레임
        lexicon: 감성 사전
        threads: 작업 스레드 수 (None 이면 설정값)

    Returns:
        갱신된 복사본
    """
    threads = threads or get_settings().threads
    result = frame.copy()
    if "text" not in result.columns or result.empty:
        return result

    texts = result["text"].fillna("").astype(str)
    mask = texts.str.strip() != ""
    selected = texts[mask].tolist()
    if not selected:
        return result

    chunk = max(1, -(-len(selected) // threads))
    chunks = [selected[i : i + chunk] for i in range(0, len(selected), chunk)]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        scored = [
            stats for part in executor.map(_score_chunk, chunks, [lexicon] * len(chunks))
            for stats in part
        ]

    result["word_count"] = result["word_count"].astype("Int64")
    result["positive_word_count"] = result["positive_word_count"].astype("Int64")
    result.loc[mask, "word_count"] = [s.word_count for s in scored]
    result.loc[mask, "positive_word_count"] = [s.positive_count for s in scored]

    logger.info("messages_scored", scored=len(scored), threads=threads)
    return result


def text_stats_frame(frame: pd.DataFrame) -> pd.DataFrame:
    """word_count, positive_fraction, pct_positive, scaled_word_count 컬럼"""
    words = pd.to_numeric(frame["word_count"], errors="coerce")
    positive = pd.to_numeric(frame["positive_word_count"], errors="coerce")
    fraction = positive / words.clip(lower=1)
    return pd.DataFrame(
        {
            "word_count": words,
            "positive_fraction": fraction,
            "pct_positive": fraction * 100.0,
            "scaled_word_count": words / get_settings().word_count_scale,
        },
        index=frame.index,
    )
