"""
결과 파일 저장 서비스

Every write goes to a temporary file in the target directory and is moved
into place with ``os.replace``; a failed write leaves no partial output.
"""

import json
import os
import sys
import tempfile
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, TextIO, Union

import numpy as np
import pandas as pd

from app.exceptions import StorageError
from app.utils.logging_config import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]


@contextmanager
def atomic_writer(path: PathLike) -> Iterator[TextIO]:
    """
    원자적 파일 쓰기

    Args:
        path: 최종 파일 경로

    Raises:
        StorageError: 디렉토리 생성 또는 쓰기 실패
    """
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        handle = tempfile.NamedTemporaryFile(
            "w",
            dir=target.parent,
            prefix=f".{target.name}.",
            suffix=".tmp",
            delete=False,
            encoding="utf-8",
            newline="",
        )
    except OSError as e:
        raise StorageError(f"cannot write {target}: {e}", path=str(target)) from e

    temp_path = Path(handle.name)
    try:
        with handle:
            yield handle
        os.replace(temp_path, target)
    except BaseException as e:
        # 실패 시 임시 파일 삭제
        if temp_path.exists():
            temp_path.unlink()
        if isinstance(e, OSError):
            raise StorageError(f"cannot write {target}: {e}", path=str(target)) from e
        raise
    logger.debug("file_written", path=str(target))


def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    with atomic_writer(path) as handle:
        frame.to_csv(handle, index=False)
    return Path(path)


def _default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, Enum):
        return value.value
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _finite(value: Any) -> Any:
    if isinstance(value, (np.ndarray, np.generic)):
        value = value.tolist()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def to_json(payload: Any) -> str:
    """NaN / inf 는 null 로"""
    return json.dumps(_finite(payload), default=_default, sort_keys=True)


def write_json(payload: Any, path: PathLike) -> Path:
    with atomic_writer(path) as handle:
        handle.write(to_json(payload))
        handle.write("\n")
    return Path(path)


def emit_summary(
    stage: str, stream: Optional[TextIO] = None, **fields: Any
) -> Dict[str, Any]:
    """단계별 요약 한 줄을 stdout 에 JSON 으로 출력"""
    summary = {"stage": stage, **fields}
    stream = stream or sys.stdout
    stream.write(to_json(summary) + "\n")
    stream.flush()
    return summary
