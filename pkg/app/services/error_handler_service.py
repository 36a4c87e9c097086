"""
실행 에러 처리 시스템

Every CLI failure passes through ``ErrorHandlerService.handle``: classify the
exception, log it, and turn it into an exit code plus a one-line diagnostic.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional

from pydantic import ValidationError
from pydantic_settings import SettingsError

from app.exceptions import ErrorType, LadderError
from app.utils.logging_config import get_logger

logger = get_logger(__name__)

EXIT_CODES: Dict[ErrorType, int] = {
    ErrorType.INPUT_FILE_ERROR: 2,
    ErrorType.VALIDATION_ERROR: 3,
    ErrorType.CONFIGURATION_ERROR: 4,
    ErrorType.CONVERGENCE_ERROR: 5,
    ErrorType.MODEL_SPECIFICATION_ERROR: 6,
    ErrorType.STORAGE_ERROR: 7,
    ErrorType.UNKNOWN_ERROR: 1,
}

_PREFIXES: Dict[ErrorType, str] = {
    ErrorType.INPUT_FILE_ERROR: "input error",
    ErrorType.VALIDATION_ERROR: "invalid data",
    ErrorType.CONFIGURATION_ERROR: "invalid parameter",
    ErrorType.CONVERGENCE_ERROR: "did not converge",
    ErrorType.MODEL_SPECIFICATION_ERROR: "model specification error",
    ErrorType.STORAGE_ERROR: "cannot write output",
    ErrorType.UNKNOWN_ERROR: "unexpected error",
}


@dataclass(frozen=True)
class ErrorResponse:
    """CLI 가 출력할 에러 응답"""

    error_type: ErrorType
    exit_code: int
    message: str
    context: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error_type": self.error_type.value,
            "exit_code": self.exit_code,
            "message": self.message,
            **self.context,
        }


class ErrorHandlerService:
    """실행 에러 처리 서비스"""

    def handle(
        self, error: BaseException, stage: Optional[str] = None
    ) -> ErrorResponse:
        """
        에러 처리

        Args:
            error: 발생한 예외
            stage: 실패한 단계 이름

        Returns:
            종료 코드와 진단 메시지
        """
        # 1. 에러 타입 분류
        error_type = self.classify(error)

        # 2. 진단 메시지 생성
        message = self.describe(error_type, error)
        context = dict(getattr(error, "context", {}) or {})
        if stage:
            context["stage"] = stage

        # 3. 로그 기록
        log = logger.error if error_type is not ErrorType.UNKNOWN_ERROR else logger.exception
        log(
            "run_failed",
            error_type=error_type.value,
            error_class=error.__class__.__name__,
            detail=str(error),
            **{k: v for k, v in context.items() if k != "error_type"},
        )

        return ErrorResponse(
            error_type=error_type,
            exit_code=EXIT_CODES[error_type],
            message=message,
            context=context,
        )

    def classify(self, error: BaseException) -> ErrorType:
        """
        에러 타입 분류

        Args:
            error: 발생한 예외

        Returns:
            에러 타입
        """
        if isinstance(error, LadderError):
            return error.error_type

        elif isinstance(error, FileNotFoundError):
            return ErrorType.INPUT_FILE_ERROR

        elif isinstance(error, (ValidationError, SettingsError)):
            return ErrorType.CONFIGURATION_ERROR

        elif isinstance(error, OSError):
            return ErrorType.STORAGE_ERROR

        else:
            return ErrorType.UNKNOWN_ERROR

    def describe(self, error_type: ErrorType, error: BaseException) -> str:
        """
        진단 메시지 생성

        FileNotFoundError 는 파일 경로를, pydantic 검증 오류는 잘못된 필드와
        값을 메시지에 담는다.
        """
        prefix = _PREFIXES[error_type]
        if isinstance(error, FileNotFoundError) and error.filename:
            return f"{prefix}: file not found: {error.filename}"
        if isinstance(error, ValidationError):
            problems = "; ".join(
                f"{'.'.join(str(p) for p in item['loc']) or 'value'}="
                f"{item.get('input')!r}: {item['msg']}"
                for item in error.errors()
            )
            return f"{prefix}: {problems}"
        return f"{prefix}: {error}"

    def exit_code(self, error: BaseException) -> int:
        return EXIT_CODES[self.classify(error)]
