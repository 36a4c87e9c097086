"""
명령 공통 옵션 및 입력 로딩
"""

from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field

from app.config import get_settings
from app.exceptions import InputFileError
from app.models.market_models import MarketDataset
from app.services.market_data_service import MarketDataService
from app.services.text_metrics_service import load_lexicon, score_messages
from app.utils.logging_config import get_logger

logger = get_logger(__name__)


def check_inputs(*paths: Optional[str]) -> None:
    """계산 시작 전에 모든 입력 경로 확인"""
    for path in paths:
        if path is not None and not Path(path).is_file():
            raise InputFileError(f"input file not found: {path}", path=str(path))


class OutputOptions(BaseModel):
    out: str = Field(
        default_factory=lambda: get_settings().output_dir,
        description="output directory",
    )
    threads: int = Field(
        default_factory=lambda: get_settings().threads, ge=1, description="worker threads"
    )

    @property
    def out_path(self) -> Path:
        return Path(self.out)


class MarketOptions(OutputOptions):
    """users/messages CSV 를 읽는 명령의 공통 옵션"""

    users: str = Field(description="users CSV")
    messages: str = Field(description="messages CSV")
    city: Optional[str] = Field(default=None, description="keep only this city")
    lexicon: Optional[str] = Field(
        default=None, description="positive-word lexicon used to score message text"
    )

    def input_paths(self) -> tuple:
        return (self.users, self.messages, self.lexicon)

    def load_market(self) -> MarketDataset:
        check_inputs(*self.input_paths())
        service = MarketDataService(get_settings())
        users = service.load_users(self.users, city=self.city)
        messages = service.load_messages(self.messages)
        if self.lexicon is not None:
            messages = score_messages(messages, load_lexicon(self.lexicon), self.threads)
        return service.build_market(users, messages, city=self.city)
