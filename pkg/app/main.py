"""
desirability-ladder 명령줄 진입점

    ladder rank --users users.csv --messages messages.csv --out results/

Each subcommand prints one JSON summary line on stdout; logs go to stderr.
"""

import sys
from typing import Optional, Sequence

from pydantic_settings import BaseSettings, CliApp, CliSubCommand, SettingsConfigDict

from app.commands.market import (
    GapsCommand,
    IngestCommand,
    RankCommand,
    ReportCommand,
    TextCommand,
)
from app.commands.modeling import FitCommand
from app.commands.simulation import RoundtripCommand, SimulateCommand
from app.config import get_settings
from app.services.error_handler_service import ErrorHandlerService
from app.utils.logging_config import get_logger, setup_logging

logger = get_logger(__name__)


class RunConfig(BaseSettings):
    """Measure desirability hierarchies in online dating markets."""

    model_config = SettingsConfigDict(
        cli_prog_name="ladder",
        cli_kebab_case=True,
        env_prefix="LADDER_CLI_",
    )

    ingest: CliSubCommand[IngestCommand]
    rank: CliSubCommand[RankCommand]
    gaps: CliSubCommand[GapsCommand]
    text: CliSubCommand[TextCommand]
    fit: CliSubCommand[FitCommand]
    simulate: CliSubCommand[SimulateCommand]
    roundtrip: CliSubCommand[RoundtripCommand]
    report: CliSubCommand[ReportCommand]

    def cli_cmd(self) -> None:
        CliApp.run_subcommand(self)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    명령 실행

    Returns:
        종료 코드 (성공 0)
    """
    settings = get_settings()
    setup_logging(settings.log_level, settings.log_format, settings.log_file)
    args = list(sys.argv[1:] if argv is None else argv)
    stage = next((arg for arg in args if not arg.startswith("-")), None)

    try:
        CliApp.run(RunConfig, cli_args=args, cli_exit_on_error=False)
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else 0
    except Exception as e:
        response = ErrorHandlerService().handle(e, stage=stage)
        sys.stderr.write(f"ladder: {response.message}\n")
        return response.exit_code

    logger.debug("run_completed", stage=stage)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
