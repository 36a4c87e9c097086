"""
시장 데이터 명령: ingest, rank, gaps, text, report
"""

from typing import Callable, Dict, List, Optional, Tuple

import pandas as pd
from pydantic import Field

from app.commands.common import MarketOptions, OutputOptions, check_inputs
from app.config import get_settings
from app.exceptions import DataValidationError
from app.models.gap_models import BinnedCurve
from app.models.market_models import USER_COLUMNS, MarketDataset
from app.services import export_service
from app.services.gap_analytics_service import (
    absolute_gap_success_correlation,
    build_gap_records,
    desirability_profile,
    gap_density,
    iqr_by_gap,
    reply_rate_by_gap,
    sender_receiver_correlation,
    strata,
    user_gap_profiles,
    volume_by_gap,
)
from app.services.graph_service import rank_market
from app.services.market_data_service import MarketDataService
from app.services.text_metrics_service import (
    load_lexicon,
    score_messages,
    text_stats_frame,
)
from app.utils.logging_config import get_logger

logger = get_logger(__name__)

DESIRABILITY_COLUMNS = ["user_id", "sex", "pagerank", "scaled_rank"]
PROFILE_ATTRIBUTES = ("age", "ethnicity", "education", "body_type", "has_children")


class RankingOptions(MarketOptions):
    alpha: float = Field(
        default_factory=lambda: get_settings().pagerank_alpha,
        ge=0.0,
        lt=1.0,
        description="PageRank damping factor",
    )
    tolerance: float = Field(
        default_factory=lambda: get_settings().pagerank_tolerance,
        gt=0.0,
        description="max-norm convergence tolerance",
    )

    def rank(self, dataset: MarketDataset):
        return rank_market(dataset, alpha=self.alpha, tolerance=self.tolerance)


class IngestCommand(MarketOptions):
    """Load, filter and write the canonical first-contact market."""

    def cli_cmd(self) -> None:
        dataset = self.load_market()
        out = self.out_path
        export_service.write_csv(dataset.users[USER_COLUMNS], out / "users.csv")
        export_service.write_csv(
            dataset.first_contacts, out / "first_contacts.csv"
        )
        export_service.write_json(dataset.report.to_dict(), out / "build_report.json")
        export_service.emit_summary(
            "ingest",
            city=dataset.city,
            users=dataset.n_users,
            first_contacts=len(dataset.first_contacts),
            **dataset.report.to_dict(),
        )


class RankCommand(RankingOptions):
    """Compute PageRank desirability and per-stratum scaled ranks."""

    def cli_cmd(self) -> None:
        dataset = self.load_market()
        table = self.rank(dataset)
        path = export_service.write_csv(
            table.to_frame()[DESIRABILITY_COLUMNS], self.out_path / "desirability.csv"
        )
        export_service.emit_summary(
            "rank",
            ranked=len(table.node_ids),
            iterations=table.iterations,
            residual=table.residual,
            alpha=table.alpha,
            output=str(path),
        )


Stratum = Tuple[str, str]


def _stacked(curves: Dict[Stratum, BinnedCurve]) -> pd.DataFrame:
    frames = [
        curve.to_frame().assign(sex=sex, city=city)
        for (sex, city), curve in curves.items()
        if not curve.is_empty
    ]
    if not frames:
        return BinnedCurve.empty().to_frame().assign(sex=None, city=None)
    return pd.concat(frames, ignore_index=True)


def _safe(what: str, compute: Callable[[], float]) -> Optional[float]:
    try:
        return compute()
    except DataValidationError as e:
        logger.warning("statistic_unavailable", statistic=what, reason=str(e))
        return None


class GapsCommand(RankingOptions):
    """Desirability gaps, per-sender profiles, densities and binned curves."""

    bins: int = Field(
        default_factory=lambda: get_settings().gap_bins, ge=1, description="gap bins"
    )
    min_bin_count: int = Field(
        default_factory=lambda: get_settings().min_bin_count,
        ge=1,
        description="bins with fewer observations are omitted",
    )

    def cli_cmd(self) -> None:
        dataset = self.load_market()
        table = self.rank(dataset)
        gaps = build_gap_records(dataset, table)
        profiles = user_gap_profiles(gaps)

        density: Dict[Stratum, BinnedCurve] = {}
        reply: Dict[Stratum, BinnedCurve] = {}
        volume: Dict[Stratum, BinnedCurve] = {}
        spread: Dict[Stratum, BinnedCurve] = {}
        correlations: Dict[str, Dict[str, Optional[float]]] = {}
        for sex, city, group in strata(gaps):
            reply[(sex, city)] = reply_rate_by_gap(group, self.bins, self.min_bin_count)
            correlations[f"{sex}/{city}"] = {
                "sender_receiver": _safe(
                    "sender_receiver", lambda g=group: sender_receiver_correlation(g)
                ),
                "absolute_gap_success": _safe(
                    "absolute_gap_success",
                    lambda g=group: absolute_gap_success_correlation(g),
                ),
            }
        for sex, city, group in strata(profiles, sex_column="sex"):
            key = (sex, city)
            if len(group) >= 2:
                density[key] = gap_density(group["median_gap"].to_numpy(dtype=float))
            volume[key] = volume_by_gap(group, self.bins, self.min_bin_count)
            spread[key] = iqr_by_gap(group, self.bins, self.min_bin_count)

        out = self.out_path
        export_service.write_csv(gaps, out / "gap_records.csv")
        export_service.write_csv(profiles, out / "gap_profiles.csv")
        export_service.write_csv(_stacked(density), out / "median_gap_density.csv")
        export_service.write_csv(_stacked(reply), out / "reply_rate_by_gap.csv")
        export_service.write_csv(_stacked(volume), out / "volume_by_gap.csv")
        export_service.write_csv(_stacked(spread), out / "iqr_by_gap.csv")
        export_service.write_json(correlations, out / "gap_correlations.json")

        mean_median = (
            profiles.groupby("sex")["median_gap"].mean().to_dict() if len(profiles) else {}
        )
        export_service.emit_summary(
            "gaps",
            records=len(gaps),
            senders=len(profiles),
            mean_median_gap=mean_median,
            correlations=correlations,
            omitted_reply_bins={
                f"{sex}/{city}": curve.omitted for (sex, city), curve in reply.items()
            },
        )


class TextCommand(OutputOptions):
    """Score message text against a positive-word lexicon."""

    messages: str = Field(description="messages CSV")
    lexicon: str = Field(description="positive-word lexicon")

    def cli_cmd(self) -> None:
        check_inputs(self.messages, self.lexicon)
        service = MarketDataService(get_settings())
        messages = service.load_messages(self.messages)
        scored = score_messages(messages, load_lexicon(self.lexicon), self.threads)
        stats = pd.concat(
            [scored[["sender_id", "receiver_id", "timestamp"]], text_stats_frame(scored)],
            axis=1,
        )
        path = export_service.write_csv(stats, self.out_path / "message_text.csv")
        export_service.emit_summary(
            "text",
            messages=len(stats),
            mean_word_count=float(stats["word_count"].mean()) if len(stats) else None,
            mean_pct_positive=(
                float(stats["pct_positive"].mean()) if len(stats) else None
            ),
            output=str(path),
        )


class ReportCommand(RankingOptions):
    """Market summary table, received-message histograms and desirability profiles."""

    def cli_cmd(self) -> None:
        dataset = self.load_market()
        service = MarketDataService(get_settings())
        summary = service.market_summary(dataset)
        table = self.rank(dataset)

        out = self.out_path
        export_service.write_json(summary, out / "market_summary.json")
        export_service.write_csv(
            service.received_histogram(dataset), out / "received_histogram.csv"
        )
        export_service.write_csv(
            service.attribute_histogram(dataset, "age"), out / "age_histogram.csv"
        )
        profiles: List[pd.DataFrame] = [
            desirability_profile(table, dataset.users, attribute).assign(
                attribute=attribute
            )
            for attribute in PROFILE_ATTRIBUTES
        ]
        export_service.write_csv(
            pd.concat(profiles, ignore_index=True), out / "desirability_profiles.csv"
        )
        export_service.emit_summary("report", city=dataset.city, summary=summary)
