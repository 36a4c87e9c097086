"""
합성 시장 명령: simulate, roundtrip
"""

from pydantic import Field

from app.commands.common import OutputOptions
from app.models.synth_models import GenerativeConfig, Strategy
from app.services import export_service
from app.services.synth_market_service import (
    generate_market,
    pipeline_roundtrip,
    write_market_csv,
)


class GenerativeOptions(OutputOptions):
    n_men: int = Field(default=1000, description="number of men")
    n_women: int = Field(default=1000, description="number of women")
    strategy: Strategy = Field(default=Strategy.HYBRID)
    reach: float = Field(default=0.25, description="hybrid target gap")
    gap_noise: float = Field(default=0.1)
    mean_contacts: float = Field(default=10.0)
    women_contact_ratio: float = Field(default=1.0)
    reply_intercept: float = Field(default=0.0)
    reply_slope: float = Field(default=-1.5)
    seed: int = Field(default=0, description="fully determines the generated market")
    city: str = Field(default="boston")

    def to_config(self) -> GenerativeConfig:
        return GenerativeConfig(
            n_men=self.n_men,
            n_women=self.n_women,
            strategy=self.strategy,
            reach=self.reach,
            gap_noise=self.gap_noise,
            mean_contacts=self.mean_contacts,
            women_contact_ratio=self.women_contact_ratio,
            reply_intercept=self.reply_intercept,
            reply_slope=self.reply_slope,
            seed=self.seed,
            city=self.city,
        )


class SimulateCommand(GenerativeOptions):
    """Generate a synthetic market in the users/messages CSV schema."""

    def cli_cmd(self) -> None:
        config = self.to_config()
        dataset, truth = generate_market(config, threads=self.threads)
        paths = write_market_csv(dataset, truth, self.out)
        export_service.write_json(
            {
                "config": config.summary(),
                "counts": truth.counts,
                "mean_true_gap": truth.mean_true_gap,
                "mean_median_true_gap": truth.mean_median_true_gap(),
            },
            self.out_path / "ground_truth.json",
        )
        export_service.emit_summary(
            "simulate",
            strategy=config.strategy.value,
            seed=config.seed,
            users=dataset.n_users,
            first_contacts=len(dataset.first_contacts),
            files={name: str(path) for name, path in paths.items()},
        )


class RoundtripCommand(GenerativeOptions):
    """Generate a market, run the pipeline on it and compare with ground truth."""

    def cli_cmd(self) -> None:
        report = pipeline_roundtrip(self.to_config(), threads=self.threads)
        export_service.write_json(report.to_dict(), self.out_path / "roundtrip.json")
        export_service.emit_summary("roundtrip", **report.to_dict())
