"""
회귀 모형 명령: fit
"""

from typing import Any, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import Field, model_validator

from app.commands.market import RankingOptions
from app.exceptions import LadderError, ModelSpecificationError
from app.models.regression_models import DesignSpec, FitResult, ModelFamily
from app.services import export_service
from app.services.design_service import build_design
from app.services.gap_analytics_service import build_gap_records
from app.services.regression_service import (
    FITTERS,
    STANDARD_MODELS,
    fit_standard_model,
    predict_curve,
)
from app.utils.logging_config import get_logger

logger = get_logger(__name__)

CURVE_POINTS = 41
SWEEPS = {"attributes": "age"}


def held_values(spec: DesignSpec, records: pd.DataFrame, sweep: str) -> Dict[str, Any]:
    """Median for numeric covariates, reference level for categorical ones."""
    held: Dict[str, Any] = {}
    for name in spec.variables:
        if name == sweep:
            continue
        if name in spec.categorical_levels:
            held[name] = spec.reference_levels[name]
        else:
            held[name] = float(pd.to_numeric(records[name], errors="coerce").median())
    return held


def sweep_grid(spec: DesignSpec, name: str) -> np.ndarray:
    low, high = spec.support.get(name, (-1.0, 1.0))
    return np.linspace(low, high, CURVE_POINTS)


class FitCommand(RankingOptions):
    """Fit the standard model catalogue (or one custom formula) per sex."""

    model: str = Field(
        default="all",
        description=f"one of {', '.join(STANDARD_MODELS)} or 'all'",
    )
    cluster_on: Literal["seeker", "city"] = Field(
        default="seeker", description="cluster standard errors by seeker or by city"
    )
    formula: Optional[str] = Field(
        default=None, description="custom formula fitted on gap records"
    )
    response: Optional[str] = Field(default=None, description="custom response column")
    family: Optional[ModelFamily] = Field(default=None, description="custom model family")

    @model_validator(mode="after")
    def check_model(self) -> "FitCommand":
        if self.formula is not None:
            if self.response is None or self.family is None:
                raise ValueError("--formula needs --response and --family")
        elif self.model != "all" and self.model not in STANDARD_MODELS:
            raise ValueError(
                f"unknown model {self.model!r}; expected 'all' or one of "
                f"{', '.join(STANDARD_MODELS)}"
            )
        return self

    def _records(self, dataset, table) -> Dict[str, pd.DataFrame]:
        gaps = build_gap_records(dataset, table)
        ranked = table.to_frame()[["user_id", "scaled_rank"]]
        users = dataset.users.merge(ranked, on="user_id", how="inner")
        return {"gaps": gaps.rename(columns={"sender_sex": "sex"}), "users": users}

    def _fit_custom(self, records: pd.DataFrame) -> FitResult:
        cluster = "sender_id" if self.cluster_on == "seeker" else "city"
        design = build_design(
            records, self.formula, cluster_column=cluster, response=self.response
        )
        return FITTERS[self.family](design)

    def cli_cmd(self) -> None:
        dataset = self.load_market()
        table = self.rank(dataset)
        records = self._records(dataset, table)

        if self.formula is not None:
            names = ["custom"]
        elif self.model == "all":
            names = list(STANDARD_MODELS)
        else:
            names = [self.model]

        fitted: List[Dict[str, Any]] = []
        skipped: List[Dict[str, str]] = []
        out = self.out_path
        for name in names:
            frame = records["users" if name == "attributes" else "gaps"]
            for sex in ("male", "female"):
                subset = frame[frame["sex"] == sex]
                try:
                    if name == "custom":
                        fit = self._fit_custom(subset)
                    else:
                        fit = fit_standard_model(name, subset, cluster_on=self.cluster_on)
                except LadderError as e:
                    if len(names) == 1:
                        raise
                    logger.warning("model_skipped", model=name, sex=sex, reason=str(e))
                    skipped.append({"model": name, "sex": sex, "reason": str(e)})
                    continue

                export_service.write_json(
                    {"model": name, "sex": sex, **fit.to_dict()},
                    out / f"fit_{name}_{sex}.json",
                )
                self._write_curve(name, sex, fit, subset)
                fitted.append(
                    {
                        "model": name,
                        "sex": sex,
                        "n": fit.n,
                        "clusters": fit.n_clusters,
                        "converged": fit.converged,
                    }
                )

        export_service.emit_summary(
            "fit", cluster_on=self.cluster_on, fitted=fitted, skipped=skipped
        )

    def _write_curve(
        self, name: str, sex: str, fit: FitResult, records: pd.DataFrame
    ) -> None:
        if fit.separation or fit.design_spec is None:
            return
        sweep = SWEEPS.get(name, "gap")
        if sweep not in fit.design_spec.variables:
            return
        try:
            curve = predict_curve(
                fit,
                (sweep, sweep_grid(fit.design_spec, sweep)),
                held_values(fit.design_spec, records, sweep),
            )
        except ModelSpecificationError as e:
            logger.warning("prediction_skipped", model=name, sex=sex, reason=str(e))
            return
        export_service.write_csv(
            curve.to_frame().rename(columns={"bin_center": sweep}),
            self.out_path / f"predicted_{name}_{sex}.csv",
        )
