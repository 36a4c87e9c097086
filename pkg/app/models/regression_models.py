"""
Design matrices and fitted-model containers.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

# (variable, power) pairs; a term is the product of its factors
Factor = Tuple[str, int]
Term = Tuple[Factor, ...]


class ModelFamily(str, Enum):
    LOGISTIC = "logistic"
    FRACTIONAL_LOGIT = "fractional_logit"
    NEGATIVE_BINOMIAL = "negative_binomial"


@dataclass(frozen=True)
class DesignSpec:
    """Everything needed to rebuild model columns for new data."""

    terms: Tuple[Term, ...]
    intercept: bool
    categorical_levels: Dict[str, List[str]]
    reference_levels: Dict[str, str]
    scales: Dict[str, float]
    column_names: List[str]
    dropped_columns: List[str]
    support: Dict[str, Tuple[float, float]]

    @property
    def variables(self) -> List[str]:
        seen: List[str] = []
        for term in self.terms:
            for name, _ in term:
                if name not in seen:
                    seen.append(name)
        return seen


@dataclass(frozen=True)
class DesignMatrix:
    """설계 행렬"""

    matrix: np.ndarray
    column_names: List[str]
    cluster_ids: np.ndarray
    spec: DesignSpec
    response: Optional[np.ndarray] = None
    response_name: Optional[str] = None

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def k(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def dropped_columns(self) -> List[str]:
        return self.spec.dropped_columns

    @property
    def n_clusters(self) -> int:
        return int(np.unique(self.cluster_ids).shape[0])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.matrix, columns=self.column_names)


@dataclass
class FitResult:
    """추정 결과"""

    family: ModelFamily
    column_names: List[str]
    coefficients: np.ndarray
    covariance: np.ndarray
    log_likelihood: float
    n: int
    converged: bool
    iterations: int
    gradient_norm: float
    n_clusters: int = 0
    dispersion: Optional[float] = None
    dispersion_se: Optional[float] = None
    dispersion_at_boundary: bool = False
    separation: bool = False
    response_name: Optional[str] = None
    design_spec: Optional[DesignSpec] = field(default=None, repr=False)

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def z_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coefficients / self.standard_errors

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.column_names.index(name)])

    def standard_error(self, name: str) -> float:
        return float(self.standard_errors[self.column_names.index(name)])

    def coefficient_table(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "name": self.column_names,
                "coefficient": self.coefficients,
                "standard_error": self.standard_errors,
                "z": self.z_values,
            }
        )

    def to_dict(self) -> Dict[str, Any]:
        table = [
            {
                "name": name,
                "coefficient": float(coef),
                "standard_error": float(se),
                "z": float(z),
            }
            for name, coef, se, z in zip(
                self.column_names, self.coefficients, self.standard_errors, self.z_values
            )
        ]
        payload: Dict[str, Any] = {
            "family": self.family.value,
            "response": self.response_name,
            "coefficients": table,
            "n": self.n,
            "n_clusters": self.n_clusters,
            "log_likelihood": float(self.log_likelihood),
            "converged": self.converged,
            "iterations": self.iterations,
        }
        if self.dispersion is not None:
            payload["dispersion"] = float(self.dispersion)
            payload["dispersion_se"] = (
                None if self.dispersion_se is None else float(self.dispersion_se)
            )
            payload["dispersion_at_boundary"] = self.dispersion_at_boundary
        if self.separation:
            payload["separation"] = True
        if self.design_spec is not None and self.design_spec.dropped_columns:
            payload["dropped_columns"] = list(self.design_spec.dropped_columns)
        return payload
