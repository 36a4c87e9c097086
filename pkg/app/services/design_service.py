"""
설계 행렬 구성 서비스

Formula terms are joined by ``+``; a term is one or more factors joined by
``:``; a factor is ``column`` or ``column^k``. ``-1`` removes the intercept.
Object / category columns expand to indicator columns ``column[level]``
against a reference level.
"""

import itertools
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pandas.api.types import is_bool_dtype, is_numeric_dtype

from app.config import Settings, get_settings
from app.exceptions import ModelSpecificationError
from app.models.market_models import MISSING_LEVEL
from app.models.regression_models import DesignMatrix, DesignSpec, Factor, Term
from app.utils.logging_config import get_logger

logger = get_logger(__name__)

INTERCEPT = "Intercept"
Formula = Union[str, Sequence[str]]

_ALIAS_TOLERANCE = 1e-9


def parse_formula(formula: Formula) -> Tuple[Tuple[Term, ...], bool]:
    """
    식을 항 목록과 절편 여부로 변환

    Examples:
        "gap + gap^2 + gap:city" -> ((("gap",1),), (("gap",2),), (("gap",1),("city",1))), True
    """
    if isinstance(formula, str):
        parts = formula.replace("-", "+-").split("+")
    else:
        parts = list(formula)

    intercept = True
    terms: List[Term] = []
    for part in parts:
        token = "".join(str(part).split())
        if not token or token == "1":
            continue
        if token in ("-1", "0"):
            intercept = False
            continue
        factors: List[Factor] = []
        for piece in token.split(":"):
            name, _, power = piece.partition("^")
            if not name or name.startswith("-"):
                raise ModelSpecificationError(f"cannot parse formula term {part!r}")
            try:
                k = int(power) if power else 1
            except ValueError as e:
                raise ModelSpecificationError(
                    f"power in {piece!r} must be a positive integer"
                ) from e
            if k < 1:
                raise ModelSpecificationError(f"power in {piece!r} must be positive")
            factors.append((name, k))
        term = tuple(factors)
        if term not in terms:
            terms.append(term)
    return tuple(terms), intercept


def _is_categorical(series: pd.Series) -> bool:
    if is_bool_dtype(series):
        return False
    return not is_numeric_dtype(series)


def _factor_name(name: str, power: int) -> str:
    return name if power == 1 else f"{name}^{power}"


class _ColumnExpander:
    """변수별 레벨/척도 정보로 항을 열로 펼침"""

    def __init__(
        self,
        levels: Mapping[str, List[str]],
        references: Mapping[str, str],
        scales: Mapping[str, float],
    ):
        self.levels = levels
        self.references = references
        self.scales = scales

    def factor_columns(
        self, frame: pd.DataFrame, name: str, power: int
    ) -> List[Tuple[str, np.ndarray]]:
        series = frame[name]
        if name in self.levels:
            if power != 1:
                raise ModelSpecificationError(
                    f"power on categorical column {name!r} is not meaningful"
                )
            values = series.astype(object).where(series.notna(), MISSING_LEVEL).astype(str)
            unknown = set(values.unique()) - set(self.levels[name])
            if unknown:
                raise ModelSpecificationError(
                    f"column {name!r} has levels not seen when the design was built: "
                    f"{sorted(unknown)}"
                )
            reference = self.references[name]
            return [
                (f"{name}[{level}]", (values == level).to_numpy(dtype=float))
                for level in self.levels[name]
                if level != reference
            ]

        numeric = pd.to_numeric(series, errors="coerce").astype(float)
        if numeric.isna().any():
            raise ModelSpecificationError(
                f"numeric column {name!r} has missing or non-numeric values"
            )
        values = numeric.to_numpy() / self.scales.get(name, 1.0)
        return [(_factor_name(name, power), values**power)]

    def term_columns(
        self, frame: pd.DataFrame, term: Term
    ) -> List[Tuple[str, np.ndarray]]:
        expanded = [self.factor_columns(frame, name, power) for name, power in term]
        columns = []
        for combo in itertools.product(*expanded):
            label = ":".join(piece[0] for piece in combo)
            values = np.prod(np.column_stack([piece[1] for piece in combo]), axis=1)
            columns.append((label, values))
        return columns

    def all_columns(
        self, frame: pd.DataFrame, terms: Sequence[Term], intercept: bool
    ) -> List[Tuple[str, np.ndarray]]:
        columns: List[Tuple[str, np.ndarray]] = []
        if intercept:
            columns.append((INTERCEPT, np.ones(len(frame))))
        for term in terms:
            columns.extend(self.term_columns(frame, term))
        return columns


def _independent(columns: List[Tuple[str, np.ndarray]]) -> Tuple[List[int], List[int]]:
    """앞에서부터 탐욕적으로 선형 독립인 열만 유지"""
    kept: List[int] = []
    dropped: List[int] = []
    basis = np.zeros((len(columns[0][1]) if columns else 0, 0))
    for j, (_, values) in enumerate(columns):
        norm = float(np.linalg.norm(values))
        residual = values.astype(float).copy()
        for _ in range(2):
            residual -= basis @ (basis.T @ residual)
        remaining = float(np.linalg.norm(residual))
        if norm == 0.0 or remaining <= _ALIAS_TOLERANCE * norm:
            dropped.append(j)
            continue
        basis = np.column_stack([basis, residual / remaining])
        kept.append(j)
    return kept, dropped


def build_design(
    records: pd.DataFrame,
    formula: Formula,
    cluster_column: Optional[str] = None,
    response: Optional[str] = None,
    scales: Optional[Mapping[str, float]] = None,
    reference_levels: Optional[Mapping[str, str]] = None,
    settings: Optional[Settings] = None,
) -> DesignMatrix:
    """
    설계 행렬 구성

    Args:
        records: 관측 데이터
        formula: 식 문자열 또는 항 목록
        cluster_column: 군집 컬럼 (None 이면 행마다 개별 군집)
        response: 반응 변수 컬럼 (결측 행은 제외)
        scales: 입력 시 나눌 척도 (예: {"word_count": 100})
        reference_levels: 범주형 기준 수준 (기본값은 설정)

    Raises:
        ModelSpecificationError: 알 수 없는 컬럼, 상수 공변량, 결측 수치
    """
    settings = settings or get_settings()
    references_wanted = dict(settings.reference_levels)
    references_wanted.update(reference_levels or {})
    scales = dict(scales or {})

    terms, intercept = parse_formula(formula)
    variables: List[str] = []
    for term in terms:
        for name, _ in term:
            if name not in variables:
                variables.append(name)

    wanted = variables + [c for c in (cluster_column, response) if c]
    unknown = [name for name in wanted if name not in records.columns]
    if unknown:
        raise ModelSpecificationError(
            f"unknown column(s) {', '.join(unknown)}", columns=unknown
        )

    frame = records
    if response is not None:
        present = frame[response].notna()
        if not present.all():
            logger.warning(
                "design_rows_without_response",
                response=response,
                dropped=int((~present).sum()),
            )
            frame = frame[present]
    frame = frame.reset_index(drop=True)

    levels: Dict[str, List[str]] = {}
    references: Dict[str, str] = {}
    support: Dict[str, Tuple[float, float]] = {}
    for name in variables:
        series = frame[name]
        if _is_categorical(series):
            values = series.astype(object).where(series.notna(), MISSING_LEVEL).astype(str)
            observed = sorted(values.unique())
            if len(observed) < 2:
                raise ModelSpecificationError(
                    f"all-constant covariate {name!r} (single level)", column=name
                )
            levels[name] = observed
            wanted_ref = references_wanted.get(name)
            references[name] = wanted_ref if wanted_ref in observed else observed[0]
        elif len(frame):
            numeric = pd.to_numeric(series, errors="coerce").astype(float)
            support[name] = (float(numeric.min()), float(numeric.max()))

    expander = _ColumnExpander(levels, references, scales)
    columns = expander.all_columns(frame, terms, intercept)
    if not columns:
        raise ModelSpecificationError("formula produces no columns")

    kept, dropped = _independent(columns)
    kept_names = [columns[j][0] for j in kept]
    dropped_names = [columns[j][0] for j in dropped]
    for name in dropped_names:
        logger.warning("design_column_dropped", column=name, reason="aliased")

    covariates = [name for name in kept_names if name != INTERCEPT]
    if terms and not covariates:
        raise ModelSpecificationError(
            "all-constant covariate: every requested term is aliased",
            dropped=dropped_names,
        )

    matrix = (
        np.column_stack([columns[j][1] for j in kept])
        if kept
        else np.zeros((len(frame), 0))
    )
    if cluster_column is not None:
        cluster_ids, _ = pd.factorize(frame[cluster_column], sort=True)
    else:
        cluster_ids = np.arange(len(frame))

    spec = DesignSpec(
        terms=terms,
        intercept=intercept,
        categorical_levels=levels,
        reference_levels=references,
        scales=scales,
        column_names=kept_names,
        dropped_columns=dropped_names,
        support=support,
    )
    logger.debug(
        "design_built", rows=len(frame), columns=len(kept_names), dropped=len(dropped)
    )
    return DesignMatrix(
        matrix=matrix,
        column_names=kept_names,
        cluster_ids=np.asarray(cluster_ids, dtype=np.int64),
        spec=spec,
        response=(
            frame[response].to_numpy(dtype=float) if response is not None else None
        ),
        response_name=response,
    )


def transform(spec: DesignSpec, frame: pd.DataFrame) -> np.ndarray:
    """저장된 설계 명세로 새 데이터의 설계 행렬 생성"""
    missing = [name for name in spec.variables if name not in frame.columns]
    if missing:
        raise ModelSpecificationError(
            f"values required for column(s) {', '.join(missing)}", columns=missing
        )
    expander = _ColumnExpander(
        spec.categorical_levels, spec.reference_levels, spec.scales
    )
    columns = dict(expander.all_columns(frame, spec.terms, spec.intercept))
    return np.column_stack([columns[name] for name in spec.column_names])
