"""
회귀 모형 서비스

Logistic and fractional-logit fits share one Newton / IRLS solver; NB2 is
fitted jointly over the coefficients and ``log(alpha)``. All covariances are
cluster-robust sandwiches A^-1 B A^-1.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.special import betaln, digamma, expit, log_expit, polygamma

from app.config import Settings, get_settings
from app.exceptions import DataValidationError, ModelSpecificationError
from app.models.gap_models import BinnedCurve
from app.models.regression_models import DesignMatrix, FitResult, ModelFamily
from app.services.design_service import build_design, transform
from app.utils.logging_config import get_logger

logger = get_logger(__name__)

SEPARATION_ETA = 25.0
DISPERSION_BOUNDS = (1e-8, 1e8)
FEW_CLUSTERS = 10
# Newton decrement below which the objective cannot improve in double precision
_DECREMENT_FLOOR = 1e-14
_MIN_STEP = 2.0**-30
# 1 / alpha above which digamma differences switch to their asymptotic series
_ASYMPTOTIC_R = 1e4


# ---------------------------------------------------------------------------
# likelihoods
# ---------------------------------------------------------------------------


def logistic_loglike(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Bernoulli log-likelihood (quasi-likelihood when y is fractional)."""
    eta = X @ beta
    return float(np.sum(y * log_expit(eta) + (1.0 - y) * log_expit(-eta)))


def logistic_observation_scores(
    beta: np.ndarray, X: np.ndarray, y: np.ndarray
) -> np.ndarray:
    return X * (y - expit(X @ beta))[:, None]


def logistic_score(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return X.T @ (y - expit(X @ beta))


def logistic_hessian(beta: np.ndarray, X: np.ndarray) -> np.ndarray:
    mu = expit(X @ beta)
    weights = mu * (1.0 - mu)
    return -(X.T * weights) @ X


def _negbin_parts(beta: np.ndarray, alpha: float, X: np.ndarray, y: np.ndarray):
    mu = np.exp(X @ beta)
    r = 1.0 / alpha
    return mu, r, r + mu


def negbin_loglike(params: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """NB2 log-likelihood; ``params`` is (beta..., alpha)."""
    beta, alpha = params[:-1], float(params[-1])
    mu, r, total = _negbin_parts(beta, alpha, X, y)
    positive = y > 0
    # lgamma(y+r) - lgamma(r) - lgamma(y+1) = -log(y) - betaln(y, r) for y >= 1
    combinatorial = np.zeros_like(y)
    combinatorial[positive] = -np.log(y[positive]) - betaln(y[positive], r)
    ll = combinatorial - r * np.log1p(mu / r) + y * (np.log(mu) - np.log(total))
    return float(np.sum(ll))


def _digamma_shift(y: np.ndarray, r: float) -> np.ndarray:
    """digamma(y + r) - digamma(r)"""
    if r < _ASYMPTOTIC_R:
        return digamma(y + r) - digamma(r)
    # asymptotic series; the direct difference cancels to noise for large r
    shifted = r + y
    return (
        np.log1p(y / r)
        + y / (2.0 * r * shifted)
        + y * (2.0 * r + y) / (12.0 * r**2 * shifted**2)
    )


def _trigamma_shift(y: np.ndarray, r: float) -> np.ndarray:
    """polygamma(1, y + r) - polygamma(1, r)"""
    if r < _ASYMPTOTIC_R:
        return polygamma(1, y + r) - polygamma(1, r)
    shifted = r + y
    return (
        -y / (r * shifted)
        - y * (2.0 * r + y) / (2.0 * r**2 * shifted**2)
        - y * (3.0 * r**2 + 3.0 * r * y + y**2) / (6.0 * r**3 * shifted**3)
    )


def _negbin_r_derivatives(mu: np.ndarray, r: float, y: np.ndarray):
    total = r + mu
    score_r = _digamma_shift(y, r) - np.log1p(mu / r) + (mu - y) / total
    hess_r = (
        _trigamma_shift(y, r)
        + mu / (r * total)
        - (mu - y) / total**2
    )
    return score_r, hess_r


def negbin_observation_scores(
    params: np.ndarray, X: np.ndarray, y: np.ndarray
) -> np.ndarray:
    """Per-row scores for (beta..., alpha)."""
    beta, alpha = params[:-1], float(params[-1])
    mu, r, total = _negbin_parts(beta, alpha, X, y)
    score_r, _ = _negbin_r_derivatives(mu, r, y)
    beta_part = X * ((y - mu) * r / total)[:, None]
    alpha_part = -(r**2) * score_r
    return np.column_stack([beta_part, alpha_part])


def negbin_score(params: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return negbin_observation_scores(params, X, y).sum(axis=0)


def negbin_hessian(params: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Observed Hessian in (beta..., alpha)."""
    beta, alpha = params[:-1], float(params[-1])
    mu, r, total = _negbin_parts(beta, alpha, X, y)
    score_r, hess_r = _negbin_r_derivatives(mu, r, y)
    k = X.shape[1]
    hessian = np.empty((k + 1, k + 1))
    hessian[:k, :k] = -(X.T * (mu * r * (r + y) / total**2)) @ X
    cross = -(r**2) * (X.T @ ((y - mu) * mu / total**2))
    hessian[:k, k] = cross
    hessian[k, :k] = cross
    hessian[k, k] = float(np.sum(2.0 * r**3 * score_r + r**4 * hess_r))
    return hessian


def _negbin_log_alpha_derivatives(
    beta: np.ndarray, log_alpha: float, X: np.ndarray, y: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Observation scores and Hessian in (beta..., log alpha)."""
    mu, r, total = _negbin_parts(beta, float(np.exp(log_alpha)), X, y)
    score_r, hess_r = _negbin_r_derivatives(mu, r, y)
    k = X.shape[1]
    scores = np.column_stack([X * ((y - mu) * r / total)[:, None], -r * score_r])
    hessian = np.empty((k + 1, k + 1))
    hessian[:k, :k] = -(X.T * (mu * r * (r + y) / total**2)) @ X
    cross = -r * (X.T @ ((y - mu) * mu / total**2))
    hessian[:k, k] = cross
    hessian[k, :k] = cross
    hessian[k, k] = float(np.sum(r * score_r + r**2 * hess_r))
    return scores, scores.sum(axis=0), hessian


def poisson_loglike(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    eta = X @ beta
    return float(np.sum(y * eta - np.exp(eta)))


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


@dataclass
class _Solution:
    params: np.ndarray
    loglike: float
    gradient_norm: float
    iterations: int
    converged: bool
    separation: bool = False
    extra: Dict[str, Any] = field(default_factory=dict)


def _newton(
    params: np.ndarray,
    loglike: Callable[[np.ndarray], float],
    derivatives: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]],
    tolerance: float,
    max_iterations: int,
    check: Optional[Callable[[np.ndarray], bool]] = None,
    clip: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    fallback: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
) -> _Solution:
    """
    Newton ascent with step-halving.

    ``check`` returning True stops the iteration (separation); ``fallback``
    supplies an ascent direction when the Hessian is not negative definite.
    """
    ll = loglike(params)
    gradient_norm = np.inf
    for iteration in range(1, max_iterations + 1):
        gradient, hessian = derivatives(params)
        gradient_norm = float(np.max(np.abs(gradient))) if gradient.size else 0.0
        if gradient_norm <= tolerance:
            return _Solution(params, ll, gradient_norm, iteration - 1, True)

        try:
            np.linalg.cholesky(-hessian)
            step = np.linalg.solve(-hessian, gradient)
        except np.linalg.LinAlgError:
            if fallback is None:
                raise ModelSpecificationError(
                    "Hessian is singular; the design is rank deficient"
                )
            step = fallback(gradient, hessian)

        decrement = float(gradient @ step)
        if 0.0 <= decrement <= _DECREMENT_FLOOR:
            return _Solution(params, ll, gradient_norm, iteration - 1, True)

        scale = 1.0
        slack = 1e-12 * (1.0 + abs(ll))
        while True:
            candidate = params + scale * step
            if clip is not None:
                candidate = clip(candidate)
            candidate_ll = loglike(candidate)
            if np.isfinite(candidate_ll) and candidate_ll >= ll - slack:
                break
            scale *= 0.5
            if scale < _MIN_STEP:
                logger.debug("newton_line_search_stalled", iteration=iteration)
                return _Solution(params, ll, gradient_norm, iteration, False)

        params, ll = candidate, candidate_ll
        if check is not None and check(params):
            return _Solution(params, ll, gradient_norm, iteration, False, separation=True)

    gradient, _ = derivatives(params)
    gradient_norm = float(np.max(np.abs(gradient))) if gradient.size else 0.0
    return _Solution(
        params, ll, gradient_norm, max_iterations, gradient_norm <= tolerance
    )


def _require_full_rank(X: np.ndarray) -> None:
    if X.shape[1] == 0:
        raise ModelSpecificationError("design has no columns")
    if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        raise ModelSpecificationError(
            f"design matrix is rank deficient ({X.shape[0]} rows, {X.shape[1]} columns)"
        )


def _response(design: DesignMatrix, y: Optional[np.ndarray]) -> np.ndarray:
    values = design.response if y is None else np.asarray(y, dtype=float)
    if values is None:
        raise ModelSpecificationError("no response given for the design")
    values = np.asarray(values, dtype=float)
    if values.shape[0] != design.n:
        raise ModelSpecificationError(
            f"response has {values.shape[0]} rows, design has {design.n}"
        )
    if not np.all(np.isfinite(values)):
        raise DataValidationError("response contains missing or infinite values")
    return values


def _fit_binomial_family(
    design: DesignMatrix,
    y: np.ndarray,
    family: ModelFamily,
    settings: Settings,
    cluster_correction: Optional[bool],
) -> FitResult:
    X = design.matrix
    _require_full_rank(X)

    def derivatives(beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return logistic_score(beta, X, y), logistic_hessian(beta, X)

    def separated(beta: np.ndarray) -> bool:
        return bool(np.max(np.abs(X @ beta)) > SEPARATION_ETA)

    solution = _newton(
        np.zeros(X.shape[1]),
        lambda beta: logistic_loglike(beta, X, y),
        derivatives,
        settings.glm_tolerance,
        settings.glm_max_iterations,
        check=separated,
    )

    result = FitResult(
        family=family,
        column_names=list(design.column_names),
        coefficients=solution.params,
        covariance=np.full((X.shape[1], X.shape[1]), np.nan),
        log_likelihood=solution.loglike,
        n=design.n,
        converged=solution.converged,
        iterations=solution.iterations,
        gradient_norm=solution.gradient_norm,
        n_clusters=design.n_clusters,
        separation=solution.separation,
        response_name=design.response_name,
        design_spec=design.spec,
    )
    if solution.separation:
        logger.warning(
            "perfect_separation",
            family=family.value,
            iterations=solution.iterations,
            max_linear_predictor=float(np.max(np.abs(X @ solution.params))),
        )
        return result
    if not solution.converged:
        logger.warning(
            "fit_not_converged",
            family=family.value,
            iterations=solution.iterations,
            gradient_norm=solution.gradient_norm,
        )
    if cluster_correction is None:
        cluster_correction = settings.cluster_correction
    result.covariance = clustered_sandwich_se(design, result, y, cluster_correction)
    logger.info(
        "model_fitted",
        family=family.value,
        n=result.n,
        clusters=result.n_clusters,
        iterations=result.iterations,
        log_likelihood=result.log_likelihood,
    )
    return result


def fit_logistic(
    design: DesignMatrix,
    y: Optional[np.ndarray] = None,
    cluster_correction: Optional[bool] = None,
    settings: Optional[Settings] = None,
) -> FitResult:
    """
    로지스틱 회귀 (IRLS, 군집 강건 공분산)

    Raises:
        DataValidationError: y 가 0/1 이 아닌 경우
        ModelSpecificationError: 계수 행렬 계수 부족
    """
    values = _response(design, y)
    if not np.all((values == 0.0) | (values == 1.0)):
        raise DataValidationError("logistic outcome must be 0/1")
    return _fit_binomial_family(
        design, values, ModelFamily.LOGISTIC, settings or get_settings(), cluster_correction
    )


def fit_fractional_logit(
    design: DesignMatrix,
    y: Optional[np.ndarray] = None,
    cluster_correction: Optional[bool] = None,
    settings: Optional[Settings] = None,
) -> FitResult:
    """
    분수 로짓 준우도 추정 (y in [0, 1])

    Raises:
        DataValidationError: y 가 [0, 1] 밖인 경우
    """
    values = _response(design, y)
    if np.any(values < 0.0) or np.any(values > 1.0):
        raise DataValidationError("fractional outcome must lie in [0, 1]")
    return _fit_binomial_family(
        design,
        values,
        ModelFamily.FRACTIONAL_LOGIT,
        settings or get_settings(),
        cluster_correction,
    )


def _poisson_start(X: np.ndarray, y: np.ndarray, settings: Settings) -> np.ndarray:
    start, *_ = np.linalg.lstsq(X, np.log(y + 0.5), rcond=None)

    def derivatives(beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        mu = np.exp(X @ beta)
        return X.T @ (y - mu), -(X.T * mu) @ X

    solution = _newton(
        start,
        lambda beta: poisson_loglike(beta, X, y),
        derivatives,
        settings.negbin_tolerance,
        settings.glm_max_iterations,
    )
    return solution.params


def fit_negative_binomial(
    design: DesignMatrix,
    y: Optional[np.ndarray] = None,
    cluster_correction: Optional[bool] = None,
    settings: Optional[Settings] = None,
) -> FitResult:
    """
    NB2 음이항 회귀 (계수와 산포 동시 최대화)

    Raises:
        DataValidationError: 음수, 비정수, 전부 0 인 결과
    """
    settings = settings or get_settings()
    values = _response(design, y)
    if np.any(values < 0) or np.any(values != np.round(values)):
        raise DataValidationError("count outcome must be nonnegative integers")
    if not np.any(values > 0):
        raise DataValidationError("count outcome is zero for every row")

    X = design.matrix
    _require_full_rank(X)
    k = X.shape[1]
    low, high = np.log(DISPERSION_BOUNDS[0]), np.log(DISPERSION_BOUNDS[1])

    beta0 = _poisson_start(X, values, settings)
    mu0 = np.exp(X @ beta0)
    moment = float(np.sum((values - mu0) ** 2 - values) / np.sum(mu0**2))
    log_alpha0 = float(np.log(np.clip(moment, 0.05, 10.0)))

    def loglike(params: np.ndarray) -> float:
        return negbin_loglike(
            np.append(params[:k], np.exp(params[k])), X, values
        )

    def derivatives(params: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        _, gradient, hessian = _negbin_log_alpha_derivatives(
            params[:k], params[k], X, values
        )
        return gradient, hessian

    def clip(params: np.ndarray) -> np.ndarray:
        clipped = params.copy()
        clipped[k] = np.clip(clipped[k], low, high)
        return clipped

    def fisher_step(gradient: np.ndarray, hessian: np.ndarray) -> np.ndarray:
        step = np.empty_like(gradient)
        step[:k] = np.linalg.solve(-hessian[:k, :k], gradient[:k])
        curvature = hessian[k, k]
        step[k] = (
            gradient[k] / -curvature if curvature < 0 else np.sign(gradient[k])
        )
        return step

    def at_boundary(params: np.ndarray) -> bool:
        return bool(params[k] <= low or params[k] >= high)

    solution = _newton(
        np.append(beta0, log_alpha0),
        loglike,
        derivatives,
        settings.negbin_tolerance,
        settings.glm_max_iterations,
        check=at_boundary,
        clip=clip,
        fallback=fisher_step,
    )

    boundary = solution.separation
    params = solution.params
    if boundary:
        # dispersion pinned at its bound; finish the coefficients with alpha fixed
        log_alpha = float(params[k])

        def beta_derivatives(beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            _, gradient, hessian = _negbin_log_alpha_derivatives(
                beta, log_alpha, X, values
            )
            return gradient[:k], hessian[:k, :k]

        beta_solution = _newton(
            params[:k],
            lambda beta: loglike(np.append(beta, log_alpha)),
            beta_derivatives,
            settings.negbin_tolerance,
            settings.glm_max_iterations,
        )
        params = np.append(beta_solution.params, log_alpha)
        solution = _Solution(
            params,
            beta_solution.loglike,
            beta_solution.gradient_norm,
            solution.iterations + beta_solution.iterations,
            beta_solution.converged,
        )
        logger.warning(
            "negbin_dispersion_at_boundary",
            alpha=float(np.exp(log_alpha)),
            poisson_limit=bool(log_alpha <= low),
        )

    alpha = float(np.exp(params[k]))
    result = FitResult(
        family=ModelFamily.NEGATIVE_BINOMIAL,
        column_names=list(design.column_names),
        coefficients=params[:k],
        covariance=np.full((k, k), np.nan),
        log_likelihood=solution.loglike,
        n=design.n,
        converged=solution.converged,
        iterations=solution.iterations,
        gradient_norm=solution.gradient_norm,
        n_clusters=design.n_clusters,
        dispersion=alpha,
        dispersion_at_boundary=boundary,
        response_name=design.response_name,
        design_spec=design.spec,
    )
    if not solution.converged:
        logger.warning(
            "fit_not_converged",
            family=result.family.value,
            iterations=solution.iterations,
            gradient_norm=solution.gradient_norm,
        )

    if cluster_correction is None:
        cluster_correction = settings.cluster_correction
    covariance = clustered_sandwich_se(design, result, values, cluster_correction)
    result.covariance = covariance[:k, :k]
    if not boundary:
        result.dispersion_se = float(np.sqrt(max(covariance[k, k], 0.0)))
    logger.info(
        "model_fitted",
        family=result.family.value,
        n=result.n,
        clusters=result.n_clusters,
        iterations=result.iterations,
        dispersion=alpha,
        log_likelihood=result.log_likelihood,
    )
    return result


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------


def cluster_sums(scores: np.ndarray, cluster_ids: np.ndarray) -> np.ndarray:
    """Sum rows of ``scores`` within each cluster (clusters x parameters)."""
    codes, _ = pd.factorize(np.asarray(cluster_ids), sort=True)
    n = scores.shape[0]
    indicator = sparse.csr_matrix(
        (np.ones(n), (codes, np.arange(n))), shape=(int(codes.max()) + 1, n)
    )
    return np.asarray(indicator @ scores)


def sandwich(
    hessian: np.ndarray,
    scores: np.ndarray,
    cluster_ids: np.ndarray,
    correction: bool = False,
) -> np.ndarray:
    """A^-1 B A^-1 with A = -hessian, B = sum of cluster score outer products."""
    bread = -hessian
    if not np.all(np.isfinite(bread)) or np.linalg.cond(bread) > 1.0 / np.finfo(float).eps:
        raise ModelSpecificationError("Hessian is singular; sandwich is undefined")
    summed = cluster_sums(scores, cluster_ids)
    groups = summed.shape[0]
    if groups == 1:
        logger.warning(
            "single_cluster",
            detail="score sums to ~0 at the optimum, covariance is degenerate",
        )
    elif groups < FEW_CLUSTERS:
        logger.warning("few_clusters", clusters=groups)

    meat = summed.T @ summed
    bread_inverse = np.linalg.inv(bread)
    covariance = bread_inverse @ meat @ bread_inverse
    if correction and groups > 1:
        covariance *= groups / (groups - 1.0)
    return (covariance + covariance.T) / 2.0


def clustered_sandwich_se(
    design: DesignMatrix,
    fit: FitResult,
    y: Optional[np.ndarray] = None,
    correction: Optional[bool] = None,
) -> np.ndarray:
    """
    군집 강건 샌드위치 공분산

    NB2 적합에서는 (계수..., alpha) 전체 행렬을 돌려준다. 산포가 경계에
    고정된 경우에는 alpha 를 고정한 계수 블록만.

    Raises:
        ModelSpecificationError: 헤시안 특이
    """
    values = _response(design, y)
    correction = get_settings().cluster_correction if correction is None else correction
    if not fit.converged:
        logger.warning("sandwich_on_unconverged_fit", family=fit.family.value)

    X = design.matrix
    beta = np.asarray(fit.coefficients, dtype=float)
    if fit.family is ModelFamily.NEGATIVE_BINOMIAL:
        if fit.dispersion is None:
            raise ModelSpecificationError("negative binomial fit carries no dispersion")
        log_alpha = float(np.log(fit.dispersion))
        scores, _, hessian = _negbin_log_alpha_derivatives(beta, log_alpha, X, values)
        k = X.shape[1]
        if fit.dispersion_at_boundary:
            return sandwich(hessian[:k, :k], scores[:, :k], design.cluster_ids, correction)
        covariance = sandwich(hessian, scores, design.cluster_ids, correction)
        # delta method from log(alpha) to alpha
        jacobian = np.ones(k + 1)
        jacobian[k] = fit.dispersion
        return covariance * np.outer(jacobian, jacobian)

    scores = logistic_observation_scores(beta, X, values)
    return sandwich(logistic_hessian(beta, X), scores, design.cluster_ids, correction)


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------


def predict_curve(
    fit: FitResult,
    sweep: Tuple[str, Sequence[float]],
    held: Optional[Mapping[str, Any]] = None,
) -> BinnedCurve:
    """
    공변량 하나를 격자로 움직일 때의 모형 평균 (역연결 적용, 델타법 표준오차)

    격자 값은 원래 단위로 받는다. 척도 변환(예: 단어 수 / 100)은 설계 명세가
    처리하므로 곡선의 x 축은 원래 단위 그대로다.
    """
    if fit.design_spec is None:
        raise ModelSpecificationError("fit carries no design specification")
    spec = fit.design_spec
    name, grid_values = sweep
    grid = np.asarray(list(grid_values), dtype=float)
    held = dict(held or {})

    if name in spec.support:
        low, high = spec.support[name]
        outside = int(np.sum((grid < low) | (grid > high)))
        if outside:
            logger.warning(
                "prediction_outside_support",
                covariate=name,
                points=outside,
                observed_min=low,
                observed_max=high,
            )

    frame = pd.DataFrame({name: grid})
    for key, value in held.items():
        if key != name:
            frame[key] = value
    X = transform(spec, frame)
    eta = X @ fit.coefficients
    variance = np.einsum("ij,jk,ik->i", X, fit.covariance, X)
    eta_se = np.sqrt(np.clip(variance, 0.0, None))

    if fit.family is ModelFamily.NEGATIVE_BINOMIAL:
        mean = np.exp(eta)
        derivative = mean
    else:
        mean = expit(eta)
        derivative = mean * (1.0 - mean)

    return BinnedCurve(
        bin_centers=grid,
        values=mean,
        standard_errors=derivative * eta_se,
        label=f"{fit.response_name or fit.family.value}~{name}",
    )


# ---------------------------------------------------------------------------
# model catalogue
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelLayout:
    """표준 모형 배치"""

    name: str
    family: ModelFamily
    response: str
    terms: Tuple[str, ...]
    seeker_column: str
    scaled_columns: Tuple[str, ...] = ()


STANDARD_MODELS: Dict[str, ModelLayout] = {
    layout.name: layout
    for layout in (
        ModelLayout(
            "attributes",
            ModelFamily.FRACTIONAL_LOGIT,
            "scaled_rank",
            ("age", "age^2", "ethnicity", "education", "body_type", "has_children"),
            "user_id",
        ),
        ModelLayout(
            "message_length",
            ModelFamily.NEGATIVE_BINOMIAL,
            "word_count",
            ("gap", "gap^2"),
            "sender_id",
        ),
        ModelLayout(
            "positivity",
            ModelFamily.FRACTIONAL_LOGIT,
            "positive_fraction",
            ("gap", "gap^2"),
            "sender_id",
        ),
        ModelLayout(
            "reply_by_length",
            ModelFamily.LOGISTIC,
            "replied",
            ("gap", "gap^2", "word_count", "word_count^2"),
            "sender_id",
            scaled_columns=("word_count",),
        ),
        ModelLayout(
            "reply_by_positivity",
            ModelFamily.LOGISTIC,
            "replied",
            ("gap", "gap^2", "pct_positive", "pct_positive^2"),
            "sender_id",
        ),
    )
}

FITTERS: Dict[ModelFamily, Callable[..., FitResult]] = {
    ModelFamily.LOGISTIC: fit_logistic,
    ModelFamily.FRACTIONAL_LOGIT: fit_fractional_logit,
    ModelFamily.NEGATIVE_BINOMIAL: fit_negative_binomial,
}


def model_formula(layout: ModelLayout, cities: Sequence[str]) -> list:
    """여러 도시면 도시 주효과와 항별 도시 상호작용 추가 (기준 도시는 설정)"""
    terms = list(layout.terms)
    if len(set(cities)) > 1:
        terms += ["city"] + [f"{term}:city" for term in layout.terms]
    return terms


def fit_standard_model(
    name: str,
    records: pd.DataFrame,
    cluster_on: str = "seeker",
    settings: Optional[Settings] = None,
) -> FitResult:
    """
    표준 모형 적합

    Args:
        name: STANDARD_MODELS 키
        records: 격차 기록 (메시지 모형) 또는 순위가 붙은 사용자 (속성 모형)
        cluster_on: "seeker" (사용자별) 또는 "city"
    """
    settings = settings or get_settings()
    if name not in STANDARD_MODELS:
        raise ModelSpecificationError(
            f"unknown model {name!r}; expected one of {sorted(STANDARD_MODELS)}"
        )
    if cluster_on not in ("seeker", "city"):
        raise ModelSpecificationError(f"unknown cluster choice {cluster_on!r}")

    layout = STANDARD_MODELS[name]
    cities = records["city"].dropna().unique().tolist() if "city" in records else []
    design = build_design(
        records,
        model_formula(layout, cities),
        cluster_column=layout.seeker_column if cluster_on == "seeker" else "city",
        response=layout.response,
        scales={column: settings.word_count_scale for column in layout.scaled_columns},
        settings=settings,
    )
    return FITTERS[layout.family](design, settings=settings)
