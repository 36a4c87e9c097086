"""
접촉 네트워크 및 PageRank 기반 매력도 서비스
"""

from typing import Iterable, Optional, Union

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.stats import rankdata

from app.config import Settings, get_settings
from app.exceptions import ConfigurationError, ConvergenceError, DataValidationError
from app.models.graph_models import ContactGraph, DesirabilityTable
from app.models.market_models import MarketDataset, UserRecord
from app.utils.logging_config import get_logger

logger = get_logger(__name__)


def build_contact_graph(
    dataset: MarketDataset, include_replies: bool = True
) -> ContactGraph:
    """
    첫 접촉 네트워크 구성

    첫 접촉마다 sender -> receiver 간선, 답장을 받은 접촉에는 역방향 간선.
    역방향 간선은 대개 상대의 첫 접촉과 겹치므로 순서쌍당 하나로 합친다.

    Args:
        include_replies: False 이면 대화를 시작한 접촉(is_initiation)의 간선만
    """
    node_ids = dataset.users["user_id"].to_numpy(dtype=object)
    n = len(node_ids)
    index = pd.Series(np.arange(n), index=node_ids)

    contacts = dataset.first_contacts
    if not include_replies:
        contacts = contacts[contacts["is_initiation"].to_numpy(dtype=bool)]
    src = index.reindex(contacts["sender_id"]).to_numpy()
    dst = index.reindex(contacts["receiver_id"]).to_numpy()
    replied = contacts["replied"].to_numpy(dtype=bool) & include_replies

    sources = np.concatenate([src, dst[replied]]).astype(np.int64)
    targets = np.concatenate([dst, src[replied]]).astype(np.int64)
    adjacency = _adjacency(sources, targets, n)

    logger.debug("contact_graph_built", nodes=n, edges=adjacency.nnz)
    return ContactGraph(node_ids=node_ids, adjacency=adjacency)


def _adjacency(sources: np.ndarray, targets: np.ndarray, n: int) -> sparse.csr_matrix:
    # a[i, j] = 1 iff edge j -> i
    loops = sources == targets
    sources, targets = sources[~loops], targets[~loops]
    matrix = sparse.coo_matrix(
        (np.ones(len(sources)), (targets, sources)), shape=(n, n)
    ).tocsr()
    matrix.sum_duplicates()
    matrix.data[:] = 1.0
    return matrix


def graph_from_edges(
    node_ids: Iterable, sources: Iterable[int], targets: Iterable[int]
) -> ContactGraph:
    """간선 목록(인덱스)으로 그래프 생성"""
    ids = np.asarray(list(node_ids), dtype=object)
    adjacency = _adjacency(
        np.asarray(list(sources), dtype=np.int64),
        np.asarray(list(targets), dtype=np.int64),
        len(ids),
    )
    return ContactGraph(node_ids=ids, adjacency=adjacency)


def largest_weakly_connected_component(graph: ContactGraph) -> ContactGraph:
    """
    가장 큰 약연결 성분의 유도 부분그래프

    크기가 같으면 가장 작은 노드 인덱스를 가진 성분을 택한다.
    """
    if graph.n == 0:
        return graph

    n_components, labels = connected_components(
        graph.adjacency, directed=True, connection="weak"
    )
    sizes = np.bincount(labels, minlength=n_components)
    smallest_member = np.full(n_components, graph.n, dtype=np.int64)
    np.minimum.at(smallest_member, labels, np.arange(graph.n))
    chosen = np.lexsort((smallest_member, -sizes))[0]

    keep = np.flatnonzero(labels == chosen)
    if len(keep) == graph.n:
        return graph

    subgraph = graph.adjacency[keep][:, keep].tocsr()
    logger.info(
        "largest_component_selected",
        components=int(n_components),
        kept=len(keep),
        dropped=graph.n - len(keep),
    )
    return ContactGraph(node_ids=graph.node_ids[keep], adjacency=subgraph)


def pagerank(
    graph: ContactGraph,
    alpha: Optional[float] = None,
    tolerance: Optional[float] = None,
    max_iterations: Optional[int] = None,
    settings: Optional[Settings] = None,
) -> DesirabilityTable:
    """
    PageRank 점수 계산

    x_i = 1 + alpha * sum_j a_ij x_j / outdeg_j 를 x = 0 에서 시작하는
    동기(Jacobi) 반복으로 푼다. 나가는 간선이 없는 노드는 기여하지 않는다.

    Args:
        graph: 접촉 네트워크
        alpha: 감쇠 계수, [0, 1)
        tolerance: 최대 노름 변화량 기준
        max_iterations: 최대 반복 횟수

    Raises:
        ConfigurationError: alpha 범위 밖, tolerance <= 0
        ConvergenceError: max_iterations 안에 수렴하지 못함
    """
    settings = settings or get_settings()
    alpha = settings.pagerank_alpha if alpha is None else alpha
    tolerance = settings.pagerank_tolerance if tolerance is None else tolerance
    max_iterations = (
        settings.pagerank_max_iterations if max_iterations is None else max_iterations
    )

    if not 0.0 <= alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in [0, 1), got {alpha}", alpha=alpha)
    if tolerance <= 0:
        raise ConfigurationError(
            f"tolerance must be positive, got {tolerance}", tolerance=tolerance
        )
    if max_iterations < 1:
        raise ConfigurationError(
            f"max_iterations must be positive, got {max_iterations}",
            max_iterations=max_iterations,
        )

    n = graph.n
    if n == 0:
        empty = np.array([], dtype=float)
        return DesirabilityTable(
            node_ids=graph.node_ids, score=empty, alpha=alpha, iterations=0, residual=0.0
        )

    out_degree = graph.out_degree.astype(float)
    inverse_out = np.zeros(n)
    np.divide(1.0, out_degree, out=inverse_out, where=out_degree > 0)
    adjacency = graph.adjacency

    x = np.zeros(n)
    residual = np.inf
    for iteration in range(1, max_iterations + 1):
        updated = 1.0 + alpha * (adjacency @ (x * inverse_out))
        residual = float(np.max(np.abs(updated - x)))
        x = updated
        # scores near 1e4 cannot resolve changes below a few ulps
        floor = 8.0 * np.finfo(float).eps * float(np.max(x))
        if residual <= max(tolerance, floor):
            logger.info(
                "pagerank_converged",
                nodes=n,
                edges=graph.edge_count,
                alpha=alpha,
                iterations=iteration,
                residual=residual,
            )
            return DesirabilityTable(
                node_ids=graph.node_ids,
                score=x,
                alpha=alpha,
                iterations=iteration,
                residual=residual,
            )

    logger.error("pagerank_not_converged", residual=residual, iterations=max_iterations)
    raise ConvergenceError(
        f"PageRank did not converge in {max_iterations} iterations "
        f"(residual {residual:.3e} > tolerance {tolerance:.1e})",
        residual=residual,
        iterations=max_iterations,
    )


def pagerank_residual(graph: ContactGraph, table: DesirabilityTable) -> float:
    """max_i |x_i - 1 - alpha * sum_j a_ij x_j / outdeg_j|"""
    out_degree = graph.out_degree.astype(float)
    inverse_out = np.zeros(graph.n)
    np.divide(1.0, out_degree, out=inverse_out, where=out_degree > 0)
    rhs = 1.0 + table.alpha * (graph.adjacency @ (table.score * inverse_out))
    return float(np.max(np.abs(table.score - rhs))) if graph.n else 0.0


def scaled_rank(
    table: DesirabilityTable,
    users: Union[pd.DataFrame, Iterable[UserRecord]],
) -> DesirabilityTable:
    """
    (성별, 도시) 층 내 척도화 순위

    층 안에서 점수 오름차순 위치 p 에 대해 (p - 1) / (m - 1), 동점은 평균 위치,
    크기 1 인 층은 1.

    Raises:
        DataValidationError: 성별을 알 수 없는 노드가 있는 경우
    """
    if isinstance(users, pd.DataFrame):
        frame = users[["user_id", "sex", "city"]]
    else:
        frame = pd.DataFrame(
            [(u.user_id, u.sex.value, u.city) for u in users],
            columns=["user_id", "sex", "city"],
        )
    lookup = frame.drop_duplicates("user_id").set_index("user_id")
    attributes = lookup.reindex(table.node_ids)
    if attributes["sex"].isna().any():
        missing = attributes.index[attributes["sex"].isna()][0]
        raise DataValidationError(f"scored node {missing!r} has no sex", user_id=missing)

    scored = pd.DataFrame(
        {
            "sex": attributes["sex"].to_numpy(),
            "city": attributes["city"].fillna("").to_numpy(),
            "score": table.score,
        }
    )
    ranks = scored.groupby(["sex", "city"], sort=False)["score"].transform(_stratum_rank)

    return table.with_ranks(
        sex=scored["sex"].to_numpy(dtype=object),
        city=scored["city"].to_numpy(dtype=object),
        scaled_rank=ranks.to_numpy(dtype=float),
    )


def _stratum_rank(scores: pd.Series) -> np.ndarray:
    size = len(scores)
    if size == 1:
        return np.ones(1)
    positions = rankdata(scores.to_numpy(), method="average")
    return (positions - 1.0) / (size - 1.0)


def rank_market(
    dataset: MarketDataset,
    alpha: Optional[float] = None,
    tolerance: Optional[float] = None,
    settings: Optional[Settings] = None,
    include_replies: bool = True,
) -> DesirabilityTable:
    """네트워크 구성 -> 최대 약연결 성분 -> PageRank -> 척도화 순위"""
    graph = largest_weakly_connected_component(
        build_contact_graph(dataset, include_replies=include_replies)
    )
    table = pagerank(graph, alpha=alpha, tolerance=tolerance, settings=settings)
    return scaled_rank(table, dataset.users)
