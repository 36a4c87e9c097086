"""
Contact network and desirability score containers.
"""

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import sparse


@dataclass(frozen=True)
class ContactGraph:
    """Directed contact network.

    ``adjacency[i, j] == 1`` iff there is an edge j -> i, so column j lists
    the out-edges of node j and row i lists the in-edges of node i.
    """

    node_ids: np.ndarray
    adjacency: sparse.csr_matrix

    @property
    def n(self) -> int:
        return int(self.node_ids.shape[0])

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.nnz)

    @property
    def out_degree(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=0)).ravel().astype(np.int64)

    @property
    def in_degree(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel().astype(np.int64)

    def out_edges(self, node: int) -> np.ndarray:
        column = self.adjacency[:, [node]]
        return np.sort(column.nonzero()[0])

    def in_edges(self, node: int) -> np.ndarray:
        return np.sort(self.adjacency.indices[
            self.adjacency.indptr[node]:self.adjacency.indptr[node + 1]
        ])

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """(source, target) index arrays in row-major order."""
        coo = self.adjacency.tocoo()
        return coo.col.astype(np.int64), coo.row.astype(np.int64)

    def index_of(self) -> dict:
        return {uid: i for i, uid in enumerate(self.node_ids.tolist())}


@dataclass(frozen=True)
class DesirabilityTable:
    """PageRank scores plus, once filled, per-stratum scaled ranks."""

    node_ids: np.ndarray
    score: np.ndarray
    alpha: float
    iterations: int
    residual: float
    sex: Optional[np.ndarray] = None
    city: Optional[np.ndarray] = None
    scaled_rank: Optional[np.ndarray] = field(default=None)

    def with_ranks(
        self, sex: np.ndarray, city: np.ndarray, scaled_rank: np.ndarray
    ) -> "DesirabilityTable":
        return replace(self, sex=sex, city=city, scaled_rank=scaled_rank)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"user_id": self.node_ids, "pagerank": self.score})
        if self.sex is not None:
            frame.insert(1, "sex", self.sex)
        if self.city is not None:
            frame["city"] = self.city
        if self.scaled_rank is not None:
            frame["scaled_rank"] = self.scaled_rank
        return frame

    def rank_lookup(self) -> pd.Series:
        if self.scaled_rank is None:
            raise ValueError("scaled ranks have not been computed")
        return pd.Series(self.scaled_rank, index=pd.Index(self.node_ids, name="user_id"))
