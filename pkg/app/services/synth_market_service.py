"""
합성 시장 생성 서비스

Latent ranks are equally spaced per sex and shuffled. Each sender owns a
random stream derived from (seed, sender index), so the generated market does
not depend on how senders are split across threads.
"""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit
from scipy.stats import spearmanr

from app.config import Settings, get_settings
from app.models.market_models import MESSAGE_COLUMNS, USER_COLUMNS, MarketDataset
from app.models.synth_models import (
    GenerativeConfig,
    GroundTruth,
    RoundtripReport,
    Strategy,
    TextModel,
    latent_grid,
)
from app.services import export_service
from app.services.design_service import build_design
from app.services.gap_analytics_service import (
    build_gap_records,
    reply_rate_by_gap,
    user_gap_profiles,
)
from app.services.graph_service import (
    build_contact_graph,
    largest_weakly_connected_component,
    pagerank,
    rank_market,
    scaled_rank,
)
from app.services.market_data_service import MarketDataService
from app.services.regression_service import fit_logistic
from app.utils.logging_config import get_logger

logger = get_logger(__name__)

ETHNICITIES = ("asian", "black", "hispanic", "white", "other")
ETHNICITY_WEIGHTS = (0.15, 0.1, 0.1, 0.6, 0.05)
EDUCATION_LEVELS = ("no_college", "college", "post_college")
EDUCATION_WEIGHTS = (0.3, 0.45, 0.25)
BODY_TYPES = ("thin", "average", "athletic", "curvy")
ROMANTIC_SEEKING = ("dating", "long_term", "short_term")
MIN_RECEIVER_EDGES = 5
_CHUNK = 256


def _population_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))


def _sender_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, index)))


def _population(config: GenerativeConfig) -> pd.DataFrame:
    rng = _population_rng(config.seed)
    frames = []
    for sex, prefix, size in (("male", "m", config.n_men), ("female", "f", config.n_women)):
        width = max(5, len(str(size)))
        frames.append(
            pd.DataFrame(
                {
                    "user_id": [f"{prefix}{i + 1:0{width}d}" for i in range(size)],
                    "sex": sex,
                    "city": config.city,
                    "age": rng.integers(18, 66, size=size),
                    "ethnicity": rng.choice(ETHNICITIES, size=size, p=ETHNICITY_WEIGHTS),
                    "education": rng.choice(
                        EDUCATION_LEVELS, size=size, p=EDUCATION_WEIGHTS
                    ),
                    "body_type": rng.choice(BODY_TYPES, size=size),
                    "has_children": rng.choice(["yes", "no"], size=size, p=[0.3, 0.7]),
                    "seeking": rng.choice(ROMANTIC_SEEKING, size=size),
                    "latent_rank": rng.permutation(latent_grid(size)),
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def _contact_count(rng: np.random.Generator, mean: float) -> int:
    return int(max(1, rng.poisson(mean)))


def _word_counts(
    rng: np.random.Generator, gaps: np.ndarray, text: TextModel
) -> Tuple[np.ndarray, np.ndarray]:
    """NB2 word counts (gamma-Poisson mixture) and binomial positive words."""
    mean = np.exp(text.length_intercept + text.length_slope * gaps)
    shape = 1.0 / text.length_dispersion
    words = rng.poisson(rng.gamma(shape, mean / shape))
    positive = rng.binomial(
        words, expit(text.positivity_intercept + text.positivity_slope * gaps)
    )
    return words.astype(np.int64), positive.astype(np.int64)


class _SenderDraws:
    """발신자 한 명의 접촉 생성"""

    def __init__(
        self,
        config: GenerativeConfig,
        receivers: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]],
    ):
        self.config = config
        self.receivers = receivers

    def targets(
        self,
        rng: np.random.Generator,
        own: float,
        mean_contacts: float,
        latent: np.ndarray,
        order: np.ndarray,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Receiver indices and the intended gap for each."""
        config = self.config
        n = latent.size
        if config.strategy is Strategy.COMPETITION:
            k = min(_contact_count(rng, mean_contacts), n - 1)
            weights = latent / latent.sum()
            chosen = rng.choice(n, size=k, replace=False, p=weights)
            return chosen, latent[chosen] - own

        k = min(_contact_count(rng, mean_contacts), n)
        reach = config.reach if config.strategy is Strategy.HYBRID else 0.0
        offset = reach + rng.normal(0.0, config.gap_noise, size=k)
        target = np.clip(own + offset, 0.0, 1.0)
        sorted_latent = latent[order]
        position = np.clip(np.searchsorted(sorted_latent, target), 1, n - 1)
        left = sorted_latent[position - 1]
        right = sorted_latent[position]
        position = position - ((target - left) <= (right - target))
        chosen = order[position]
        _, first = np.unique(chosen, return_index=True)
        keep = np.sort(first)
        return chosen[keep], np.clip(offset[keep], -1.0, 1.0)

    def draw(self, index: int, sender: pd.Series) -> Dict[str, np.ndarray]:
        config = self.config
        rng = _sender_rng(config.seed, index)
        female = sender["sex"] == "female"
        mean_contacts = config.mean_contacts * (
            config.women_contact_ratio if female else 1.0
        )
        latent, order, ids = self.receivers["male" if female else "female"]

        own = float(sender["latent_rank"])
        chosen, true_gap = self.targets(rng, own, mean_contacts, latent, order)
        realized = latent[chosen] - own
        k = chosen.size

        window = config.window_length
        sent_at = rng.integers(0, window - 1, size=k)
        probability = expit(config.reply_intercept + config.reply_slope * realized)
        replied = rng.random(k) < probability
        reply_at = rng.integers(sent_at + 1, window + 1)
        words, positive = _word_counts(rng, realized, config.text_model)
        reply_words, reply_positive = _word_counts(rng, -realized, config.text_model)

        return {
            "sender_id": np.full(k, sender["user_id"], dtype=object),
            "receiver_id": ids[chosen],
            "sender_sex": np.full(k, sender["sex"], dtype=object),
            "sender_latent": np.full(k, own),
            "receiver_latent": latent[chosen],
            "true_gap": true_gap,
            "realized_gap": realized,
            "reply_probability": probability,
            "replied": replied,
            "timestamp": sent_at,
            "reply_timestamp": reply_at,
            "word_count": words,
            "positive_word_count": positive,
            "reply_word_count": reply_words,
            "reply_positive_word_count": reply_positive,
        }

    def draw_chunk(self, senders: pd.DataFrame) -> List[Dict[str, np.ndarray]]:
        return [self.draw(int(index), row) for index, row in senders.iterrows()]


def generate_market(
    config: GenerativeConfig,
    threads: int = 1,
    settings: Optional[Settings] = None,
) -> Tuple[MarketDataset, GroundTruth]:
    """
    합성 시장 생성

    Args:
        config: 생성 설정
        threads: 발신자 묶음을 처리할 스레드 수 (결과에 영향 없음)

    Returns:
        (MarketDataset, GroundTruth)
    """
    settings = settings or get_settings()
    population = _population(config)

    receivers = {}
    for sex in ("male", "female"):
        group = population[population["sex"] == sex]
        latent = group["latent_rank"].to_numpy(dtype=float)
        receivers[sex] = (
            latent,
            np.argsort(latent, kind="stable"),
            group["user_id"].to_numpy(dtype=object),
        )

    sampler = _SenderDraws(config, receivers)
    chunks = [
        population.iloc[start : start + _CHUNK]
        for start in range(0, len(population), _CHUNK)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(sampler.draw_chunk, chunks))
    else:
        results = [sampler.draw_chunk(chunk) for chunk in chunks]

    draws = [draw for chunk in results for draw in chunk]
    initiations = pd.DataFrame(
        {key: np.concatenate([draw[key] for draw in draws]) for key in draws[0]}
    )

    # 순서 없는 쌍마다 발신자 순서상 첫 접촉만
    pair = pd.DataFrame(
        np.sort(initiations[["sender_id", "receiver_id"]].to_numpy(dtype=object), axis=1)
    )
    duplicate = pair.duplicated(keep="first").to_numpy()
    initiations = initiations[~duplicate].reset_index(drop=True)

    replies = initiations[initiations["replied"]]
    outgoing = pd.DataFrame(
        {
            "sender_id": initiations["sender_id"],
            "receiver_id": initiations["receiver_id"],
            "timestamp": initiations["timestamp"],
            "word_count": initiations["word_count"],
            "positive_word_count": initiations["positive_word_count"],
        }
    )
    answered = pd.DataFrame(
        {
            "sender_id": replies["receiver_id"],
            "receiver_id": replies["sender_id"],
            "timestamp": replies["reply_timestamp"],
            "word_count": replies["reply_word_count"],
            "positive_word_count": replies["reply_positive_word_count"],
        }
    )
    messages = pd.concat([outgoing, answered], ignore_index=True).assign(text="")
    messages = messages[MESSAGE_COLUMNS]

    service = MarketDataService(settings)
    dataset = service.build_market(
        population[USER_COLUMNS],
        messages,
        window=(0, config.window_length),
        city=config.city,
    )

    counts: Dict[str, int] = {"duplicates_removed": int(duplicate.sum())}
    for sex in ("male", "female"):
        sent = initiations[initiations["sender_sex"] == sex]
        counts[f"users_{sex}"] = int((population["sex"] == sex).sum())
        counts[f"initiations_{sex}"] = len(sent)
        counts[f"replies_{sex}"] = int(sent["replied"].sum())

    truth = GroundTruth(
        latent_rank=population.set_index("user_id")["latent_rank"],
        messages=initiations[
            [
                "sender_id",
                "receiver_id",
                "sender_sex",
                "sender_latent",
                "receiver_latent",
                "true_gap",
                "realized_gap",
                "reply_probability",
                "replied",
                "timestamp",
            ]
        ],
        counts=counts,
    )
    logger.info(
        "market_generated",
        strategy=config.strategy.value,
        users=len(population),
        initiations=len(initiations),
        replies=int(initiations["replied"].sum()),
        seed=config.seed,
    )
    return dataset, truth


def write_market_csv(
    dataset: MarketDataset, truth: GroundTruth, out_dir: str
) -> Dict[str, Path]:
    """users.csv, messages.csv 와 latent_rank.csv 사이드카 저장"""
    out = Path(out_dir)
    messages = dataset.first_contacts[MESSAGE_COLUMNS].drop(columns=["text"])
    paths = {
        "users": export_service.write_csv(dataset.users[USER_COLUMNS], out / "users.csv"),
        "messages": export_service.write_csv(messages, out / "messages.csv"),
        "latent_rank": export_service.write_csv(
            truth.latent_frame(), out / "latent_rank.csv"
        ),
    }
    logger.info("market_written", out_dir=str(out), files=len(paths))
    return paths


def _spearman(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    if x.size < 3 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    value = float(spearmanr(x, y).statistic)
    return value if np.isfinite(value) else None


def pipeline_roundtrip(
    config: GenerativeConfig,
    settings: Optional[Settings] = None,
    threads: int = 1,
) -> RoundtripReport:
    """
    생성 -> 네트워크 -> 격차 -> 로지스틱 적합, 추정값을 실제값과 비교
    """
    settings = settings or get_settings()
    dataset, truth = generate_market(config, threads=threads, settings=settings)

    graph = largest_weakly_connected_component(build_contact_graph(dataset))
    table = scaled_rank(pagerank(graph, settings=settings), dataset.users)

    latent = truth.latent_rank.reindex(table.node_ids).to_numpy(dtype=float)
    estimated = np.asarray(table.scaled_rank, dtype=float)
    rank_spearman = _spearman(latent, estimated)
    receivers = graph.in_degree >= MIN_RECEIVER_EDGES
    receiver_spearman = _spearman(latent[receivers], estimated[receivers])

    gaps = build_gap_records(dataset, table)
    profiles = user_gap_profiles(gaps)
    estimated_gap = float(profiles["median_gap"].mean())
    true_gap = float(
        truth.messages.groupby("sender_id")["realized_gap"].median().mean()
    )

    # 응답 모형은 응답 간선을 뺀 그래프의 순위로 적합
    reply_table = rank_market(dataset, settings=settings, include_replies=False)
    reply_gaps = build_gap_records(dataset, reply_table)
    design = build_design(
        reply_gaps,
        "gap",
        cluster_column="sender_id",
        response="replied",
        settings=settings,
    )
    fit = fit_logistic(design, settings=settings)
    slope = fit.coefficient("gap")
    slope_se = fit.standard_error("gap")
    if config.reply_slope == 0:
        recovered = bool(abs(slope) < 3.0 * slope_se)
    else:
        recovered = bool(np.sign(slope) == np.sign(config.reply_slope))

    curve = reply_rate_by_gap(gaps, settings=settings)

    report = RoundtripReport(
        strategy=config.strategy,
        n_users=dataset.n_users,
        n_ranked=graph.n,
        n_initiations=len(gaps),
        rank_spearman=rank_spearman if rank_spearman is not None else float("nan"),
        rank_spearman_receivers=receiver_spearman,
        true_mean_median_gap=true_gap,
        estimated_mean_median_gap=estimated_gap,
        true_reply_slope=config.reply_slope,
        estimated_reply_slope=slope,
        reply_slope_se=slope_se,
        reply_slope_sign_recovered=recovered,
        reply_curve_spearman=_spearman(curve.bin_centers, curve.values),
        fit_converged=fit.converged,
    )
    logger.info("roundtrip_completed", **report.to_dict())
    return report
