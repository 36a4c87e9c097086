"""
Unit tests for desirability-gap analytics.
"""

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.integrate import trapezoid

from app.config import Settings
from app.exceptions import ConfigurationError, DataValidationError
from app.models.gap_models import GapRecord, UserGapProfile
from app.services.gap_analytics_service import (
    absolute_gap_success_correlation,
    build_gap_records,
    desirability_gap,
    desirability_profile,
    gap_density,
    iqr_by_gap,
    reply_rate_by_gap,
    sender_receiver_correlation,
    user_gap_profiles,
    volume_by_gap,
)
from app.services.graph_service import rank_market
from app.services.market_data_service import MarketDataService


def random_gaps(seed, senders=40, size=600):
    rng = np.random.default_rng(seed)
    sender_rank = rng.uniform(size=size)
    receiver_rank = rng.uniform(size=size)
    gap = receiver_rank - sender_rank
    return pd.DataFrame(
        {
            "sender_id": [f"s{i:02d}" for i in rng.integers(0, senders, size)],
            "receiver_id": [f"r{i}" for i in range(size)],
            "sender_sex": "male",
            "city": "boston",
            "sender_rank": sender_rank,
            "receiver_rank": receiver_rank,
            "gap": gap,
            "replied": rng.uniform(size=size) < 0.5 - 0.3 * gap,
        }
    )


class TestGap:
    """Gap of a single contact"""

    def test_endpoints(self):
        """Bottom to top gives +1, top to bottom gives -1."""
        assert desirability_gap(0.0, 1.0) == 1.0
        assert desirability_gap(1.0, 0.0) == -1.0

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_bounded(self, sender, receiver):
        """Gaps lie in [-1, 1]."""
        assert -1.0 <= desirability_gap(sender, receiver) <= 1.0

    @pytest.mark.parametrize("sender, receiver", [(-0.1, 0.5), (0.5, 1.2)])
    def test_rank_out_of_range(self, sender, receiver):
        """Ranks outside [0, 1] are rejected."""
        with pytest.raises(DataValidationError):
            desirability_gap(sender, receiver)

    def test_gap_record_bounds(self):
        """A record cannot carry a gap outside [-1, 1]."""
        with pytest.raises(ValueError):
            GapRecord(sender_id="a", receiver_id="b", gap=1.5, replied=False)


class TestGapRecords:
    """Gap records from a ranked market"""

    def test_only_ranked_initiations(self, small_users, small_messages):
        """Contacts outside the largest component are skipped."""
        dataset = MarketDataService().build_market(small_users, small_messages)
        table = rank_market(dataset)

        records = build_gap_records(dataset, table)

        # m3 <-> f2 is a separate component; f1 -> m1 is a reply
        assert sorted(zip(records["sender_id"], records["receiver_id"])) == [
            ("f3", "m2"),
            ("m1", "f1"),
            ("m2", "f1"),
        ]
        assert_allclose(
            records["gap"], records["receiver_rank"] - records["sender_rank"]
        )
        assert records["replied"].tolist().count(True) == 1

    def test_synthetic_market_records(self, hybrid_market):
        """Every record has ranks in [0, 1] and a consistent gap."""
        dataset, _ = hybrid_market
        records = build_gap_records(dataset, rank_market(dataset))

        assert len(records) > 0
        assert records["gap"].between(-1.0, 1.0).all()
        assert set(records["sender_sex"]) <= {"male", "female"}


class TestProfiles:
    """Per-sender profiles"""

    def test_percentiles_match_numpy(self):
        """Median and IQR use linear interpolation between order statistics."""
        gaps = random_gaps(3)
        profiles = user_gap_profiles(gaps).set_index("user_id")

        for sender, group in gaps.groupby("sender_id"):
            values = group["gap"].to_numpy()
            q25, q50, q75 = np.percentile(values, [25, 50, 75])
            row = profiles.loc[sender]
            assert row["median_gap"] == pytest.approx(q50)
            assert row["iqr_gap"] == pytest.approx(q75 - q25)
            assert row["mean_gap"] == pytest.approx(values.mean())
            assert row["n_contacted"] == len(values)

    def test_percentiles_against_order_statistics(self):
        """Every sample size up to 20, with and without ties."""

        def interpolated(values, fraction):
            ordered = sorted(values)
            position = (len(ordered) - 1) * fraction
            low = int(np.floor(position))
            high = min(low + 1, len(ordered) - 1)
            return ordered[low] + (position - low) * (ordered[high] - ordered[low])

        rng = np.random.default_rng(12)
        rows = []
        for size in range(1, 21):
            for draw in range(5):
                if draw % 2:
                    values = rng.integers(-5, 6, size) / 5.0
                else:
                    values = rng.uniform(-1, 1, size)
                rows.extend((f"s{size:02d}_{draw}", float(v)) for v in values)
        gaps = pd.DataFrame(rows, columns=["sender_id", "gap"])

        profiles = user_gap_profiles(gaps).set_index("user_id")

        for sender, group in gaps.groupby("sender_id"):
            values = group["gap"].tolist()
            row = profiles.loc[sender]
            assert row["median_gap"] == pytest.approx(interpolated(values, 0.5))
            assert row["iqr_gap"] == pytest.approx(
                interpolated(values, 0.75) - interpolated(values, 0.25), abs=1e-12
            )

    def test_single_contact_has_zero_iqr(self):
        """One contact gives an IQR of zero."""
        records = [GapRecord(sender_id="a", receiver_id="b", gap=0.3, replied=True)]
        profiles = user_gap_profiles(records)

        assert profiles.loc[0, "iqr_gap"] == 0.0
        assert profiles.loc[0, "median_gap"] == pytest.approx(0.3)

    def test_profile_model_rejects_singleton_iqr(self):
        """A profile with one contact must carry a zero IQR."""
        with pytest.raises(ValueError):
            UserGapProfile(
                user_id="a", median_gap=0.0, mean_gap=0.0, iqr_gap=0.1, n_contacted=1
            )

    def test_empty_input(self):
        """No gaps gives an empty profile table."""
        assert user_gap_profiles([]).empty


class TestDensity:
    """Kernel density of gaps"""

    @pytest.mark.parametrize("bandwidth", ["silverman", "scott", 0.05])
    def test_integrates_to_one(self, bandwidth, test_settings):
        """Trapezoid area over the grid is 1."""
        values = np.random.default_rng(0).normal(0.2, 0.2, 500).clip(-1, 1)

        curve = gap_density(values, bandwidth=bandwidth, settings=test_settings)

        assert len(curve) == 201
        assert curve.bin_centers[0] == -1.0 and curve.bin_centers[-1] == 1.0
        assert trapezoid(curve.values, curve.bin_centers) == pytest.approx(1.0)
        assert np.all(curve.values >= 0)
        assert curve.counts is None

    def test_mode_near_data_centre(self, test_settings):
        """The density peaks close to the sample centre."""
        values = np.random.default_rng(1).normal(0.25, 0.05, 2000)

        curve = gap_density(values, settings=test_settings)

        assert abs(curve.bin_centers[np.argmax(curve.values)] - 0.25) < 0.03

    def test_identical_values_still_normalise(self, test_settings):
        """A degenerate sample falls back to the grid step."""
        curve = gap_density([0.1, 0.1, 0.1], settings=test_settings)

        assert trapezoid(curve.values, curve.bin_centers) == pytest.approx(1.0)

    def test_too_few_values(self, test_settings):
        """At least two values are needed."""
        with pytest.raises(DataValidationError):
            gap_density([0.5], settings=test_settings)

    @pytest.mark.parametrize("bandwidth", ["wide", 0.0, -1.0])
    def test_bad_bandwidth(self, bandwidth, test_settings):
        """Unknown rules and nonpositive widths are rejected."""
        with pytest.raises(ConfigurationError):
            gap_density([0.1, 0.2, 0.3], bandwidth=bandwidth, settings=test_settings)


class TestBinnedCurves:
    """Reply rate, volume and IQR by gap"""

    def test_reply_rate_conserves_observations(self):
        """Kept counts plus omitted observations equal the input size."""
        gaps = random_gaps(4)

        curve = reply_rate_by_gap(gaps, n_bins=20, min_count=40)

        assert int(curve.counts.sum()) + curve.omitted == len(gaps)
        assert np.all(curve.counts >= 40)
        assert np.all((curve.values >= 0) & (curve.values <= 1))
        assert_allclose(
            curve.standard_errors,
            np.sqrt(curve.values * (1 - curve.values) / curve.counts),
        )

    def test_reply_rate_falls_with_gap(self):
        """Replies become rarer as the gap grows."""
        gaps = random_gaps(5, size=5000)

        curve = reply_rate_by_gap(gaps, n_bins=10, min_count=50)

        assert curve.values[0] > curve.values[-1]

    def test_constant_gap_single_bin(self):
        """A constant gap collapses into one bin."""
        gaps = pd.DataFrame({"gap": [0.2] * 5, "replied": [1, 0, 1, 1, 0]})

        curve = reply_rate_by_gap(gaps, n_bins=20, min_count=1)

        assert curve.bin_centers.tolist() == [0.2]
        assert curve.values.tolist() == [0.6]

    def test_empty_records(self):
        """No records give an empty curve."""
        curve = reply_rate_by_gap(pd.DataFrame({"gap": [], "replied": []}), 5, 1)

        assert curve.is_empty

    def test_every_bin_under_minimum(self):
        """A high minimum omits everything."""
        gaps = random_gaps(6, size=100)

        curve = reply_rate_by_gap(gaps, n_bins=20, min_count=1000)

        assert curve.is_empty
        assert curve.omitted == 100

    def test_volume_and_iqr(self):
        """Volume and IQR curves bin senders by their mean gap."""
        profiles = user_gap_profiles(random_gaps(7, senders=200, size=4000))

        volume = volume_by_gap(profiles, n_bins=5, min_count=5)
        raw = iqr_by_gap(profiles, n_bins=5, min_count=5, control="none")
        controlled = iqr_by_gap(profiles, n_bins=5, min_count=5, control="log_residual")

        assert int(volume.counts.sum()) + volume.omitted == len(profiles)
        assert raw.counts.tolist() == controlled.counts.tolist()
        # the residual adjustment keeps the overall mean
        assert np.average(controlled.values, weights=controlled.counts) == (
            pytest.approx(np.average(raw.values, weights=raw.counts), abs=0.05)
        )

    def test_defaults_come_from_settings(self):
        """Bin count, minimum and IQR control default to the given settings."""
        settings = Settings(
            _env_file=None, gap_bins=3, min_bin_count=1, iqr_control="none"
        )
        gaps = random_gaps(11)
        profiles = user_gap_profiles(gaps)

        reply = reply_rate_by_gap(gaps, settings=settings)
        volume = volume_by_gap(profiles, settings=settings)
        spread = iqr_by_gap(profiles, settings=settings)
        raw = iqr_by_gap(profiles, n_bins=3, min_count=1, control="none")

        assert len(reply) == 3
        assert int(reply.counts.sum()) == len(gaps)
        assert len(volume) == 3
        assert_allclose(spread.values, raw.values)

    def test_unknown_iqr_control(self):
        """Unknown control modes are rejected."""
        profiles = user_gap_profiles(random_gaps(8))

        with pytest.raises(ConfigurationError):
            iqr_by_gap(profiles, n_bins=5, min_count=1, control="quantile")

    def test_curve_frame(self):
        """Curves export one row per kept bin."""
        curve = reply_rate_by_gap(random_gaps(9), n_bins=4, min_count=1)

        frame = curve.to_frame()

        assert list(frame.columns) == ["bin_center", "value", "count", "standard_error"]
        assert len(frame) == len(curve)


class TestCorrelations:
    """Correlations over first contacts"""

    def test_sender_receiver_correlation(self):
        """Perfectly aligned ranks correlate at 1."""
        ranks = np.linspace(0, 1, 10)
        gaps = pd.DataFrame(
            {
                "sender_id": list("abcdefghij"),
                "receiver_id": list("klmnopqrst"),
                "sender_rank": ranks,
                "receiver_rank": 0.5 * ranks + 0.1,
                "gap": 0.1 - 0.5 * ranks,
                "replied": [True] * 10,
            }
        )

        assert sender_receiver_correlation(gaps) == pytest.approx(1.0)

    def test_zero_variance(self):
        """A constant margin is rejected."""
        gaps = pd.DataFrame(
            {"sender_rank": [0.5, 0.5, 0.5], "receiver_rank": [0.1, 0.2, 0.3]}
        )

        with pytest.raises(DataValidationError, match="zero variance"):
            sender_receiver_correlation(gaps)

    def test_absolute_gap_success(self):
        """Mean absolute gap correlates within [-1, 1]."""
        r = absolute_gap_success_correlation(random_gaps(10))

        assert -1.0 <= r <= 1.0

    def test_desirability_profile(self, hybrid_market):
        """Mean scaled rank per education level and sex."""
        dataset, _ = hybrid_market
        table = rank_market(dataset)

        profile = desirability_profile(table, dataset.users, "education")

        assert set(profile["sex"]) == {"male", "female"}
        assert profile["mean_scaled_rank"].between(0, 1).all()
        assert profile["count"].sum() == len(table.node_ids)

    def test_desirability_profile_unknown_attribute(self, hybrid_market):
        """Unknown attributes are rejected."""
        dataset, _ = hybrid_market

        with pytest.raises(DataValidationError):
            desirability_profile(rank_market(dataset), dataset.users, "height")
