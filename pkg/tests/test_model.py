import numpy as np
import pytest

from rsmimo.model import (
    ConfigurationError,
    PowerAllocation,
    RateReport,
    StreamLayout,
    SystemConfig,
    build_layout,
    check_power_budget,
    transmit_signal,
)
from rsmimo.precoding import PrecoderSet


def make_precoders(p_common, p_private, streams):
    layout = StreamLayout(tuple(streams))
    filters = tuple(np.eye(m, dtype=complex) for m in streams)
    return PrecoderSet(
        kind="custom",
        p_common=np.asarray(p_common, dtype=complex),
        p_private=np.asarray(p_private, dtype=complex),
        rx_filters=filters,
        layout=layout,
    )


class TestLayout:
    def test_two_users_two_streams(self):
        layout = build_layout(SystemConfig(n_tx=4, rx_antennas=(2, 2)))
        assert layout.total_private == 4
        assert layout.offsets == (0, 2)
        assert layout.membership(0) == frozenset({0, 1})
        assert layout.membership(1) == frozenset({2, 3})

    def test_six_users(self):
        layout = build_layout(SystemConfig(n_tx=12, rx_antennas=(2,) * 6))
        assert layout.total_private == 12
        assert layout.offsets == (0, 2, 4, 6, 8, 10)

    def test_mixed_stream_counts(self):
        layout = StreamLayout((1, 2, 1))
        assert layout.total_private == 4
        assert layout.membership(1) == frozenset({1, 2})

    def test_membership_partitions_streams(self):
        layout = StreamLayout((2, 1, 3))
        union = set()
        for k in range(layout.n_users):
            block = layout.membership(k)
            assert len(block) == layout.streams[k]
            assert not (union & block)
            union |= block
        assert union == set(range(layout.total_private))


class TestConfigValidation:
    def test_streams_above_antennas_rejected(self):
        with pytest.raises(ConfigurationError):
            SystemConfig(n_tx=8, rx_antennas=(2, 2), streams_per_user=(3, 2))

    def test_too_many_receive_antennas_rejected(self):
        with pytest.raises(ConfigurationError):
            SystemConfig(n_tx=4, rx_antennas=(3, 2))

    def test_single_user_rejected(self):
        with pytest.raises(ConfigurationError):
            SystemConfig(n_tx=4, rx_antennas=(2,))

    def test_nonpositive_powers_rejected(self):
        with pytest.raises(ConfigurationError):
            SystemConfig(n_tx=4, rx_antennas=(2, 2), total_power=0.0)
        with pytest.raises(ConfigurationError):
            SystemConfig(n_tx=4, rx_antennas=(2, 2), noise_var=-1.0)

    def test_unknown_csit_rejected(self):
        with pytest.raises(ConfigurationError):
            SystemConfig(n_tx=4, rx_antennas=(2, 2), csit="oracle")


class TestTransmitSignal:
    def setup_method(self):
        rng = np.random.default_rng(7)
        self.n_tx = 4
        self.streams = (2, 2)
        p = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        pc = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        self.precoders = make_precoders(pc / np.linalg.norm(pc), p, self.streams)

    def test_zero_allocation_gives_zero_signal(self):
        alloc = PowerAllocation(a_common=0.0, a_private=np.zeros(4))
        s = np.ones(5, dtype=complex)
        assert np.all(transmit_signal(s, self.precoders, alloc) == 0.0)

    def test_common_only_returns_scaled_common_precoder(self):
        e1 = np.zeros(4, dtype=complex)
        e1[0] = 1.0
        precoders = make_precoders(e1, self.precoders.p_private, self.streams)
        alloc = PowerAllocation(a_common=1.0, a_private=np.zeros(4))
        s = np.zeros(5, dtype=complex)
        s[0] = 1.0
        np.testing.assert_array_equal(transmit_signal(s, precoders, alloc), e1)

    def test_matches_elementwise_expansion(self):
        rng = np.random.default_rng(11)
        alloc = PowerAllocation(a_common=0.7, a_private=rng.uniform(0.1, 1.0, 4))
        s = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        x = transmit_signal(s, self.precoders, alloc)
        # independent elementwise expansion of the superposition
        expected = np.zeros(4, dtype=complex)
        for i in range(4):
            expected[i] = alloc.a_common * s[0] * self.precoders.p_common[i]
            for j in range(4):
                expected[i] += alloc.a_private[j] * s[1 + j] * self.precoders.p_private[i, j]
        np.testing.assert_allclose(x, expected, rtol=0, atol=1e-14)

    def test_linear_in_symbols(self):
        rng = np.random.default_rng(3)
        alloc = PowerAllocation(a_common=0.5, a_private=rng.uniform(0.1, 1.0, 4))
        s1 = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        s2 = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        c = 0.3 - 1.4j
        lhs = transmit_signal(s1 + c * s2, self.precoders, alloc)
        rhs = transmit_signal(s1, self.precoders, alloc) + c * transmit_signal(
            s2, self.precoders, alloc
        )
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        alloc = PowerAllocation(a_common=0.0, a_private=np.zeros(4))
        with pytest.raises(ConfigurationError):
            transmit_signal(np.ones(4), self.precoders, alloc)


class TestPowerBudget:
    def test_orthonormal_columns_unit_gains(self):
        config = SystemConfig(n_tx=4, rx_antennas=(2, 2), total_power=10.0)
        precoders = make_precoders(
            np.eye(4, dtype=complex)[:, 0], np.eye(4, dtype=complex), (2, 2)
        )
        alloc = PowerAllocation(a_common=1.0, a_private=np.ones(4))
        assert check_power_budget(precoders, alloc, config) == pytest.approx(5.0, abs=1e-12)

    def test_full_budget_on_common_stream(self):
        config = SystemConfig(n_tx=4, rx_antennas=(2, 2), total_power=7.5)
        precoders = make_precoders(
            np.eye(4, dtype=complex)[:, 1], np.zeros((4, 4), dtype=complex), (2, 2)
        )
        alloc = PowerAllocation(a_common=np.sqrt(7.5), a_private=np.zeros(4))
        assert check_power_budget(precoders, alloc, config) == pytest.approx(7.5, rel=1e-12)

    def test_matches_monte_carlo_symbol_average(self):
        rng = np.random.default_rng(5)
        config = SystemConfig(n_tx=4, rx_antennas=(2, 2), total_power=10.0)
        p = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        pc = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        precoders = make_precoders(pc, p, (2, 2))
        alloc = PowerAllocation(a_common=0.8, a_private=rng.uniform(0.2, 1.0, 4))
        expected = check_power_budget(precoders, alloc, config)

        n = 100_000
        symbols = (rng.standard_normal((n, 5)) + 1j * rng.standard_normal((n, 5))) / np.sqrt(2)
        weighted = np.concatenate(
            [alloc.a_common * precoders.p_common[:, None],
             precoders.p_private * alloc.a_private],
            axis=1,
        )
        power = np.mean(np.sum(np.abs(symbols @ weighted.T) ** 2, axis=1))
        assert power == pytest.approx(expected, rel=0.01)


class TestRateReport:
    def test_aggregates_are_consistent(self):
        report = RateReport(common_per_user=(1.0, 0.5), private_per_user=(2.0, 1.0))
        assert report.common_rate == 0.5
        assert report.sum_private == 3.0
        assert report.sum_rate - (min(report.common_per_user) + sum(report.private_per_user)) == 0.0
