import numpy as np
import pytest

from rsmimo.channel import RngSeed, compose_channel, sample_channel, sample_error
from rsmimo.model import ConfigurationError, PowerAllocation, SystemConfig, check_power_budget
from rsmimo.precoding import (
    PrecoderSet,
    build_mmse_precoders,
    build_rbd_precoders,
    common_precoder,
    first_stage_filter,
    power_search,
    rbd_first_stage,
    rbd_second_stage,
    regularization_constant,
    svd_fixed,
    transmit_mmse_filter,
    uniform_private_gains,
)


def random_channels(config, seed=0, with_error=False):
    h = sample_channel(config, RngSeed(seed, 0))
    if with_error:
        e = sample_error(config, config.snr_linear, RngSeed(seed, 1))
    else:
        e = np.zeros_like(h)
    return compose_channel(h, e, config.rx_antennas)


class TestSvdConvention:
    def test_reconstruction_and_phase(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
        u, s, vh = svd_fixed(a)
        sigma = np.zeros((3, 5))
        np.fill_diagonal(sigma, s)
        np.testing.assert_allclose(u @ sigma @ vh, a, atol=1e-12)
        # largest entry of every right-singular vector is real positive
        v = vh.conj().T
        for j in range(v.shape[1]):
            i = np.argmax(np.abs(v[:, j]))
            assert abs(v[i, j].imag) < 1e-12
            assert v[i, j].real > 0

    def test_unitary_factors(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
        u, _, vh = svd_fixed(a)
        np.testing.assert_allclose(u @ u.conj().T, np.eye(4), atol=1e-12)
        np.testing.assert_allclose(vh @ vh.conj().T, np.eye(6), atol=1e-12)


class TestFirstStage:
    def test_single_row_hand_value(self):
        # deflated transpose [1 0] with unit loading: filter diag(1/sqrt(2), 1)
        h_deflated = np.array([[1.0], [0.0]], dtype=complex)
        stage = first_stage_filter(h_deflated, reg=1.0)
        np.testing.assert_allclose(stage.p_a, np.diag([1 / np.sqrt(2), 1.0]), atol=1e-12)

    def test_first_stage_through_channel_set(self):
        # two single-antenna users; user 1's deflated channel is user 2's column
        config = SystemConfig(n_tx=2, rx_antennas=(1, 1), total_power=2.0, noise_var=1.0)
        assert regularization_constant(config) == 1.0
        h = np.array([[0.3, 1.0], [0.4, 0.0]], dtype=complex)
        cs = compose_channel(h, np.zeros_like(h), config.rx_antennas)
        stage = rbd_first_stage(cs, config)[0]
        np.testing.assert_allclose(stage.p_a, np.diag([1 / np.sqrt(2), 1.0]), atol=1e-12)

    def test_columns_mutually_orthogonal(self):
        config = SystemConfig(n_tx=8, rx_antennas=(2, 2, 2, 2), total_power=10.0)
        stages = rbd_first_stage(random_channels(config), config)
        for stage in stages:
            gram = stage.p_a.conj().T @ stage.p_a
            off = gram - np.diag(np.diag(gram))
            assert np.max(np.abs(off)) < 1e-10

    def test_leakage_shrinks_and_improves_per_unit_power(self):
        # suppression leaves less deflated-channel energy than the raw channel;
        # normalized by the filter's own power it strictly improves with budget
        base = SystemConfig(n_tx=8, rx_antennas=(2, 2, 2, 2), total_power=1.0)
        cs = random_channels(base, seed=2)
        normalized = []
        for e_tr in (1.0, 10.0, 100.0):
            config = SystemConfig(n_tx=8, rx_antennas=(2, 2, 2, 2), total_power=e_tr)
            stage = rbd_first_stage(cs, config)[0]
            leak = np.linalg.norm(cs.deflated(0, "est").T @ stage.p_a)
            assert leak < np.linalg.norm(cs.deflated(0, "est").T)
            normalized.append(leak / np.linalg.norm(stage.p_a))
        assert normalized[0] > normalized[1] > normalized[2]


class TestSecondStage:
    def setup_method(self):
        self.config = SystemConfig(n_tx=8, rx_antennas=(2, 2, 2, 2), total_power=10.0)
        self.channels = random_channels(self.config, seed=3)
        self.precoders = build_rbd_precoders(self.channels, self.config)

    def test_effective_channel_svd_reconstructs(self):
        for f in self.precoders.rbd:
            sigma = np.zeros(f.h_eff.shape)
            np.fill_diagonal(sigma, f.s_eff)
            np.testing.assert_allclose(f.u_eff @ sigma @ f.vh_eff, f.h_eff, atol=1e-10)

    def test_singular_values_nonneg_nonincreasing(self):
        for f in self.precoders.rbd:
            assert np.all(f.s_eff >= 0)
            assert np.all(np.diff(f.s_eff) <= 0)
            assert np.all(np.diff(f.s_deflated) <= 0)

    def test_filtered_effective_channel_is_diagonal(self):
        # receive filter times effective channel times second stage gives the
        # leading singular values on the diagonal (perfect estimation)
        layout = self.precoders.layout
        for k, f in enumerate(self.precoders.rbd):
            block = self.precoders.rx_filters[k] @ (
                self.channels.user_block(k, "est").T @ self.precoders.private_block(k)
            )
            np.testing.assert_allclose(
                block, np.diag(f.s_eff[: layout.streams[k]]), atol=1e-10
            )

    def test_receive_filter_rows_orthonormal(self):
        for g in self.precoders.rx_filters:
            assert g.shape == (2, 2)
            np.testing.assert_allclose(g @ g.conj().T, np.eye(2), atol=1e-12)

    def test_off_diagonal_energy_small_under_perfect_estimation(self):
        for k in range(4):
            block = self.precoders.rx_filters[k] @ (
                self.channels.user_block(k, "true").T @ self.precoders.private_block(k)
            )
            diag_energy = np.sum(np.abs(np.diag(block)) ** 2)
            off_energy = np.sum(np.abs(block) ** 2) - diag_energy
            assert off_energy / diag_energy < 1e-10

    def test_second_stage_consumes_first(self):
        first = rbd_first_stage(self.channels, self.config)
        factors = rbd_second_stage(self.channels, self.config, first)
        for a, b in zip(factors, self.precoders.rbd):
            np.testing.assert_array_equal(a.p_a, b.p_a)
            np.testing.assert_array_equal(a.vh_eff, b.vh_eff)


class TestMuiSuppression:
    def test_cross_user_leakage_vanishes_with_snr(self):
        config0 = SystemConfig(n_tx=8, rx_antennas=(2, 2, 2, 2), total_power=1.0)
        cs = random_channels(config0, seed=4)
        worst = []
        for snr_db in (0.0, 10.0, 20.0, 30.0):
            config = SystemConfig(
                n_tx=8, rx_antennas=(2, 2, 2, 2), total_power=10 ** (snr_db / 10)
            )
            precoders = build_rbd_precoders(cs, config)
            leaks = [
                np.linalg.norm(
                    precoders.rx_filters[k]
                    @ (cs.user_block(k, "true").T @ precoders.private_block(j))
                )
                for k in range(4)
                for j in range(4)
                if j != k
            ]
            worst.append(max(leaks))
        assert worst[0] > worst[1] > worst[2] > worst[3]


class TestMmsePrecoder:
    def test_identity_channel_raw_filter(self):
        c = 0.25
        np.testing.assert_allclose(
            transmit_mmse_filter(np.eye(3, dtype=complex), c),
            np.eye(3) / (1 + c),
            atol=1e-12,
        )

    def test_channel_inversion_limit(self):
        config = SystemConfig(
            n_tx=4, rx_antennas=(2, 2), total_power=1.0, noise_var=1e-12
        )
        cs = random_channels(config, seed=5)
        precoders = build_mmse_precoders(cs, config)
        product = cs.h_est.T @ precoders.p_private
        off = product - np.diag(np.diag(product))
        assert np.max(np.abs(off)) < 1e-5 * np.max(np.abs(np.diag(product)))
        diags = np.diag(product)
        np.testing.assert_allclose(diags, diags[0], rtol=1e-5)

    def test_global_power_scaling(self):
        config = SystemConfig(n_tx=12, rx_antennas=(2,) * 6, total_power=50.0)
        precoders = build_mmse_precoders(random_channels(config, seed=6), config)
        assert np.sum(np.abs(precoders.p_private) ** 2) == pytest.approx(50.0, rel=1e-12)

    def test_less_interference_than_channel_inversion(self):
        # at 5 dB the regularized filter leaks less cross-user power than the
        # plain inversion scaled to the same total power
        config = SystemConfig(n_tx=12, rx_antennas=(2,) * 6, total_power=10 ** 0.5)
        cs = random_channels(config, seed=7)
        mmse = build_mmse_precoders(cs, config)
        zf_raw = np.linalg.inv(cs.h_est.T)
        zf = zf_raw * np.sqrt(config.total_power / np.sum(np.abs(zf_raw) ** 2))

        def total_mui(p_private):
            layout = mmse.layout
            total = 0.0
            for k in range(6):
                rows = cs.user_block(k, "est").T
                for j in range(12):
                    if j in layout.membership(k):
                        continue
                    total += np.sum(np.abs(rows @ p_private[:, j]) ** 2)
            return total

        assert total_mui(mmse.p_private) < total_mui(zf)


class TestCommonPrecoder:
    def test_diagonal_channel_picks_strongest_direction(self):
        h = np.diag([3.0, 1.0]).astype(complex)
        cs = compose_channel(h, np.zeros_like(h), (1, 1))
        np.testing.assert_allclose(common_precoder(cs), [1.0, 0.0], atol=1e-12)

    def test_unit_norm(self):
        config = SystemConfig(n_tx=12, rx_antennas=(2,) * 6)
        p = common_precoder(random_channels(config, seed=8))
        assert np.linalg.norm(p) == pytest.approx(1.0, abs=1e-12)

    def test_achieves_top_singular_value(self):
        config = SystemConfig(n_tx=12, rx_antennas=(2,) * 6)
        cs = random_channels(config, seed=9)
        p = common_precoder(cs)
        top = np.linalg.svd(cs.h_est.T, compute_uv=False)[0]
        assert np.linalg.norm(cs.h_est.T @ p) == pytest.approx(top, abs=1e-10)

    def test_zero_channel_rejected(self):
        cs = compose_channel(np.zeros((4, 2)), np.zeros((4, 2)), (1, 1))
        with pytest.raises(ConfigurationError):
            common_precoder(cs)


class TestPowerSearch:
    def setup_method(self):
        self.config = SystemConfig(n_tx=8, rx_antennas=(2, 2, 2, 2), total_power=10.0)
        self.channels = random_channels(self.config, seed=10)
        self.precoders = build_rbd_precoders(self.channels, self.config)

    def test_unreachable_common_stream_turns_splitting_off(self):
        # common precoder orthogonal to every user's channel rows: the common
        # rate is zero for any split, so all power goes private
        u, s, vh = np.linalg.svd(self.channels.h_est.T)
        null_dir = vh[-1].conj()
        assert np.max(np.abs(self.channels.h_est.T @ null_dir)) < 1e-10
        precoders = PrecoderSet(
            kind="custom",
            p_common=null_dir,
            p_private=self.precoders.p_private,
            rx_filters=self.precoders.rx_filters,
            layout=self.precoders.layout,
        )
        alloc = power_search(precoders, self.channels, self.config, 17, combiner="mmsec")
        assert alloc.a_common == 0.0

    def test_two_point_grid_picks_better_endpoint(self):
        from rsmimo.rates import conditional_rate_table, _power_grid

        alloc = power_search(self.precoders, self.channels, self.config, 2, combiner="mmsec")
        assert alloc.a_common ** 2 in (0.0, self.config.total_power)
        a_common, gains = _power_grid(self.precoders, self.config, True, 2, None)
        common, private = conditional_rate_table(
            self.channels.h_true[None], self.config.rx_antennas, self.precoders,
            a_common, gains, self.config.noise_var, "mmsec",
        )
        totals = common.min(axis=-1) + private
        assert alloc.a_common == a_common[int(np.argmax(totals))]

    def test_grid_refinement_stays_within_one_step(self):
        coarse = power_search(self.precoders, self.channels, self.config, 33, combiner="mmsec")
        fine = power_search(self.precoders, self.channels, self.config, 65, combiner="mmsec")
        step = self.config.total_power / 32
        assert abs(coarse.a_common ** 2 - fine.a_common ** 2) <= step + 1e-12

    def test_budget_always_met(self):
        for combiner in ("none", "minmax", "mrc", "mmsec"):
            alloc = power_search(self.precoders, self.channels, self.config, 13, combiner=combiner)
            power = check_power_budget(self.precoders, alloc, self.config)
            assert power <= self.config.total_power * (1 + 1e-9)

    def test_small_grid_rejected(self):
        with pytest.raises(ConfigurationError):
            power_search(self.precoders, self.channels, self.config, 1)

    def test_uniform_gains_exhaust_budget(self):
        alloc = uniform_private_gains(self.precoders, self.config, common_power=4.0)
        assert alloc.a_common == pytest.approx(2.0)
        power = check_power_budget(self.precoders, alloc, self.config)
        assert power == pytest.approx(self.config.total_power, rel=1e-12)
        assert np.all(alloc.a_private == alloc.a_private[0])


class TestEstimateOnlyDesign:
    def test_precoders_ignore_estimation_error(self):
        config = SystemConfig(
            n_tx=8, rx_antennas=(2, 2, 2, 2), total_power=10.0, csit="fixed", error_var=0.2
        )
        h = sample_channel(config, RngSeed(11, 0))
        cs_a = compose_channel(h, sample_error(config, 10.0, RngSeed(11, 1)), config.rx_antennas)
        cs_b = compose_channel(h, sample_error(config, 10.0, RngSeed(11, 2)), config.rx_antennas)
        pa = build_rbd_precoders(cs_a, config)
        pb = build_rbd_precoders(cs_b, config)
        np.testing.assert_array_equal(pa.p_common, pb.p_common)
        np.testing.assert_array_equal(pa.p_private, pb.p_private)
        for ga, gb in zip(pa.rx_filters, pb.rx_filters):
            np.testing.assert_array_equal(ga, gb)
