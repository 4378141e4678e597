import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from twrelay import (ChannelSet, ConfigError, DegenerateInput, SystemConfig,
                     Transceiver, balance, evaluate, iui_residual,
                     rs_transmit_power, sample_channels, scale_rs_power)
from twrelay.model import bs_transmit_power

from conftest import crandn

CFG = SystemConfig()


def loop_sinrs(cfg, ch, t):
    """Per-user SINRs written out term by term from the received signals."""
    hb, hu = ch.h_br, ch.h_ur
    n_u = hu.shape[1]
    up, dn = np.zeros(n_u), np.zeros(n_u)
    for i in range(n_u):
        # BS stream i: w_bri^T (H_br^T W_r (H_ur x + n_r) + n_b)
        front = t.w_br[:, i] @ hb.T @ t.w_r
        coef = [front @ hu[:, j] for j in range(n_u)]
        noise = cfg.n0 * (np.sum(np.abs(front) ** 2)
                          + np.sum(np.abs(t.w_br[:, i]) ** 2))
        interf = sum(cfg.p_u * abs(coef[j]) ** 2
                     for j in range(n_u) if j != i)
        up[i] = cfg.p_u * abs(coef[i]) ** 2 / (interf + noise)
        # user i: h_ir^T W_r (H_br W_bt s + H_ur x + n_r) + n_i
        ufront = hu[:, i] @ t.w_r
        s_coef = [ufront @ hb @ t.w_bt[:, j] for j in range(n_u)]
        x_coef = [ufront @ hu[:, j] for j in range(n_u)]
        interf = sum(abs(s_coef[j]) ** 2 + cfg.p_u * abs(x_coef[j]) ** 2
                     for j in range(n_u) if j != i)
        noise = cfg.n0 * (np.sum(np.abs(ufront) ** 2) + 1.0)
        dn[i] = abs(s_coef[i]) ** 2 / (interf + noise)
    return up, dn


def random_transceiver(rng, cfg):
    return Transceiver(w_bt=crandn(rng, cfg.n_b, cfg.n_u),
                       w_br=crandn(rng, cfg.n_b, cfg.n_u),
                       w_r=crandn(rng, cfg.n_r, cfg.n_r))


class TestSystemConfig:
    def test_defaults(self):
        assert (CFG.n_b, CFG.n_r, CFG.n_u) == (2, 4, 2)
        assert (CFG.p_b, CFG.p_r, CFG.p_u) == (2.0, 2.0, 1.0)
        assert math.isclose(CFG.snr_db, 30.0)

    @pytest.mark.parametrize('kw', [{'n_b': 0}, {'n_r': 1.5}, {'n_u': -1},
                                    {'p_b': 0.0}, {'n0': -1.0},
                                    {'p_r': float('inf')}, {'n_u': True}])
    def test_invalid_values_raise(self, kw):
        with pytest.raises(ConfigError):
            SystemConfig(**kw)

    def test_snr_roundtrip(self):
        cfg = SystemConfig.from_snr_db(17.0)
        assert math.isclose(cfg.snr_db, 17.0)
        assert math.isclose(CFG.with_snr_db(10.0).n0, 0.1)


class TestSampleChannels:
    def test_shapes(self):
        ch = sample_channels(CFG, 3)
        assert ch.h_br.shape == (4, 2) and ch.h_ur.shape == (4, 2)

    def test_same_seed_same_channels(self):
        a, b = sample_channels(CFG, 11), sample_channels(CFG, 11)
        np.testing.assert_array_equal(a.h_br, b.h_br)
        np.testing.assert_array_equal(a.h_ur, b.h_ur)

    def test_different_seeds_differ(self):
        a, b = sample_channels(CFG, 1), sample_channels(CFG, 2)
        assert not np.allclose(a.h_br, b.h_br)

    def test_entry_statistics(self):
        cfg = SystemConfig(n_b=500, n_r=100, n_u=500)
        ch = sample_channels(cfg, 5)
        h = np.concatenate([ch.h_br.ravel(), ch.h_ur.ravel()])
        assert h.size == 100_000
        assert abs(h.mean()) < 0.02
        assert abs(np.mean(np.abs(h) ** 2) - 1.0) < 0.02
        # circular symmetry: no pseudo-covariance
        assert abs(np.mean(h ** 2)) < 0.02

    def test_channels_are_read_only(self):
        ch = sample_channels(CFG, 0)
        with pytest.raises(ValueError):
            ch.h_br[0, 0] = 0.0

    def test_shape_check(self):
        ch = sample_channels(CFG, 0)
        with pytest.raises(ConfigError):
            ch.check(SystemConfig(n_r=3))


class TestEvaluate:
    def test_zero_relay_gives_zero_rates(self, rng):
        t = random_transceiver(rng, CFG).replace(w_r=np.zeros((4, 4)))
        rep = evaluate(CFG, sample_channels(CFG, 0), t)
        assert rep.r_s == 0.0
        assert np.all(rep.snr_u == 0.0) and np.all(rep.snr_d == 0.0)

    def test_scalar_closed_form(self):
        # n_b = n_r = n_u = 1, unit channels; by hand with p_b=2, p_u=1,
        # n0=0.5, g=1: SINR_D = g^2 p_b / (n0 g^2 + n0) = 2 and
        # SINR_U = p_u g^2 / (n0 (g^2 + 1)) = 1.
        cfg = SystemConfig(n_b=1, n_r=1, n_u=1, p_b=2.0, p_u=1.0, n0=0.5)
        ch = ChannelSet(h_br=[[1.0]], h_ur=[[1.0]])
        t = Transceiver(w_bt=[[math.sqrt(2.0)]], w_br=[[1.0]], w_r=[[1.0]])
        rep = evaluate(cfg, ch, t)
        assert rep.snr_d[0] == pytest.approx(2.0, rel=1e-14)
        assert rep.snr_u[0] == pytest.approx(1.0, rel=1e-14)
        assert rep.r_s == pytest.approx(0.5 * math.log2(3.0) + 0.5,
                                        rel=1e-14)

    @given(st.floats(0.05, 20.0), st.floats(1e-3, 1.0))
    def test_scalar_closed_form_property(self, g, n0):
        cfg = SystemConfig(n_b=1, n_r=1, n_u=1, p_b=2.0, p_u=1.0, n0=n0)
        ch = ChannelSet(h_br=[[1.0]], h_ur=[[1.0]])
        t = Transceiver(w_bt=[[math.sqrt(2.0)]], w_br=[[1.0]], w_r=[[g]])
        rep = evaluate(cfg, ch, t)
        assert rep.snr_d[0] == pytest.approx(g * g * 2.0 / (n0 * g * g + n0))
        assert rep.snr_u[0] == pytest.approx(g * g / (n0 * (g * g + 1.0)))

    def test_matches_loop_oracle_iui_free(self):
        for seed in range(20):
            ch = sample_channels(CFG, seed)
            t, _, rep = balance(CFG, ch)
            assert rep.residual_iui <= 1e-12
            up, dn = loop_sinrs(CFG, ch, t)
            np.testing.assert_allclose(rep.snr_u, up, rtol=1e-9)
            np.testing.assert_allclose(rep.snr_d, dn, rtol=1e-9)

    def test_matches_loop_oracle_with_interference(self, rng):
        cfg = SystemConfig(n_b=3, n_r=3, n_u=3)
        for seed in range(20):
            ch = sample_channels(cfg, seed)
            t = random_transceiver(rng, cfg)
            rep = evaluate(cfg, ch, t)
            up, dn = loop_sinrs(cfg, ch, t)
            np.testing.assert_allclose(rep.snr_u, up, rtol=1e-10)
            np.testing.assert_allclose(rep.snr_d, dn, rtol=1e-10)

    def test_monte_carlo_signal_oracle(self, rng):
        # SINR estimated from simulated symbols: desired power is the
        # squared correlation with the own symbol, the rest of the
        # received power is interference plus noise.
        cfg = SystemConfig(n0=0.05)
        ch = sample_channels(cfg, 8)
        t = scale_rs_power(cfg, ch, random_transceiver(rng, cfg))
        n = 200_000
        s = crandn(rng, cfg.n_u, n)
        x = math.sqrt(cfg.p_u) * crandn(rng, cfg.n_u, n)
        z_r = math.sqrt(cfg.n0) * crandn(rng, cfg.n_r, n)
        y_r = ch.h_br @ t.w_bt @ s + ch.h_ur @ x + z_r
        fwd = t.w_r @ y_r
        # BS: remove own echo, combine
        y_b = ch.h_br.T @ (fwd - t.w_r @ ch.h_br @ t.w_bt @ s) \
            + math.sqrt(cfg.n0) * crandn(rng, cfg.n_b, n)
        est_up = []
        for i in range(cfg.n_u):
            r = t.w_br[:, i] @ y_b
            a = np.vdot(x[i], r) / np.vdot(x[i], x[i])
            d = abs(a) ** 2 * cfg.p_u
            est_up.append(d / (np.mean(np.abs(r) ** 2) - d))
        est_dn = []
        for i in range(cfg.n_u):
            r = ch.h_ur[:, i] @ fwd \
                - (ch.h_ur[:, i] @ t.w_r @ ch.h_ur[:, i]) * x[i] \
                + math.sqrt(cfg.n0) * crandn(rng, n)
            a = np.vdot(s[i], r) / np.vdot(s[i], s[i])
            d = abs(a) ** 2
            est_dn.append(d / (np.mean(np.abs(r) ** 2) - d))
        rep = evaluate(cfg, ch, t)
        np.testing.assert_allclose(est_up, rep.snr_u, rtol=0.05)
        np.testing.assert_allclose(est_dn, rep.snr_d, rtol=0.05)

    def test_rate_sum_consistency(self, rng):
        ch = sample_channels(CFG, 4)
        rep = evaluate(CFG, ch, random_transceiver(rng, CFG))
        r_u = math.fsum(0.5 * math.log2(1.0 + s) for s in rep.snr_u)
        r_d = math.fsum(0.5 * math.log2(1.0 + s) for s in rep.snr_d)
        assert rep.r_u == pytest.approx(r_u, abs=1e-12)
        assert rep.r_d == pytest.approx(r_d, abs=1e-12)
        assert abs(rep.r_s - (rep.r_u + rep.r_d)) <= 1e-12

    @given(st.integers(0, 2 ** 32 - 1),
           st.lists(st.floats(-math.pi, math.pi), min_size=4, max_size=4))
    def test_column_phase_invariance(self, seed, phases):
        r = np.random.default_rng(seed)
        ch = sample_channels(CFG, seed)
        t = random_transceiver(r, CFG)
        rot = np.exp(1j * np.array(phases))
        t2 = t.replace(w_bt=t.w_bt * rot[:2], w_br=t.w_br * rot[2:])
        a, b = evaluate(CFG, ch, t), evaluate(CFG, ch, t2)
        np.testing.assert_allclose(a.snr_u, b.snr_u, rtol=1e-10)
        np.testing.assert_allclose(a.snr_d, b.snr_d, rtol=1e-10)

    def test_downlink_monotone_in_relay_scale(self):
        ch = sample_channels(CFG, 6)
        t, _, _ = balance(CFG, ch)
        prev = None
        for c in [0.1, 0.3, 1.0, 3.0, 10.0]:
            rep = evaluate(CFG, ch, t.replace(w_r=c * t.w_r))
            assert rep.residual_iui <= 1e-12
            if prev is not None:
                assert np.all(rep.snr_d > prev)
            prev = rep.snr_d


class TestPowerAndResidual:
    def test_zero_relay_power(self, rng):
        t = random_transceiver(rng, CFG).replace(w_r=np.zeros((4, 4)))
        assert rs_transmit_power(CFG, sample_channels(CFG, 0), t) == 0.0

    def test_noise_only_forwarding(self):
        # p_u must be positive in a config, so drop the user term by
        # zeroing the user channels instead.
        ch = ChannelSet(h_br=np.ones((4, 2)), h_ur=np.zeros((4, 2)))
        t = Transceiver(w_bt=np.zeros((2, 2)), w_br=np.zeros((2, 2)),
                        w_r=np.eye(4))
        assert rs_transmit_power(CFG, ch, t) == pytest.approx(4 * CFG.n0)

    def test_monte_carlo_power_oracle(self, rng):
        cfg = SystemConfig(n0=0.3, p_u=0.7)
        ch = sample_channels(cfg, 2)
        t = random_transceiver(rng, cfg)
        n = 100_000
        y = (ch.h_br @ t.w_bt @ crandn(rng, 2, n)
             + math.sqrt(cfg.p_u) * ch.h_ur @ crandn(rng, 2, n)
             + math.sqrt(cfg.n0) * crandn(rng, 4, n))
        mc = np.mean(np.sum(np.abs(t.w_r @ y) ** 2, axis=0))
        assert rs_transmit_power(cfg, ch, t) == pytest.approx(mc, rel=0.02)

    def test_bs_power(self):
        t = Transceiver(w_bt=np.full((2, 2), 1 + 1j), w_br=np.eye(2),
                        w_r=np.eye(4))
        assert bs_transmit_power(t) == pytest.approx(8.0)

    def test_residual_zero_relay_is_zero(self, rng):
        t = random_transceiver(rng, CFG).replace(w_r=np.zeros((4, 4)))
        assert iui_residual(sample_channels(CFG, 0), t) == 0.0

    def test_residual_balanced_is_tiny(self):
        for seed in range(10):
            ch = sample_channels(CFG, seed)
            assert iui_residual(ch, balance(CFG, ch)[0]) <= 1e-9

    def test_residual_random_dense_is_large(self, rng):
        ch = sample_channels(CFG, 1)
        for _ in range(50):
            assert iui_residual(ch, random_transceiver(rng, CFG)) > 1e-3

    def test_residual_is_scale_free(self, rng):
        ch = sample_channels(CFG, 1)
        t = random_transceiver(rng, CFG)
        a = iui_residual(ch, t)
        b = iui_residual(ch, t.replace(w_r=7.0 * t.w_r, w_br=0.2 * t.w_br))
        assert a == pytest.approx(b, rel=1e-12)


class TestScaleRsPower:
    def test_hits_budget(self, rng):
        for seed in range(20):
            ch = sample_channels(CFG, seed)
            t = scale_rs_power(CFG, ch, random_transceiver(rng, CFG))
            assert rs_transmit_power(CFG, ch, t) == pytest.approx(
                CFG.p_r, rel=1e-10)

    def test_fixed_point(self, rng):
        ch = sample_channels(CFG, 0)
        t = scale_rs_power(CFG, ch, random_transceiver(rng, CFG))
        np.testing.assert_allclose(scale_rs_power(CFG, ch, t).w_r, t.w_r,
                                   rtol=1e-12)

    def test_scale_invariance(self, rng):
        ch = sample_channels(CFG, 0)
        t = random_transceiver(rng, CFG)
        a = scale_rs_power(CFG, ch, t)
        b = scale_rs_power(CFG, ch, t.replace(w_r=2.0 * t.w_r))
        np.testing.assert_allclose(a.w_r, b.w_r, rtol=1e-12)
        np.testing.assert_array_equal(a.w_bt, t.w_bt)

    def test_zero_relay_raises(self, rng):
        t = random_transceiver(rng, CFG).replace(w_r=np.zeros((4, 4)))
        with pytest.raises(DegenerateInput):
            scale_rs_power(CFG, sample_channels(CFG, 0), t)
