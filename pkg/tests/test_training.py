import numpy as np
import pytest

from mmwsim.channel import generate_channel
from mmwsim.config import desk_scale
from mmwsim.training import (
    TrainingEnsemble,
    generate_downlink_training,
    generate_training,
    simulate_downlink_training,
    simulate_uplink_training,
    stacked_uplink_vec,
)

TINY = dict(n_bs=8, n_ms=4, g_bs=16, g_ms=8, n_subcarriers=4, n_frames=10)


def tiny_cfg(**kw):
    return desk_scale(**{**TINY, **kw})


class TestGenerateTraining:
    def test_binary_phases_at_one_bit(self):
        ens = generate_training(tiny_cfg(n_quant_bits=1), np.random.default_rng(0))
        assert np.all(np.isin(ens.rx_rf, [1.0 + 0j, -1.0 + 0j]))
        assert np.all(np.isin(ens.tx_rf, [1.0 + 0j, -1.0 + 0j]))

    def test_unit_modulus(self):
        ens = generate_training(tiny_cfg(), np.random.default_rng(1))
        eps = np.finfo(float).eps
        assert np.max(np.abs(np.abs(ens.rx_rf) - 1.0)) <= 2 * eps
        assert np.max(np.abs(np.abs(ens.tx_rf) - 1.0)) <= 2 * eps

    def test_modulation_vectors_unit_norm(self):
        ens = generate_training(tiny_cfg(), np.random.default_rng(2))
        assert np.allclose(np.linalg.norm(ens.tx_mod, axis=2), 1.0)

    def test_effective_power(self):
        cfg = tiny_cfg()
        ens = generate_training(cfg, np.random.default_rng(3))
        powers = np.linalg.norm(ens.tx_eff, axis=2) ** 2
        assert np.allclose(powers, cfg.p_tx / cfg.n_users)

    def test_deterministic_phi(self):
        cfg = tiny_cfg()
        a = generate_training(cfg, np.random.default_rng(7))
        b = generate_training(cfg, np.random.default_rng(7))
        assert np.array_equal(a.phi, b.phi)

    def test_precoders_differ_across_frames(self):
        ens = generate_training(tiny_cfg(), np.random.default_rng(4))
        assert not np.array_equal(ens.tx_rf[0, 0], ens.tx_rf[0, 1])

    def test_phi_row_block_structure(self):
        cfg = tiny_cfg()
        ens = generate_training(cfg, np.random.default_rng(5))
        m = 3
        x_row = np.concatenate([ens.tx_eff[u, m] for u in range(cfg.n_users)])
        manual = np.kron(x_row[None, :], ens.rx_rf[m].conj().T)
        assert np.allclose(ens.phi[m * cfg.l_bs:(m + 1) * cfg.l_bs], manual)

    def test_noise_covariance_structure(self):
        cfg = tiny_cfg()
        ens = generate_training(cfg, np.random.default_rng(6))
        for i in range(cfg.n_frames):
            block = ens.rx_rf[i].conj().T @ ens.rx_rf[i]
            assert np.allclose(ens.c_w_blocks[i], block)
            assert np.allclose(block, block.conj().T)
            assert np.all(np.linalg.eigvalsh(block) > 0)
        full = ens.c_w
        assert np.allclose(full[: cfg.l_bs, : cfg.l_bs], ens.c_w_blocks[0])
        assert np.allclose(full[: cfg.l_bs, cfg.l_bs: 2 * cfg.l_bs], 0.0)


class TestSimulate:
    def test_zero_channel_zero_noise(self):
        cfg = tiny_cfg()
        chan = generate_channel(cfg, np.random.default_rng(0))
        chan.freq[:] = 0.0
        ens = generate_training(cfg, np.random.default_rng(1))
        y = simulate_uplink_training(chan, ens, 0.0, np.random.default_rng(2))
        assert np.all(y == 0)

    def test_noiseless_matches_phi_model(self):
        cfg = tiny_cfg()
        chan = generate_channel(cfg, np.random.default_rng(3))
        ens = generate_training(cfg, np.random.default_rng(4))
        y = simulate_uplink_training(chan, ens, 0.0, np.random.default_rng(5))
        expect = stacked_uplink_vec(chan) @ ens.phi.T
        assert np.linalg.norm(y - expect) <= 1e-10 * np.linalg.norm(expect)

    def test_noise_only_covariance(self):
        # sample covariance of one frame's combined noise ~ noise_var * F^H F
        cfg = tiny_cfg(n_frames=2, n_subcarriers=1, l_bs=2)
        chan = generate_channel(cfg, np.random.default_rng(6))
        chan.freq[:] = 0.0
        ens = generate_training(cfg, np.random.default_rng(7))
        rng = np.random.default_rng(8)
        noise_var = 0.5
        draws = np.stack(
            [simulate_uplink_training(chan, ens, noise_var, rng)[0, : cfg.l_bs]
             for _ in range(12000)]
        )
        sample_cov = draws.conj().T @ draws / len(draws)
        expect = noise_var * ens.c_w_blocks[0]
        err = np.linalg.norm(sample_cov - expect) / np.linalg.norm(expect)
        assert err <= 0.10

    def test_whitened_noise_is_white(self):
        cfg = tiny_cfg(n_frames=2, n_subcarriers=1, l_bs=2)
        chan = generate_channel(cfg, np.random.default_rng(9))
        chan.freq[:] = 0.0
        ens = generate_training(cfg, np.random.default_rng(10))
        rng = np.random.default_rng(11)
        noise_var = 0.25
        draws = np.stack(
            [ens.whiten_measurements(
                simulate_uplink_training(chan, ens, noise_var, rng))[0]
             for _ in range(12000)]
        )
        sample_cov = draws.conj().T @ draws / len(draws)
        expect = noise_var * np.eye(sample_cov.shape[0])
        assert np.linalg.norm(sample_cov - expect) / np.linalg.norm(expect) <= 0.10


class TestWhiten:
    def test_orthonormal_combiners_identity_whitening(self):
        cfg = tiny_cfg()
        ens = generate_training(cfg, np.random.default_rng(12))
        # replace combiners with orthonormal columns -> C_w = I
        rng = np.random.default_rng(13)
        for i in range(cfg.n_frames):
            q, _ = np.linalg.qr(
                rng.standard_normal((cfg.n_bs, cfg.l_bs))
                + 1j * rng.standard_normal((cfg.n_bs, cfg.l_bs))
            )
            ens.rx_rf[i] = q
        rebuilt = TrainingEnsemble(
            rx_rf=ens.rx_rf,
            tx_rf=ens.tx_rf,
            tx_mod=ens.tx_mod,
            tx_eff=ens.tx_eff,
            pilots=ens.pilots,
            phi=ens.phi,
            c_w_blocks=np.einsum("mia,mib->mab", ens.rx_rf.conj(), ens.rx_rf),
            d_w_blocks=np.stack(
                [np.eye(cfg.l_bs, dtype=complex)] * cfg.n_frames
            ),
        )
        assert np.allclose(rebuilt.c_w, np.eye(cfg.n_frames * cfg.l_bs),
                           atol=1e-12)
        mat = np.arange(cfg.n_frames * cfg.l_bs * 3, dtype=float).reshape(-1, 3)
        assert np.allclose(rebuilt.whiten_rows(mat), mat)

    def test_whitened_columns_finite_nonzero(self):
        cfg = tiny_cfg()
        ens = generate_training(cfg, np.random.default_rng(14))
        from mmwsim.estimation import user_dictionary, whiten

        ups_w, _ = whiten(ens, user_dictionary(cfg, "uplink"), cfg.n_users)
        norms = np.linalg.norm(ups_w, axis=0)
        assert np.all(np.isfinite(norms)) and np.all(norms > 0)


class TestDownlink:
    def test_shared_broadcast_side(self):
        cfg = tiny_cfg()
        ens_list = generate_downlink_training(cfg, np.random.default_rng(15))
        assert len(ens_list) == cfg.n_users
        assert np.array_equal(ens_list[0].tx_eff, ens_list[1].tx_eff)
        assert not np.array_equal(ens_list[0].rx_rf, ens_list[1].rx_rf)

    def test_single_user_power(self):
        cfg = tiny_cfg()
        ens_list = generate_downlink_training(cfg, np.random.default_rng(16))
        power = np.linalg.norm(ens_list[0].tx_eff[0], axis=1) ** 2
        assert np.allclose(power, cfg.p_tx / cfg.n_users)

    def test_noiseless_matches_phi_model(self):
        cfg = tiny_cfg()
        chan = generate_channel(cfg, np.random.default_rng(17))
        ens_list = generate_downlink_training(cfg, np.random.default_rng(18))
        for u, ens in enumerate(ens_list):
            y = simulate_downlink_training(chan, ens, u, 0.0,
                                           np.random.default_rng(19))
            h_vec = np.stack(
                [chan.freq[u, k].reshape(-1, order="F")
                 for k in range(cfg.n_subcarriers)]
            )
            assert np.allclose(y, h_vec @ ens.phi.T)


def test_pilot_rotation_is_removed():
    cfg = tiny_cfg()
    chan = generate_channel(cfg, np.random.default_rng(20))
    ens = generate_training(cfg, np.random.default_rng(21))
    base = simulate_uplink_training(chan, ens, 0.0, np.random.default_rng(22))
    rng = np.random.default_rng(23)
    ens.pilots = np.exp(
        2j * np.pi * rng.uniform(size=(cfg.n_frames, cfg.n_subcarriers))
    )
    rotated = simulate_uplink_training(chan, ens, 0.0, np.random.default_rng(24))
    assert np.allclose(base, rotated)
