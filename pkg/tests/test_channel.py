import numpy as np
import pytest

from mmwsim.channel import (
    ChannelRealization,
    build_dictionary,
    generate_channel,
    grid_spatial_frequencies,
    raised_cosine,
    steering_vector,
    virtual_support,
)
from mmwsim.config import desk_scale

TINY = dict(n_bs=8, n_ms=4, g_bs=16, g_ms=8, n_subcarriers=8, n_delay_taps=4)


class TestSteering:
    def test_broadside(self):
        for n in (1, 3, 7):
            assert np.allclose(steering_vector(n, 0.0), np.full(n, 1 / np.sqrt(n)))

    def test_single_antenna(self):
        assert np.allclose(steering_vector(1, 0.7), [1.0])

    def test_closed_form(self):
        v = steering_vector(4, np.pi / 6)
        expect = np.exp(1j * np.pi * np.arange(4) * np.sin(np.pi / 6)) / 2.0
        assert np.allclose(v, expect)

    def test_unit_norm(self):
        assert np.isclose(np.linalg.norm(steering_vector(9, -1.1)), 1.0)


class TestRaisedCosine:
    def test_peak(self):
        assert raised_cosine(0.0, 0.8) == pytest.approx(1.0)

    def test_nyquist_zeros(self):
        for m in (-3, -1, 1, 2, 5):
            assert raised_cosine(float(m), 0.8) == pytest.approx(0.0, abs=1e-12)

    def test_closed_form_value(self):
        # independent evaluation of the textbook formula at t = 0.3 Ts
        t, beta = 0.3, 0.8
        expect = (
            np.sin(np.pi * t) / (np.pi * t)
            * np.cos(np.pi * beta * t)
            / (1 - (2 * beta * t) ** 2)
        )
        assert raised_cosine(t, beta) == pytest.approx(expect, rel=1e-12)

    def test_singularity_limit(self):
        beta = 0.8
        t_star = 1.0 / (2 * beta)
        left = raised_cosine(t_star - 1e-9, beta)
        assert raised_cosine(t_star, beta) == pytest.approx(left, rel=1e-6)

    def test_zero_rolloff_is_sinc(self):
        t = np.linspace(-2, 2, 9)
        assert np.allclose(raised_cosine(t, 0.0), np.sinc(t))


class TestDictionary:
    def test_critical_sampling_unitary(self):
        a = build_dictionary(8, 8)
        assert np.linalg.norm(a.conj().T @ a - np.eye(8)) <= 1e-10

    def test_unit_columns(self):
        a = build_dictionary(4, 16)
        assert np.allclose(np.linalg.norm(a, axis=0), 1.0)

    def test_coherence_matches_bruteforce(self):
        a = build_dictionary(16, 32)
        gram = np.abs(a.conj().T @ a)
        np.fill_diagonal(gram, 0.0)
        brute = 0.0
        for i in range(32):
            for j in range(32):
                if i != j:
                    brute = max(brute, abs(np.vdot(a[:, i], a[:, j])))
        assert np.isclose(gram.max(), brute)

    def test_grid_covers_half_open_interval(self):
        s = grid_spatial_frequencies(6)
        assert s[0] == -1.0 and s[-1] < 1.0
        assert np.allclose(np.diff(s), 2.0 / 6)


class TestGenerateChannel:
    def test_single_path_flat(self):
        cfg = desk_scale(n_bs=8, n_ms=4, g_bs=16, g_ms=8, n_paths=1,
                         n_delay_taps=1, n_subcarriers=4)

        class FixedRng:
            """Forces alpha = 1, tau = 0, theta = phi = 0 (grid center)."""

            calls = 0

            def standard_normal(self, n):
                self.calls += 1
                out = np.zeros(n)
                if self.calls == 1:  # real part only -> alpha = 1
                    out[0] = np.sqrt(2.0)
                return out

            def choice(self, g, size, replace):
                return np.array([g // 2])  # spatial frequency exactly 0

            def integers(self, lo, hi, size):
                return np.zeros(size, dtype=int)

        chan = generate_channel(cfg, FixedRng())
        gamma = np.sqrt(cfg.n_bs * cfg.n_ms / cfg.n_paths)
        expect = gamma * np.outer(steering_vector(cfg.n_ms, 0.0),
                                  steering_vector(cfg.n_bs, 0.0).conj())
        assert np.allclose(chan.taps[0, 0], expect)
        for k in range(cfg.n_subcarriers):
            assert np.allclose(chan.freq[0, k], chan.taps[0, 0])

    def test_dft_identity(self):
        cfg = desk_scale(**TINY)
        chan = generate_channel(cfg, np.random.default_rng(0))
        k = np.arange(cfg.n_subcarriers)
        d = np.arange(cfg.n_delay_taps)
        dft = np.exp(-2j * np.pi * np.outer(k, d) / cfg.n_subcarriers)
        rebuilt = np.einsum("kd,udmn->ukmn", dft, chan.taps)
        assert np.max(np.abs(rebuilt - chan.freq)) <= 1e-12

    def test_deterministic(self):
        cfg = desk_scale(**TINY)
        a = generate_channel(cfg, np.random.default_rng(42))
        b = generate_channel(cfg, np.random.default_rng(42))
        assert np.array_equal(a.freq, b.freq)
        assert np.array_equal(a.taps, b.taps)

    def test_energy_normalization(self):
        # integer-delay taps hit only the pulse peak, so E||H_u[k]||_F^2
        # equals n_bs * n_ms
        cfg = desk_scale(n_bs=8, n_ms=4, g_bs=16, g_ms=8, n_subcarriers=4)
        rng = np.random.default_rng(1)
        acc = 0.0
        n_trials = 220
        for _ in range(n_trials):
            chan = generate_channel(cfg, rng)
            acc += np.mean(
                np.sum(np.abs(chan.freq) ** 2, axis=(2, 3))
            )
        mean_energy = acc / n_trials
        assert abs(mean_energy - cfg.n_bs * cfg.n_ms) <= 0.1 * cfg.n_bs * cfg.n_ms

    def test_off_grid_mode(self):
        cfg = desk_scale(grid_mode="off_grid", **TINY)
        chan = generate_channel(cfg, np.random.default_rng(3))
        ps = chan.paths[0]
        assert ps.aoa_idx is None
        assert np.all((ps.aoa >= -np.pi / 2) & (ps.aoa < np.pi / 2))
        assert np.all((ps.delays >= 0) & (ps.delays <= cfg.n_delay_taps - 1))


class TestVirtualSupport:
    def test_origin_cell(self):
        cfg = desk_scale(**TINY)
        chan = generate_channel(cfg, np.random.default_rng(4))
        ps = chan.paths[0]
        ps.aod_idx = np.array([0])
        ps.aoa_idx = np.array([0])
        assert virtual_support(ps, cfg).tolist() == [0]

    def test_vectorization_order(self):
        cfg = desk_scale(**TINY)
        chan = generate_channel(cfg, np.random.default_rng(5))
        ps = chan.paths[0]
        ps.aod_idx = np.array([3, 5])
        ps.aoa_idx = np.array([2, 7])
        expect = sorted([2 * cfg.g_bs + 3, 7 * cfg.g_bs + 5])
        assert virtual_support(ps, cfg).tolist() == expect

    def test_off_grid_raises(self):
        cfg = desk_scale(grid_mode="off_grid", **TINY)
        chan = generate_channel(cfg, np.random.default_rng(6))
        with pytest.raises(ValueError):
            virtual_support(chan.paths[0], cfg)


def test_on_grid_exactly_representable():
    # true support + least-squares gains reproduce the channel exactly
    cfg = desk_scale(**TINY)
    chan = generate_channel(cfg, np.random.default_rng(7))
    a_bs = build_dictionary(cfg.n_bs, cfg.g_bs)
    a_ms = build_dictionary(cfg.n_ms, cfg.g_ms)
    for u in range(cfg.n_users):
        cells = virtual_support(chan.paths[u], cfg)
        atoms = np.stack(
            [np.kron(a_ms[:, c // cfg.g_bs].conj(), a_bs[:, c % cfg.g_bs])
             for c in cells],
            axis=1,
        )
        for k in range(cfg.n_subcarriers):
            h = chan.freq[u, k].conj().T.reshape(-1, order="F")
            gains, _, _, _ = np.linalg.lstsq(atoms, h, rcond=None)
            assert np.linalg.norm(atoms @ gains - h) <= 1e-10 * np.linalg.norm(h)


def test_json_roundtrip():
    cfg = desk_scale(**TINY)
    chan = generate_channel(cfg, np.random.default_rng(8))
    clone = ChannelRealization.from_json(chan.to_json())
    assert np.array_equal(clone.freq, chan.freq)
    assert np.array_equal(clone.taps, chan.taps)
    assert np.array_equal(clone.paths[1].gains, chan.paths[1].gains)
    assert np.array_equal(clone.paths[1].aod_idx, chan.paths[1].aod_idx)
