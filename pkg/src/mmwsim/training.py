"""Compressive training: pseudorandom quantized-phase frames, the stacked
measurement matrix, the block-diagonal noise statistics and the whitener.

One TrainingEnsemble describes M frames seen by a single receiver. On the
uplink the receiver is the BS and every MS transmits simultaneously; on the
downlink each MS owns its own ensemble while the BS-side transmit draws are
shared across users (one broadcast).
"""

from dataclasses import dataclass

import numpy as np

from .linalg import cholesky_upper

__all__ = [
    "TrainingEnsemble",
    "generate_training",
    "generate_downlink_training",
    "simulate_uplink_training",
    "simulate_downlink_training",
    "stacked_uplink_vec",
    "downlink_vec",
]


def quantized_phases(rng, shape, n_bits):
    """Unit-modulus entries with phases from the 2^n_bits uniform grid."""
    levels = 2 ** n_bits
    table = np.exp(2j * np.pi * np.arange(levels) / levels)
    # snap the cardinal points so one- and two-bit shifters are float-exact
    for m in range(levels):
        if (4 * m) % levels == 0:
            table[m] = (1, 1j, -1, -1j)[(4 * m) // levels]
    return table[rng.integers(0, levels, size=shape)]


@dataclass
class TrainingEnsemble:
    """M training frames for one receiver.

    rx_rf   : (M, n_rx, l_rx) receive RF combiners, unit-modulus entries
    tx_rf   : (n_tx, M, n_tx_ant, l_tx) transmit RF precoders
    tx_mod  : (n_tx, M, l_tx) spatial modulation vectors (unit norm)
    tx_eff  : (n_tx, M, n_tx_ant) effective training vectors, power-scaled
    pilots  : (M, K) unit-modulus training scalars
    phi     : (M*l_rx, n_rx * sum n_tx_ant) stacked measurement matrix
    """

    rx_rf: np.ndarray
    tx_rf: np.ndarray
    tx_mod: np.ndarray
    tx_eff: np.ndarray
    pilots: np.ndarray
    phi: np.ndarray
    c_w_blocks: np.ndarray  # (M, l_rx, l_rx) blocks of C_w = blkdiag(F^H F)
    d_w_blocks: np.ndarray  # upper Cholesky factors, C = D^H D per block

    @property
    def n_frames(self):
        return self.rx_rf.shape[0]

    @property
    def l_rx(self):
        return self.rx_rf.shape[2]

    @property
    def c_w(self):
        return _blkdiag(self.c_w_blocks)

    @property
    def d_w(self):
        return _blkdiag(self.d_w_blocks)

    def whiten_rows(self, mat):
        """Apply D_w^{-H} to a (M*l_rx, n) matrix, blockwise."""
        m, l = self.n_frames, self.l_rx
        out = np.empty_like(mat, dtype=complex)
        blocks = mat.reshape(m, l, -1)
        for i in range(m):
            out[i * l:(i + 1) * l] = np.linalg.solve(
                self.d_w_blocks[i].conj().T, blocks[i]
            )
        return out

    def whiten_measurements(self, y):
        """Whiten per-subcarrier measurement vectors, shape (K, M*l_rx)."""
        return self.whiten_rows(np.asarray(y).T).T

    def combine_noise(self, noise, frame):
        """rx_rf[frame]^H @ noise for raw per-antenna noise vectors."""
        return self.rx_rf[frame].conj().T @ noise


def _blkdiag(blocks):
    m, l, _ = blocks.shape
    out = np.zeros((m * l, m * l), dtype=complex)
    for i in range(m):
        out[i * l:(i + 1) * l, i * l:(i + 1) * l] = blocks[i]
    return out


def _build_ensemble(rng, n_rx, l_rx, tx_dims, per_tx_power, n_frames, n_bits,
                    n_subcarriers):
    """Assemble an ensemble for one receiver and a list of transmitters.

    tx_dims: list of (n_tx_ant, l_tx); every transmitter's effective vector
    is scaled to per_tx_power.
    """
    m = n_frames
    rx_rf = quantized_phases(rng, (m, n_rx, l_rx), n_bits)
    n_tx = len(tx_dims)
    n_ant0, l_tx0 = tx_dims[0]
    if any(dims != (n_ant0, l_tx0) for dims in tx_dims):
        raise ValueError("transmitters must share antenna/chain dimensions")
    tx_rf = quantized_phases(rng, (n_tx, m, n_ant0, l_tx0), n_bits)
    tx_mod = quantized_phases(rng, (n_tx, m, l_tx0), n_bits) / np.sqrt(l_tx0)
    tx_eff = np.einsum("tmal,tml->tma", tx_rf, tx_mod)
    norms = np.linalg.norm(tx_eff, axis=2, keepdims=True)
    tx_eff = tx_eff * (np.sqrt(per_tx_power) / norms)
    pilots = np.ones((m, n_subcarriers), dtype=complex)

    # phi row block m = [x_1^T ... x_T^T] kron rx_rf[m]^H
    x_rows = tx_eff.transpose(1, 0, 2).reshape(m, n_tx * n_ant0)
    phi = np.empty((m * l_rx, n_rx * n_tx * n_ant0), dtype=complex)
    for i in range(m):
        phi[i * l_rx:(i + 1) * l_rx] = np.kron(x_rows[i][None, :],
                                               rx_rf[i].conj().T)

    c_blocks = np.einsum("mia,mib->mab", rx_rf.conj(), rx_rf)
    d_blocks = np.stack([cholesky_upper(c) for c in c_blocks])
    return TrainingEnsemble(rx_rf, tx_rf, tx_mod, tx_eff, pilots, phi,
                            c_blocks, d_blocks)


def generate_training(cfg, rng):
    """Uplink ensemble: BS receives with l_bs chains while every MS
    transmits a power-scaled pseudorandom beam per frame."""
    return _build_ensemble(
        rng,
        n_rx=cfg.n_bs,
        l_rx=cfg.l_bs,
        tx_dims=[(cfg.n_ms, cfg.l_ms)] * cfg.n_users,
        per_tx_power=cfg.p_tx / cfg.n_users,
        n_frames=cfg.n_frames,
        n_bits=cfg.n_quant_bits,
        n_subcarriers=cfg.n_subcarriers,
    )


def generate_downlink_training(cfg, rng):
    """Per-user downlink ensembles sharing one broadcast BS transmit side.

    The BS training beam carries the single-user power cfg.p_tx / n_users,
    which equalizes the per-user SNR against the uplink ensemble.
    """
    m, bits = cfg.n_frames, cfg.n_quant_bits
    bs_rf = quantized_phases(rng, (m, cfg.n_bs, cfg.l_bs), bits)
    bs_mod = quantized_phases(rng, (m, cfg.l_bs), bits) / np.sqrt(cfg.l_bs)
    f_eff = np.einsum("mal,ml->ma", bs_rf, bs_mod)
    f_eff *= np.sqrt(cfg.p_tx / cfg.n_users) / np.linalg.norm(
        f_eff, axis=1, keepdims=True
    )
    pilots = np.ones((m, cfg.n_subcarriers), dtype=complex)

    ensembles = []
    for _ in range(cfg.n_users):
        rx_rf = quantized_phases(rng, (m, cfg.n_ms, cfg.l_ms), bits)
        phi = np.empty((m * cfg.l_ms, cfg.n_ms * cfg.n_bs), dtype=complex)
        for i in range(m):
            phi[i * cfg.l_ms:(i + 1) * cfg.l_ms] = np.kron(
                f_eff[i][None, :], rx_rf[i].conj().T
            )
        c_blocks = np.einsum("mia,mib->mab", rx_rf.conj(), rx_rf)
        d_blocks = np.stack([cholesky_upper(c) for c in c_blocks])
        ensembles.append(
            TrainingEnsemble(
                rx_rf=rx_rf,
                tx_rf=bs_rf[None],
                tx_mod=bs_mod[None],
                tx_eff=f_eff[None],
                pilots=pilots,
                phi=phi,
                c_w_blocks=c_blocks,
                d_w_blocks=d_blocks,
            )
        )
    return ensembles


def stacked_uplink_vec(channels):
    """Column-major vec of [H_1^H[k] ... H_U^H[k]] for every subcarrier.

    Returns (K, n_bs * U * n_ms); this is the vector phi multiplies.
    """
    u, k, n_ms, n_bs = channels.freq.shape
    out = np.empty((k, u * n_ms * n_bs), dtype=complex)
    for kk in range(k):
        stacked = np.hstack([channels.freq[uu, kk].conj().T for uu in range(u)])
        out[kk] = stacked.reshape(-1, order="F")
    return out


def downlink_vec(channels, user):
    """Column-major vec of H_u[k] for every subcarrier, shape (K, n_ms*n_bs)."""
    k = channels.n_subcarriers
    return np.stack(
        [channels.freq[user, kk].reshape(-1, order="F") for kk in range(k)]
    )


def _simulate(h_vecs, ens, noise_var, rng):
    """Received measurements y[k] (pilot already removed), shape (K, M*l_rx)."""
    k_sub = h_vecs.shape[0]
    m, l = ens.n_frames, ens.l_rx
    n_rx = ens.rx_rf.shape[1]
    clean = h_vecs @ ens.phi.T  # (K, M*l_rx)
    y = np.empty_like(clean)
    for i in range(m):
        s = ens.pilots[i]  # (K,)
        block = clean[:, i * l:(i + 1) * l] * s[:, None]
        if noise_var > 0.0:
            raw = rng.standard_normal((k_sub, n_rx)) + 1j * rng.standard_normal(
                (k_sub, n_rx)
            )
            raw *= np.sqrt(noise_var / 2.0)
            block = block + raw @ ens.rx_rf[i].conj()
        y[:, i * l:(i + 1) * l] = block * s.conj()[:, None]
    return y


def simulate_uplink_training(channels, ens, noise_var, rng):
    """Simultaneous multiuser uplink pilots received at the BS."""
    return _simulate(stacked_uplink_vec(channels), ens, noise_var, rng)


def simulate_downlink_training(channels, ens, user, noise_var, rng):
    """Broadcast downlink pilots received at one MS."""
    return _simulate(downlink_vec(channels, user), ens, noise_var, rng)
