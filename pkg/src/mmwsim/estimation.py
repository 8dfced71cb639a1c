"""Sparse recovery of the multiuser frequency-selective channel.

Joint greedy pursuit across subcarriers with a common support, plus
reconstruction on the quantized-angle dictionaries, the NMSE metric, the
genie-support Cramer-Rao bound, and the uplink/downlink estimation
pipelines built from the training module.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import build_dictionary
from .linalg import khatri_rao, kron
from .training import (
    generate_downlink_training,
    generate_training,
    simulate_downlink_training,
    simulate_uplink_training,
)

__all__ = [
    "SparseEstimate",
    "sw_omp",
    "whiten",
    "user_dictionary",
    "reconstruct_channels",
    "reconstruct_downlink_channels",
    "nmse",
    "crlb",
    "crlb_downlink",
    "genie_gain_estimate",
    "estimate_uplink",
    "estimate_downlink",
]


@dataclass
class SparseEstimate:
    """Result of one pursuit: common support, per-subcarrier gains and the
    residual trace. gains[k] holds the coefficients of support, in order."""

    support: np.ndarray          # discovery order, no repeats
    gains: np.ndarray            # (K, len(support))
    residual_mse: float
    iterations: int
    rank_deficient: bool = False
    mse_trace: list = field(default_factory=list)


def sw_omp(y_w, upsilon_w, epsilon, max_support):
    """Simultaneous weighted orthogonal matching pursuit.

    y_w       : (K, n_meas) whitened measurements per subcarrier
    upsilon_w : (n_meas, n_atoms) whitened dictionary
    Picks one atom per iteration maximizing the sum over subcarriers of
    absolute correlations, projects every subcarrier onto the selected
    columns, and stops when the residual MSE drops below epsilon or the
    support reaches max_support.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    y_w = np.asarray(y_w, dtype=complex)
    k_sub, n_meas = y_w.shape
    residual = y_w.copy()
    support = []
    gains = np.zeros((k_sub, 0), dtype=complex)
    rank_deficient = False
    mse = float(np.sum(np.abs(residual) ** 2)) / (k_sub * n_meas)
    trace = [mse]
    while mse >= epsilon and len(support) < max_support:
        corr = residual @ upsilon_w.conj()          # (K, n_atoms)
        metric = np.sum(np.abs(corr), axis=0)
        pick = int(np.argmax(metric))               # ties -> lowest index
        if pick in support:
            break
        support.append(pick)
        cols = upsilon_w[:, support]
        sol, _, rank, _ = np.linalg.lstsq(cols, y_w.T, rcond=None)
        if rank < len(support):
            rank_deficient = True
            warnings.warn("selected dictionary columns are rank deficient")
        gains = sol.T                               # (K, s)
        residual = y_w - (cols @ sol).T
        mse = float(np.sum(np.abs(residual) ** 2)) / (k_sub * n_meas)
        trace.append(mse)
    return SparseEstimate(
        support=np.asarray(support, dtype=int),
        gains=gains,
        residual_mse=mse,
        iterations=len(support),
        rank_deficient=rank_deficient,
        mse_trace=trace,
    )


def whiten(ens, dictionary, n_blocks=1):
    """Whitened sensing matrix D_w^{-H} Phi Psi and the measurement whitener.

    dictionary is the per-transmitter sparsifying matrix; with n_blocks
    transmitters the block-diagonal multiuser dictionary is applied without
    materializing it.
    """
    cols = ens.phi.shape[1] // n_blocks
    ups = np.hstack(
        [ens.phi[:, b * cols:(b + 1) * cols] @ dictionary for b in range(n_blocks)]
    )
    return ens.whiten_rows(ups), ens.whiten_measurements


def user_dictionary(cfg, side="uplink"):
    """Sparsifying dictionary for one user's channel matrix.

    uplink   : vec(H_u^H[k]) = (conj(A_ms) kron A_bs) vec(gains)
    downlink : vec(H_u[k])   = (conj(A_bs) kron A_ms) vec(gains)
    """
    a_bs = build_dictionary(cfg.n_bs, cfg.g_bs)
    a_ms = build_dictionary(cfg.n_ms, cfg.g_ms)
    if side == "uplink":
        return kron(a_ms.conj(), a_bs)
    if side == "downlink":
        return kron(a_bs.conj(), a_ms)
    raise ValueError("side must be 'uplink' or 'downlink'")


def reconstruct_channels(est, cfg):
    """Map a multiuser uplink estimate back to downlink channel matrices.

    Returns (U, K, n_ms, n_bs); support indices address the block-diagonal
    multiuser dictionary with per-user blocks of g_bs * g_ms columns.
    """
    a_bs = build_dictionary(cfg.n_bs, cfg.g_bs)
    a_ms = build_dictionary(cfg.n_ms, cfg.g_ms)
    k_sub = cfg.n_subcarriers
    out = np.zeros((cfg.n_users, k_sub, cfg.n_ms, cfg.n_bs), dtype=complex)
    block = cfg.g_bs * cfg.g_ms
    for j, idx in enumerate(est.support):
        u, cell = divmod(int(idx), block)
        m_grid, b_grid = divmod(cell, cfg.g_bs)
        # uplink atom a_bs a_ms^H, transposed back to the downlink channel
        atom_dl = np.outer(a_ms[:, m_grid], a_bs[:, b_grid].conj())
        for k in range(k_sub):
            out[u, k] += np.conj(est.gains[k, j]) * atom_dl
    return out


def reconstruct_downlink_channels(per_user_estimates, cfg):
    """Per-user downlink estimates (own dictionaries) -> (U, K, n_ms, n_bs)."""
    a_bs = build_dictionary(cfg.n_bs, cfg.g_bs)
    a_ms = build_dictionary(cfg.n_ms, cfg.g_ms)
    k_sub = cfg.n_subcarriers
    out = np.zeros((cfg.n_users, k_sub, cfg.n_ms, cfg.n_bs), dtype=complex)
    for u, est in enumerate(per_user_estimates):
        for j, idx in enumerate(est.support):
            b_grid, m_grid = divmod(int(idx), cfg.g_ms)
            atom = np.outer(a_ms[:, m_grid], a_bs[:, b_grid].conj())
            for k in range(k_sub):
                out[u, k] += est.gains[k, j] * atom
    return out


def nmse(freq_hat, freq_true):
    """Total squared estimation error over users and subcarriers, normalized
    by the total channel energy."""
    denom = float(np.sum(np.abs(freq_true) ** 2))
    if denom == 0.0:
        raise ValueError("true channel has zero energy; NMSE undefined")
    return float(np.sum(np.abs(freq_hat - freq_true) ** 2)) / denom


def _true_angle_dictionary(channels, cfg, u, side):
    from .channel import steering_vector

    ps = channels.paths[u]
    a_bs = np.stack([steering_vector(cfg.n_bs, a) for a in ps.aod], axis=1)
    a_ms = np.stack([steering_vector(cfg.n_ms, a) for a in ps.aoa], axis=1)
    if side == "uplink":
        return khatri_rao(a_ms.conj(), a_bs)
    return khatri_rao(a_bs.conj(), a_ms)


def _fim_inverse(ups_w, noise_var):
    fim = ups_w.conj().T @ ups_w / noise_var
    cond = np.linalg.cond(fim)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError(
            "Fisher information matrix is singular; training is under-determined"
        )
    return np.linalg.inv(fim)


def crlb(channels, ens, noise_var, cfg):
    """Genie-support estimation variance for the whole multiuser channel.

    Builds the true-angle measurement matrix, inverts the per-subcarrier
    Fisher information and sums the transformed traces over subcarriers.
    """
    psis = [
        _true_angle_dictionary(channels, cfg, u, "uplink")
        for u in range(cfg.n_users)
    ]
    block = cfg.n_bs * cfg.n_ms
    ups = np.hstack(
        [ens.phi[:, u * block:(u + 1) * block] @ psis[u] for u in range(cfg.n_users)]
    )
    fim_inv = _fim_inverse(ens.whiten_rows(ups), noise_var)
    gram = np.zeros_like(fim_inv)
    off = 0
    for psi in psis:  # (direct-sum Psi)^H (direct-sum Psi) is block diagonal
        p = psi.shape[1]
        gram[off:off + p, off:off + p] = psi.conj().T @ psi
        off += p
    per_subcarrier = float(np.real(np.trace(fim_inv @ gram)))
    return cfg.n_subcarriers * per_subcarrier


def crlb_downlink(channels, ensembles, noise_var, cfg):
    """Sum of per-user genie bounds for downlink estimation at each MS."""
    total = 0.0
    for u, ens in enumerate(ensembles):
        psi = _true_angle_dictionary(channels, cfg, u, "downlink")
        ups = ens.phi @ psi
        fim_inv = _fim_inverse(ens.whiten_rows(ups), noise_var)
        gram = psi.conj().T @ psi
        total += cfg.n_subcarriers * float(np.real(np.trace(fim_inv @ gram)))
    return total


def genie_gain_estimate(channels, ens, y, cfg):
    """Weighted LS gains on the true support; returns the squared channel
    estimation error summed over users and subcarriers (one noise draw)."""
    psis = [
        _true_angle_dictionary(channels, cfg, u, "uplink")
        for u in range(cfg.n_users)
    ]
    block = cfg.n_bs * cfg.n_ms
    ups = np.hstack(
        [ens.phi[:, u * block:(u + 1) * block] @ psis[u] for u in range(cfg.n_users)]
    )
    ups_w = ens.whiten_rows(ups)
    y_w = ens.whiten_measurements(y)
    xi_hat, _, _, _ = np.linalg.lstsq(ups_w, y_w.T, rcond=None)  # (P, K)
    err = 0.0
    off = 0
    for u, psi in enumerate(psis):
        p = psi.shape[1]
        h_hat = psi @ xi_hat[off:off + p]  # (n_bs*n_ms, K) uplink vecs
        for k in range(cfg.n_subcarriers):
            h_true = channels.freq[u, k].conj().T.reshape(-1, order="F")
            err += float(np.sum(np.abs(h_hat[:, k] - h_true) ** 2))
        off += p
    return err


def _epsilon_floor(noise_var, y_w):
    if noise_var > 0.0:
        return noise_var
    base = float(np.mean(np.abs(y_w) ** 2))
    return max(base, 1.0) * 1e-14


def estimate_uplink(cfg, channels, rng_train, rng_noise, noise_var=None,
                    epsilon=None):
    """Full uplink pipeline: training, pilots, pursuit, reconstruction.

    Returns (freq_hat, estimate, ensemble) with freq_hat shaped like
    channels.freq.
    """
    cfg.check_estimation_grids()
    if noise_var is None:
        noise_var = cfg.noise_var
    ens = generate_training(cfg, rng_train)
    y = simulate_uplink_training(channels, ens, noise_var, rng_noise)
    ups_w, whiten_y = whiten(ens, user_dictionary(cfg, "uplink"), cfg.n_users)
    y_w = whiten_y(y)
    eps = epsilon if epsilon is not None else _epsilon_floor(noise_var, y_w)
    est = sw_omp(y_w, ups_w, eps, max_support=4 * cfg.n_users * cfg.n_paths)
    return reconstruct_channels(est, cfg), est, ens


def estimate_downlink(cfg, channels, rng_train, rng_noise, noise_var=None,
                      epsilon=None):
    """Per-MS downlink pipeline at the single-user comparison SNR.

    Returns (freq_hat, estimates, ensembles); each MS recovers only its own
    sparse channel with its own dictionary.
    """
    cfg.check_estimation_grids()
    if noise_var is None:
        noise_var = cfg.noise_var
    ensembles = generate_downlink_training(cfg, rng_train)
    dictionary = user_dictionary(cfg, "downlink")
    estimates = []
    for u, ens in enumerate(ensembles):
        y = simulate_downlink_training(channels, ens, u, noise_var, rng_noise)
        ups_w, whiten_y = whiten(ens, dictionary)
        y_w = whiten_y(y)
        eps = epsilon if epsilon is not None else _epsilon_floor(noise_var, y_w)
        estimates.append(sw_omp(y_w, ups_w, eps, max_support=4 * cfg.n_paths))
    return reconstruct_downlink_channels(estimates, cfg), estimates, ensembles
