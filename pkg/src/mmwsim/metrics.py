"""Performance metrics: achievable sum-rate on the true channels and the
closed-form per-(user, subcarrier) uplink MSE."""

import warnings

import numpy as np

from .linalg import pinv

__all__ = ["sum_rate", "ul_mse", "ul_mse_from_corr"]


def _rate_term(x, signal):
    """log2 det(I + X^{-1} S) for PSD X and S, via log-det difference."""
    if np.linalg.norm(signal) == 0.0:
        return 0.0
    sign, logdet_sum = np.linalg.slogdet(x + signal)
    sign_x, logdet_x = np.linalg.slogdet(x)
    if sign_x <= 0 or not np.isfinite(logdet_x):
        warnings.warn("singular interference-plus-noise matrix; "
                      "falling back to the pseudo-inverse")
        eye = np.eye(x.shape[0])
        s2, l2 = np.linalg.slogdet(eye + pinv(x) @ signal)
        return float(l2 / np.log(2.0))
    del sign
    return float((logdet_sum - logdet_x) / np.log(2.0))


def sum_rate(freq_true, dl_precoders, dl_combiners, noise_var):
    """Achievable downlink sum-rate (bits/s/Hz), interference as noise.

    freq_true    : (U, K, n_ms, n_bs) true channels
    dl_precoders : (U, K, n_bs, n_streams)
    dl_combiners : (U, K, n_ms, n_streams)
    """
    n_u, k_sub = freq_true.shape[:2]
    total = 0.0
    for u in range(n_u):
        for k in range(k_sub):
            h = freq_true[u, k]
            w = dl_combiners[u, k]
            g_own = w.conj().T @ h @ dl_precoders[u, k]
            x = noise_var * (w.conj().T @ w)
            for i in range(n_u):
                if i == u:
                    continue
                g = w.conj().T @ h @ dl_precoders[i, k]
                x = x + g @ g.conj().T
            total += _rate_term(x, g_own @ g_own.conj().T)
    return total / k_sub


def ul_mse_from_corr(r_d, r_i, f, n_streams):
    """Closed-form uplink MSE from the desired-signal and interference-plus-
    noise correlation matrices, for any (digital or composed hybrid) f."""
    term = -2.0 * np.real(np.trace(f.conj().T @ r_d))
    term += np.real(np.trace(f.conj().T @ r_i @ f))
    return float(n_streams + term)


def ul_mse(freq_csi, precoders, f, noise_var, u, k):
    """Uplink MSE of user u at subcarrier k for combiner f.

    freq_csi  : (U, K, n_ms, n_bs) channels used in the expectation
    precoders : (U, K, n_ms, n_streams) uplink precoders
    """
    n_u = freq_csi.shape[0]
    n_bs = freq_csi.shape[3]
    r_i = noise_var * np.eye(n_bs, dtype=complex)
    for i in range(n_u):
        ht = freq_csi[i, k].conj().T @ precoders[i, k]
        r_i += ht @ ht.conj().T
    r_d = freq_csi[u, k].conj().T @ precoders[u, k]
    return ul_mse_from_corr(r_d, r_i, f, precoders.shape[3])
