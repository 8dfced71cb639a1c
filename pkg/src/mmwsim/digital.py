"""Unconstrained (all-digital) uplink precoder and combiner designs, and the
mapping of an uplink design onto downlink filters for rate evaluation.

Uplink precoders maximize each user's own mutual information (SVD plus
water-filling); combiners trade off inter-user interference via MMSE, MRC
or nullspace-projected conjugate beamforming.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import nullspace_basis, pinv, svd

__all__ = [
    "DigitalFilterSet",
    "waterfill",
    "ul_precoder",
    "mmse_combiner",
    "mrc_combiner",
    "cb_combiner",
    "design_digital",
    "dl_filters_from_ul",
]


@dataclass
class DigitalFilterSet:
    """Per-(user, subcarrier) uplink filters.

    precoders : (U, K, n_ms, n_streams)
    combiners : (U, K, n_bs, n_streams)
    """

    precoders: np.ndarray
    combiners: np.ndarray
    combiner_kind: str


def waterfill(gains, power):
    """Water-filling allocation: p_i = max(0, mu - 1/g_i), sum p_i = power.

    gains are channel-to-noise ratios (>= 0); zero-gain channels always get
    exactly zero power.
    """
    gains = np.asarray(gains, dtype=float)
    if power <= 0:
        raise ValueError("power must be positive")
    if np.any(gains < 0):
        raise ValueError("gains must be nonnegative")
    if not np.any(gains > 0):
        raise ValueError("water-filling needs at least one positive gain")
    alloc = np.zeros_like(gains)
    order = np.argsort(-gains)
    active = [i for i in order if gains[i] > 0]
    # shrink the active set until the weakest member stays above water
    while active:
        inv = 1.0 / gains[active]
        mu = (power + inv.sum()) / len(active)
        if mu > inv.max():
            alloc[active] = mu - inv
            break
        active = active[:-1]
    return alloc


def ul_precoder(h_ul, n_streams, power, noise_var):
    """Selfish uplink precoder: leading right singular vectors of the uplink
    channel, water-filled over sigma_i^2 / noise_var at the given budget.

    h_ul is the n_bs x n_ms uplink channel of one user and subcarrier.
    """
    _, s, v = svd(h_ul)
    count = min(n_streams, len(s))
    sv = np.zeros(n_streams)
    sv[:count] = s[:count]
    gains = sv**2 / noise_var
    alloc = waterfill(gains, power) if np.any(gains > 0) else np.zeros(n_streams)
    cols = np.zeros((h_ul.shape[1], n_streams), dtype=complex)
    cols[:, :count] = v[:, :count]
    return cols @ np.diag(np.sqrt(alloc))


def _interference_plus_noise(h_ul_all, precoders, noise_var):
    n_bs = h_ul_all[0].shape[0]
    acc = noise_var * np.eye(n_bs, dtype=complex)
    for h_ul, t in zip(h_ul_all, precoders):
        ht = h_ul @ t
        acc += ht @ ht.conj().T
    return acc


def mmse_combiner(h_ul_all, precoders, noise_var):
    """MMSE uplink combiners for every user at one subcarrier.

    h_ul_all[i] is user i's n_bs x n_ms uplink channel; precoders[i] its
    uplink precoder. Noise-free systems fall back to the pseudo-inverse.
    """
    cov = _interference_plus_noise(h_ul_all, precoders, noise_var)
    if noise_var > 0.0:
        inv = np.linalg.inv(cov)
    else:
        inv = pinv(cov)
    return [inv @ (h_ul_all[u] @ precoders[u]) for u in range(len(h_ul_all))]


def mrc_combiner(h_ul, precoder):
    """Maximum-ratio combiner: the effective uplink channel itself."""
    return h_ul @ precoder


def cb_combiner(h_ul_all, precoders, u, tol=1e-10):
    """Conjugate beamforming: MRC projected onto the estimated inter-user
    interference nullspace. Falls back to the weakest-eigenvector subspace
    when the interference covers the whole space."""
    n_bs = h_ul_all[0].shape[0]
    r_bar = np.zeros((n_bs, n_bs), dtype=complex)
    for i, (h_ul, t) in enumerate(zip(h_ul_all, precoders)):
        if i == u:
            continue
        ht = h_ul @ t
        r_bar += ht @ ht.conj().T
    basis = nullspace_basis(r_bar, tol)
    if basis.shape[1] == 0:
        warnings.warn("interference spans the whole space; "
                      "projecting onto its weakest eigenvector instead")
        w, vecs = np.linalg.eigh(r_bar)
        basis = vecs[:, :1]
        del w
    proj = basis @ basis.conj().T
    return proj @ (h_ul_all[u] @ precoders[u])


def design_digital(freq_csi, cfg, combiner_kind, noise_var=None):
    """Full digital uplink design from (possibly estimated) channels.

    freq_csi holds downlink-oriented channel matrices (U, K, n_ms, n_bs);
    uplink channels are their Hermitian transposes.
    """
    if noise_var is None:
        noise_var = cfg.noise_var
    n_u, k_sub = freq_csi.shape[0], freq_csi.shape[1]
    budget = cfg.p_tx / cfg.n_users
    precoders = np.zeros((n_u, k_sub, cfg.n_ms, cfg.n_streams), dtype=complex)
    combiners = np.zeros((n_u, k_sub, cfg.n_bs, cfg.n_streams), dtype=complex)
    for k in range(k_sub):
        h_ul = [freq_csi[u, k].conj().T for u in range(n_u)]
        for u in range(n_u):
            precoders[u, k] = ul_precoder(h_ul[u], cfg.n_streams, budget,
                                          noise_var)
        t_all = [precoders[u, k] for u in range(n_u)]
        if combiner_kind == "mmse":
            for u, f in enumerate(mmse_combiner(h_ul, t_all, noise_var)):
                combiners[u, k] = f
        elif combiner_kind == "mrc":
            for u in range(n_u):
                combiners[u, k] = mrc_combiner(h_ul[u], t_all[u])
        elif combiner_kind == "cb":
            for u in range(n_u):
                combiners[u, k] = cb_combiner(h_ul, t_all, u)
        else:
            raise ValueError(f"unknown combiner kind: {combiner_kind!r}")
    return DigitalFilterSet(precoders, combiners, combiner_kind)


def dl_filters_from_ul(ul_precoders, ul_combiners, cfg):
    """Downlink filters by duality: each DL precoder is the UL combiner
    rescaled to the per-(user, subcarrier) power budget; DL combiners reuse
    the UL precoders unscaled (the rate is invariant to combiner scale)."""
    target = cfg.p_tx / (cfg.n_users * cfg.n_streams)
    dl_precoders = np.array(ul_combiners, dtype=complex, copy=True)
    for u in range(dl_precoders.shape[0]):
        for k in range(dl_precoders.shape[1]):
            norm = np.linalg.norm(dl_precoders[u, k])
            if norm == 0.0:
                raise ValueError(
                    f"uplink combiner (user {u}, subcarrier {k}) has zero norm"
                )
            dl_precoders[u, k] *= np.sqrt(target) / norm
    return dl_precoders, np.array(ul_precoders, dtype=complex, copy=True)
