"""Geometric multiuser frequency-selective channel generation.

Half-wavelength ULAs at both ends. Each user's channel is a sum of
raised-cosine-filtered paths laid out over delay taps, transformed to
per-subcarrier frequency responses by the K-point DFT across taps.
The matching quantized-angle dictionaries for compressive estimation
live here as well. The sampling period is normalized to t_s = 1.
"""

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "steering_vector",
    "raised_cosine",
    "build_dictionary",
    "grid_spatial_frequencies",
    "PathSet",
    "ChannelRealization",
    "generate_channel",
    "virtual_support",
]


def steering_vector(n_antennas, angle):
    """Unit-norm ULA response: entry i = exp(j*pi*i*sin(angle)) / sqrt(n)."""
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    i = np.arange(n_antennas)
    return np.exp(1j * np.pi * i * np.sin(angle)) / np.sqrt(n_antennas)


def raised_cosine(t, rolloff, t_s=1.0):
    """Raised-cosine pulse value at time t.

    Equals 1 at t = 0 and 0 at nonzero integer multiples of t_s; the
    removable singularity at |t| = t_s / (2*rolloff) is filled with its
    limit. Accepts scalars or arrays.
    """
    if not 0.0 <= rolloff <= 1.0:
        raise ValueError("rolloff must lie in [0, 1]")
    x = np.asarray(t, dtype=float) / t_s
    out = np.sinc(x)
    if rolloff > 0.0:
        denom = 1.0 - (2.0 * rolloff * x) ** 2
        singular = np.isclose(denom, 0.0, atol=1e-12)
        cos_term = np.where(singular, 1.0, np.cos(np.pi * rolloff * x))
        safe = np.where(singular, 1.0, denom)
        out = out * cos_term / safe
        # limit at x = +-1/(2*rolloff): (pi/4) * sinc(1/(2*rolloff))
        lim = (np.pi / 4.0) * np.sinc(1.0 / (2.0 * rolloff))
        out = np.where(singular, lim * np.ones_like(out), out)
    return out if out.ndim else float(out)


def grid_spatial_frequencies(grid_size):
    """Uniform grid of sin(angle) values over [-1, 1) with grid_size points."""
    return -1.0 + 2.0 * np.arange(grid_size) / grid_size


def build_dictionary(n_antennas, grid_size):
    """n_antennas x grid_size matrix of steering vectors on the angle grid.

    Columns are unit norm; at grid_size == n_antennas the matrix is a
    unitary DFT up to per-column phases.
    """
    if grid_size < n_antennas:
        raise ValueError("grid_size must be >= n_antennas")
    sines = grid_spatial_frequencies(grid_size)
    i = np.arange(n_antennas)[:, None]
    return np.exp(1j * np.pi * i * sines[None, :]) / np.sqrt(n_antennas)


@dataclass
class PathSet:
    """Per-user path parameters. Grid indices are set in on-grid mode only."""

    gains: np.ndarray    # complex, (n_paths,)
    delays: np.ndarray   # seconds, (n_paths,)
    aoa: np.ndarray      # radians at the MS, (n_paths,)
    aod: np.ndarray      # radians at the BS, (n_paths,)
    aoa_idx: np.ndarray | None = None  # MS grid indices (on-grid)
    aod_idx: np.ndarray | None = None  # BS grid indices (on-grid)

    @property
    def n_paths(self):
        return len(self.gains)


@dataclass
class ChannelRealization:
    """One multiuser channel draw.

    taps[u, d]  : n_ms x n_bs delay-tap matrix, d = 0..D-1
    freq[u, k]  : n_ms x n_bs downlink channel at subcarrier k
    The uplink channel at subcarrier k is freq[u, k].conj().T.
    """

    paths: list
    taps: np.ndarray
    freq: np.ndarray

    @property
    def n_users(self):
        return self.freq.shape[0]

    @property
    def n_subcarriers(self):
        return self.freq.shape[1]

    def uplink(self, u, k):
        return self.freq[u, k].conj().T

    def total_energy(self):
        """Sum of ||H_u[k]||_F^2 over users and subcarriers."""
        return float(np.sum(np.abs(self.freq) ** 2))

    def to_json(self):
        return json.dumps(
            {
                "paths": [
                    {
                        "gains": _encode_complex(p.gains),
                        "delays": p.delays.tolist(),
                        "aoa": p.aoa.tolist(),
                        "aod": p.aod.tolist(),
                        "aoa_idx": None if p.aoa_idx is None else p.aoa_idx.tolist(),
                        "aod_idx": None if p.aod_idx is None else p.aod_idx.tolist(),
                    }
                    for p in self.paths
                ],
                "taps": _encode_complex(self.taps),
                "freq": _encode_complex(self.freq),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        paths = [
            PathSet(
                gains=_decode_complex(p["gains"]),
                delays=np.asarray(p["delays"], dtype=float),
                aoa=np.asarray(p["aoa"], dtype=float),
                aod=np.asarray(p["aod"], dtype=float),
                aoa_idx=None if p["aoa_idx"] is None else np.asarray(p["aoa_idx"]),
                aod_idx=None if p["aod_idx"] is None else np.asarray(p["aod_idx"]),
            )
            for p in data["paths"]
        ]
        return cls(
            paths=paths,
            taps=_decode_complex(data["taps"]),
            freq=_decode_complex(data["freq"]),
        )


def _encode_complex(a):
    """Complex ndarray -> nested lists with [re, im] pairs at the leaves."""
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _decode_complex(nested):
    arr = np.asarray(nested, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def _draw_paths(cfg, rng):
    n_p = cfg.n_paths
    gains = (rng.standard_normal(n_p) + 1j * rng.standard_normal(n_p)) / np.sqrt(2.0)
    if cfg.grid_mode == "on_grid":
        aod_idx = np.sort(rng.choice(cfg.g_bs, size=n_p, replace=False))
        aoa_idx = np.sort(rng.choice(cfg.g_ms, size=n_p, replace=False))
        aod = np.arcsin(grid_spatial_frequencies(cfg.g_bs)[aod_idx])
        aoa = np.arcsin(grid_spatial_frequencies(cfg.g_ms)[aoa_idx])
        delays = rng.integers(0, cfg.n_delay_taps, size=n_p).astype(float)
        return PathSet(gains, delays, aoa, aod, aoa_idx=aoa_idx, aod_idx=aod_idx)
    aod = rng.uniform(-np.pi / 2, np.pi / 2, size=n_p)
    aoa = rng.uniform(-np.pi / 2, np.pi / 2, size=n_p)
    delays = rng.uniform(0.0, cfg.n_delay_taps - 1.0, size=n_p)
    return PathSet(gains, delays, aoa, aod)


def generate_channel(cfg, rng):
    """Draw one multiuser ChannelRealization.

    Delay taps follow the path model with gain normalization
    gamma = sqrt(n_bs * n_ms / n_paths) and E|alpha|^2 = 1; frequency
    channels are the DFT across taps.
    """
    n_u, d_taps, k_sub = cfg.n_users, cfg.n_delay_taps, cfg.n_subcarriers
    gamma = np.sqrt(cfg.n_bs * cfg.n_ms / cfg.n_paths)
    paths = []
    taps = np.zeros((n_u, d_taps, cfg.n_ms, cfg.n_bs), dtype=complex)
    for u in range(n_u):
        ps = _draw_paths(cfg, rng)
        paths.append(ps)
        for p in range(ps.n_paths):
            a_ms = steering_vector(cfg.n_ms, ps.aoa[p])
            a_bs = steering_vector(cfg.n_bs, ps.aod[p])
            outer = np.outer(a_ms, a_bs.conj())
            pulse = raised_cosine(np.arange(d_taps) - ps.delays[p], cfg.rolloff)
            taps[u] += gamma * ps.gains[p] * pulse[:, None, None] * outer[None, :, :]
    # H_u[k] = sum_d taps[u, d] * exp(-j 2 pi k d / K)
    k = np.arange(k_sub)
    d = np.arange(d_taps)
    dft = np.exp(-2j * np.pi * np.outer(k, d) / k_sub)
    freq = np.einsum("kd,udmn->ukmn", dft, taps)
    return ChannelRealization(paths=paths, taps=taps, freq=freq)


def virtual_support(paths, cfg):
    """Flat indices of a user's paths inside vec of the virtual channel gains.

    The virtual gain matrix is g_bs x g_ms; cell (aod-grid b, aoa-grid m)
    vectorizes (column-major) to index m * g_bs + b. Only defined on-grid.
    """
    if paths.aod_idx is None or paths.aoa_idx is None:
        raise ValueError("virtual support exists only for on-grid path sets")
    return np.asarray(
        sorted(int(m) * cfg.g_bs + int(b) for b, m in zip(paths.aod_idx, paths.aoa_idx))
    )
