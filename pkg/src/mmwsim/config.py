"""Experiment configuration: one dataclass holding every dimensional and
statistical parameter of a simulated system, plus JSON loading with
field-level validation."""

import json
from dataclasses import dataclass, asdict, fields, replace

__all__ = ["SystemConfig", "ConfigError", "desk_scale", "paper_scale"]

GRID_MODES = ("on_grid", "off_grid")


class ConfigError(ValueError):
    """Invalid configuration file or field values."""


@dataclass(frozen=True)
class SystemConfig:
    """All parameters of one experiment.

    Antenna counts, RF chains, stream counts, OFDM/delay dimensions,
    dictionary grids, training length, SNR, power and the master seed.
    Frozen so a config can be hashed into RNG streams and serialized
    into run manifests unchanged.
    """

    n_bs: int = 32          # BS antennas
    n_ms: int = 8           # MS antennas (uniform across users)
    n_users: int = 2
    l_bs: int = 4           # RF chains at the BS
    l_ms: int = 2           # RF chains per MS
    n_streams: int = 2      # data streams per user
    n_subcarriers: int = 16
    n_delay_taps: int = 8
    n_paths: int = 2        # propagation paths per user
    g_bs: int = 64          # BS-side dictionary grid size
    g_ms: int = 16          # MS-side dictionary grid size
    n_quant_bits: int = 4   # phase-shifter quantization bits
    n_frames: int = 60      # training frames M
    snr_db: float = 0.0
    p_tx: float = 1.0       # total transmit power
    rolloff: float = 0.8    # raised-cosine roll-off
    grid_mode: str = "on_grid"
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            if f.name in ("snr_db", "p_tx", "rolloff"):
                if not isinstance(getattr(self, f.name), (int, float)):
                    raise ConfigError(f"{f.name} must be a real number")
            elif f.name == "grid_mode":
                continue
            elif not isinstance(getattr(self, f.name), int):
                raise ConfigError(f"{f.name} must be an integer")
        positive = (
            "n_bs", "n_ms", "n_users", "l_bs", "l_ms", "n_streams",
            "n_subcarriers", "n_delay_taps", "n_paths", "g_bs", "g_ms",
            "n_quant_bits", "n_frames",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.grid_mode not in GRID_MODES:
            raise ConfigError(f"grid_mode must be one of {GRID_MODES}")
        # strict < is the practical hybrid regime; equality is kept legal so
        # RF-chain sweeps can include the fully digital corner
        if not self.l_bs <= self.n_bs:
            raise ConfigError("need l_bs <= n_bs")
        if not self.l_ms <= self.n_ms:
            raise ConfigError("need l_ms <= n_ms")
        if self.n_streams > self.l_ms:
            raise ConfigError("need n_streams <= l_ms")
        if self.n_users * self.n_streams > self.l_bs:
            raise ConfigError("need n_users * n_streams <= l_bs")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ConfigError("rolloff must lie in [0, 1]")
        if self.p_tx <= 0:
            raise ConfigError("p_tx must be positive")

    @property
    def noise_var(self):
        """Noise power sigma_n^2 from SNR = p_tx / (n_users * sigma_n^2)."""
        return self.p_tx / (self.n_users * 10.0 ** (self.snr_db / 10.0))

    def check_estimation_grids(self):
        """Dictionary sizing required before any compressive estimation run."""
        if self.g_bs < 2 * self.n_bs:
            raise ConfigError("estimation requires g_bs >= 2 * n_bs")
        if self.g_ms < 2 * self.n_ms:
            raise ConfigError("estimation requires g_ms >= 2 * n_ms")

    def with_(self, **updates):
        return replace(self, **updates)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


def desk_scale(**overrides):
    """Default tractable configuration; keeps every structural relationship
    of the reference system (l_bs < n_bs, U*n_streams <= l_bs, g >= 2n)."""
    return SystemConfig(**overrides)


def paper_scale(**overrides):
    """Full-size reference configuration (slow; for spot checks only)."""
    base = dict(
        n_bs=128, n_ms=16, n_users=4, l_bs=8, l_ms=2, n_streams=2,
        n_subcarriers=32, n_delay_taps=8, n_paths=4, g_bs=256, g_ms=32,
        n_quant_bits=4, n_frames=100,
    )
    base.update(overrides)
    return SystemConfig(**base)


def load_config(path):
    """Read a flat JSON config file into a SystemConfig.

    Parse errors are reported with their line number; schema errors name
    the offending key.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    try:
        return SystemConfig.from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
