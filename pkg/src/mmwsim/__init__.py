"""Multiuser frequency-selective mmWave MIMO simulation: compressive
channel estimation, digital and hybrid precoder/combiner design, and a
seeded Monte-Carlo evaluation harness."""

from .config import SystemConfig, desk_scale, paper_scale

__all__ = ["SystemConfig", "desk_scale", "paper_scale"]
__version__ = "0.1.0"
