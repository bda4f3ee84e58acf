"""Synthetic feature sequences: spatially blurred Gaussian noise with AR(1) temporal memory."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import ConfigurationError
from ..numerics import RngStream, rng_gaussian


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    channels: int = 16
    height: int = 16
    width: int = 16
    frames: int = 8
    blur_radius: float = 1.5
    # explicit per-channel standard deviations; geometric decay when None
    channel_std: tuple[float, ...] | None = None
    std_decay: float = 0.5
    rho: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ConfigurationError(f"rho must lie in [0, 1), got {self.rho}")
        if self.blur_radius < 0:
            raise ConfigurationError(f"blur radius must be non-negative, got {self.blur_radius}")
        if min(self.channels, self.height, self.width, self.frames) < 1:
            raise ConfigurationError("channels, height, width and frames must be positive")
        if self.channel_std is not None:
            if len(self.channel_std) != self.channels:
                raise ConfigurationError("channel_std needs one entry per channel")
            if any(s < 0 for s in self.channel_std):
                raise ConfigurationError("channel standard deviations must be non-negative")
        if self.std_decay < 0:
            raise ConfigurationError("std_decay must be non-negative")

    def stds(self) -> np.ndarray:
        if self.channel_std is not None:
            return np.asarray(self.channel_std, dtype=np.float64)
        return self.std_decay ** np.arange(self.channels, dtype=np.float64)


@lru_cache(maxsize=None)
def _blur_gain(radius: float) -> float:
    """Standard deviation of blurred unit white noise away from the borders."""
    if radius == 0:
        return 1.0
    n = int(8 * radius) * 2 + 1
    delta = np.zeros((n, n))
    delta[n // 2, n // 2] = 1.0
    k = gaussian_filter(delta, radius)
    return float(np.sqrt(np.sum(k * k)))


def _blurred_noise(stream: RngStream, cfg: SynthConfig) -> tuple[np.ndarray, RngStream]:
    shape = (cfg.channels, cfg.height, cfg.width)
    noise, stream = rng_gaussian(stream, int(np.prod(shape)), 1.0)
    noise = noise.reshape(shape)
    if cfg.blur_radius > 0:
        noise = np.stack([gaussian_filter(ch, cfg.blur_radius) for ch in noise]) / _blur_gain(cfg.blur_radius)
    return noise, stream


def gen_synthetic_sequence(cfg: SynthConfig) -> list[np.ndarray]:
    """Frames of shape (C, H, W); channel c has standard deviation ``stds()[c]``."""
    stream = RngStream.for_purpose(cfg.seed, "synthetic-data")
    stds = cfg.stds()[:, None, None]
    innovation = np.sqrt(1.0 - cfg.rho**2)
    frames = []
    prev = None
    for _ in range(cfg.frames):
        noise, stream = _blurred_noise(stream, cfg)
        cur = noise * stds if prev is None else cfg.rho * prev + innovation * noise * stds
        frames.append(cur)
        prev = cur
    return frames
