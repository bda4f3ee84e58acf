"""Quantizer step/Lagrangian tables and rate-distortion optimized quantization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from ..numerics import dct2_inverse, zigzag_index_array
from .bitio import se_length, ue_length

DEFAULT_LAMBDA_C = 0.57


def _check_qp(qp) -> None:
    if not 0 <= qp <= 51:
        raise ConfigurationError(f"QP must lie in [0, 51], got {qp}")


def lambda_sse_from_qp(qp: int, c: float = DEFAULT_LAMBDA_C) -> float:
    _check_qp(qp)
    if not c > 0:
        raise ConfigurationError(f"lambda constant must be positive, got {c}")
    return c * 2.0 ** ((qp - 12) / 3.0)


def quant_step_from_qp(qp: int) -> float:
    _check_qp(qp)
    return 2.0 ** ((qp - 4) / 6.0)


def level_bits(level: int, run: int) -> int:
    """Rate model for one nonzero level preceded by ``run`` zeros."""
    return ue_length(run) + se_length(level)


@dataclass(frozen=True)
class RdoqResult:
    levels: np.ndarray  # int64, block layout
    pairs: tuple[tuple[int, int], ...]  # (run, level) in zigzag order
    bits: int  # pair count + pair codes

    @property
    def is_zero(self) -> bool:
        return not self.pairs


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def rdoq_quantize(coeffs: np.ndarray, step: float, lam: float, weight: float = 1.0) -> RdoqResult:
    """Greedy per-coefficient level choice among {0, trunc(c/step), round(c/step)}.

    Cost is ``weight * (c - level*step)**2 + lam * level_bits(level, run)``;
    zeros cost nothing and extend the current run. Ties keep the smaller level.
    """
    if not step > 0:
        raise ConfigurationError(f"quantization step must be positive, got {step}")
    if lam < 0 or weight < 0:
        raise ConfigurationError("lambda and weight must be non-negative")
    size = coeffs.shape[0]
    scan = zigzag_index_array(size)
    flat = np.asarray(coeffs, dtype=np.float64).ravel()[scan]
    levels_scan = np.zeros(flat.size, dtype=np.int64)
    pairs = []
    candidates_exist = np.flatnonzero(np.abs(flat) >= 0.5 * step)
    if candidates_exist.size and not (weight == 0.0 and lam > 0):
        run = 0
        prev = -1
        for i in candidates_exist.tolist():
            run += i - prev - 1
            prev = i
            c = flat[i]
            x = c / step
            best_level, best_cost = 0, weight * c * c
            for level in (int(x), _round_half_away(x)):
                if level == 0:
                    continue
                err = c - level * step
                cost = weight * err * err + lam * level_bits(level, run)
                if cost < best_cost:
                    best_level, best_cost = level, cost
            if best_level:
                levels_scan[i] = best_level
                pairs.append((run, best_level))
                run = 0
            else:
                run += 1
    levels = np.zeros(flat.size, dtype=np.int64)
    levels[scan] = levels_scan
    bits = ue_length(len(pairs)) + sum(level_bits(lv, r) for r, lv in pairs)
    return RdoqResult(levels.reshape(size, size), tuple(pairs), bits)


def pairs_to_levels(pairs, size: int) -> np.ndarray:
    scan = zigzag_index_array(size)
    levels = np.zeros(size * size, dtype=np.int64)
    pos = -1
    for run, level in pairs:
        pos += run + 1
        if pos >= size * size:
            raise ValueError("coefficient run overflows the block")
        levels[scan[pos]] = level
    return levels.reshape(size, size)


def dequantize_residual(levels: np.ndarray, step: float) -> np.ndarray:
    """Sample-domain residual for integer ``levels``; shared by encoder and decoder."""
    return dct2_inverse(levels.astype(np.float64) * step)
