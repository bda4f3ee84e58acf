"""Distortion metrics and Lagrangian candidate selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from ..errors import InputError, ShapeError
from ..importance import ImportanceMap, MetricParams


@dataclass(frozen=True, eq=False)
class DistortionMetric:
    """SSE when ``weights`` is None, otherwise sum(h q^2) + tau * sum(q^2).

    ``weights`` is the importance map laid out as the (normalized) frame.
    """

    lam: float
    weights: np.ndarray | None = None
    tau: float = 0.0
    imap: ImportanceMap | None = None
    params: MetricParams | None = None

    @classmethod
    def sse(cls, lambda_sse: float) -> "DistortionMetric":
        return cls(lam=lambda_sse)

    @classmethod
    def weighted(cls, imap: ImportanceMap, params: MetricParams, frame_shape: tuple[int, int]) -> "DistortionMetric":
        """Weighted SSE, falling back to plain SSE with lambda_sse for an all-zero map."""
        if not np.any(imap.weights):
            return cls(lam=params.lambda_sse, imap=imap, params=params)
        return cls(lam=params.lam, weights=imap.as_frame(frame_shape), tau=params.tau, imap=imap, params=params)

    @property
    def is_weighted(self) -> bool:
        return self.weights is not None

    def block_weight(self, row: int, col: int, size: int) -> float:
        """Mean per-sample weight of a block, used inside RDOQ."""
        if self.weights is None:
            return 1.0
        return float(np.mean(self.weights[row : row + size, col : col + size])) + self.tau


def block_distortion(metric: DistortionMetric, orig: np.ndarray, recon: np.ndarray, position: tuple[int, int]) -> float:
    if orig.shape != recon.shape:
        raise ShapeError(f"block shapes differ: {orig.shape} vs {recon.shape}")
    q = recon - orig
    if metric.weights is None:
        return float(np.sum(q * q))
    r, c = position
    bh, bw = orig.shape
    fh, fw = metric.weights.shape
    if r < 0 or c < 0 or r + bh > fh or c + bw > fw:
        raise ShapeError(f"block at {position} of shape {orig.shape} lies outside the {metric.weights.shape} frame")
    h = metric.weights[r : r + bh, c : c + bw]
    d = float(np.sum(h * q * q))
    if metric.tau:
        d += metric.tau * float(np.sum(q * q))
    return d


def rdo_select(candidates: Sequence[tuple[Any, float, float]], lam: float) -> int:
    """Index of the candidate minimizing D + lam*R; ties go to lower R, then lower index."""
    if not candidates:
        raise InputError("rdo_select needs at least one candidate")
    if lam < 0:
        raise InputError(f"lambda must be non-negative, got {lam}")
    best, best_key = 0, None
    for i, (_, d, r) in enumerate(candidates):
        key = (d + lam * r, r)
        if best_key is None or key < best_key:
            best, best_key = i, key
    return best
