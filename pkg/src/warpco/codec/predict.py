"""Intra DC and motion-compensated inter prediction, full-search motion estimation."""

from __future__ import annotations

import numpy as np

from ..errors import StateError
from .bitio import se_length
from .rdo import DistortionMetric, block_distortion

I_FRAME = 0
P_FRAME = 1


def predict_intra_dc(recon: np.ndarray, row: int, col: int, size: int) -> np.ndarray:
    """Mean of the reconstructed row above and column to the left; 0.0 when neither exists."""
    parts = []
    if row > 0:
        parts.append(recon[row - 1, col : col + size])
    if col > 0:
        parts.append(recon[row : row + size, col - 1])
    if not parts:
        return np.zeros((size, size))
    dc = float(np.mean(np.concatenate(parts)))
    return np.full((size, size), dc)


def predict_inter(reference: np.ndarray | None, row: int, col: int, size: int, mv: tuple[int, int]) -> np.ndarray:
    """Copy of the reference block at (row, col) + mv, with the block origin clamped into the frame."""
    if reference is None:
        raise StateError("P-frame prediction needs a reference frame")
    fh, fw = reference.shape
    r = min(max(row + mv[0], 0), fh - size)
    c = min(max(col + mv[1], 0), fw - size)
    return reference[r : r + size, c : c + size].copy()


def predict_block(
    frame_type: int,
    position: tuple[int, int],
    size: int,
    recon: np.ndarray,
    reference: np.ndarray | None = None,
    mv: tuple[int, int] = (0, 0),
) -> np.ndarray:
    row, col = position
    if frame_type == I_FRAME:
        return predict_intra_dc(recon, row, col, size)
    return predict_inter(reference, row, col, size, mv)


def mv_bits(mv: tuple[int, int]) -> int:
    return se_length(mv[0]) + se_length(mv[1])


def motion_search(
    orig: np.ndarray,
    reference: np.ndarray,
    position: tuple[int, int],
    search_range: int,
    metric: DistortionMetric,
    lam: float,
) -> tuple[int, int]:
    """Full integer search over [-range, range]^2 minimizing D(orig, pred) + lam * mv bits.

    Ties go to the smaller |dy| + |dx|, then to raster order of (dy, dx).
    """
    size = orig.shape[0]
    best, best_key = (0, 0), None
    for dy in range(-search_range, search_range + 1):
        for dx in range(-search_range, search_range + 1):
            pred = predict_inter(reference, position[0], position[1], size, (dy, dx))
            cost = block_distortion(metric, orig, pred, position) + lam * mv_bits((dy, dx))
            key = (cost, abs(dy) + abs(dx))
            if best_key is None or key < best_key:
                best, best_key = (dy, dx), key
    return best
