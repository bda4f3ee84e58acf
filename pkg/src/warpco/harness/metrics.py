"""Quality metric, RD curve containers and Bjontegaard deltas."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..errors import InputError


def quality_fsnr(y_ref: Sequence[np.ndarray], y_hat: Sequence[np.ndarray]) -> float:
    """Feature SNR in dB, 10*log10(Var(y_ref) / MSE), pooled over the sequence.

    Returns +inf for a lossless reconstruction.
    """
    ref = np.asarray(y_ref, dtype=np.float64)
    hat = np.asarray(y_hat, dtype=np.float64)
    if ref.shape != hat.shape:
        raise InputError(f"shape mismatch {ref.shape} vs {hat.shape}")
    var = float(np.var(ref))
    if var == 0:
        raise InputError("reference features have zero variance")
    mse = float(np.mean((ref - hat) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(var / mse)


@dataclass
class RdPoint:
    qp: int
    rate: float  # mean bits per frame
    quality: float
    sse_z: float = 0.0
    sse_y: float = 0.0
    encode_ms: float = 0.0


@dataclass
class RdCurve:
    label: str
    mode: str
    points: list[RdPoint] = field(default_factory=list)

    def sorted(self) -> "RdCurve":
        return RdCurve(self.label, self.mode, sorted(self.points, key=lambda p: (p.rate, p.qp)))

    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points])

    def qualities(self) -> np.ndarray:
        return np.array([p.quality for p in self.points])

    def to_dict(self) -> dict:
        return {"label": self.label, "mode": self.mode, "points": [asdict(p) for p in self.points]}

    @classmethod
    def from_dict(cls, d: dict) -> "RdCurve":
        return cls(d["label"], d.get("mode", d["label"]), [RdPoint(**p) for p in d["points"]])


@dataclass(frozen=True)
class BdResult:
    value: float
    mode: str
    warning: str | None = None

    def __float__(self) -> float:
        return self.value


def _finite_points(curve: RdCurve) -> tuple[np.ndarray, np.ndarray]:
    r, q = curve.rates(), curve.qualities()
    keep = np.isfinite(q) & np.isfinite(r) & (r > 0)
    r, q = r[keep], q[keep]
    if r.size < 4:
        raise InputError(f"curve {curve.label!r} has {r.size} usable points; BD needs at least 4")
    order = np.argsort(r, kind="stable")
    return np.log10(r[order]), q[order]


def _monotone(poly: np.ndarray, lo: float, hi: float) -> bool:
    d = np.polyval(np.polyder(poly), np.linspace(lo, hi, 101))
    return bool(np.all(d >= 0) or np.all(d <= 0))


def _avg_over(poly: np.ndarray, lo: float, hi: float) -> float:
    antideriv = np.polyint(poly)
    return (np.polyval(antideriv, hi) - np.polyval(antideriv, lo)) / (hi - lo)


def bd_delta(anchor: RdCurve, test: RdCurve, mode: str = "rate") -> BdResult:
    """Bjontegaard delta of ``test`` against ``anchor`` using cubic fits.

    mode="rate": mean log10-rate difference over the common quality range,
    returned in percent. mode="quality": mean quality difference over the
    common log10-rate range, in the quality unit (dB).
    """
    lr_a, q_a = _finite_points(anchor)
    lr_t, q_t = _finite_points(test)
    if mode == "rate":
        xa, ya, xt, yt = q_a, lr_a, q_t, lr_t
    elif mode == "quality":
        xa, ya, xt, yt = lr_a, q_a, lr_t, q_t
    else:
        raise InputError(f"unknown BD mode {mode!r}")
    lo, hi = max(xa.min(), xt.min()), min(xa.max(), xt.max())
    if not hi > lo:
        raise InputError(f"curves {anchor.label!r} and {test.label!r} do not overlap")
    pa = np.polyfit(xa, ya, 3)
    pt = np.polyfit(xt, yt, 3)
    diff = _avg_over(pt, lo, hi) - _avg_over(pa, lo, hi)
    warning = None
    if not (_monotone(pa, lo, hi) and _monotone(pt, lo, hi)):
        warning = "non-monotone cubic fit over the overlap interval"
    value = (10.0**diff - 1.0) * 100.0 if mode == "rate" else diff
    return BdResult(float(value), mode, warning)
