"""Risk bound estimation, frame/sequence risk statistics and the trigger.

The risk bound is the smallest observed training risk whose exceedance
fraction stays within 1 - confidence; it is computed exactly on the sorted
risks. The binned histogram exists only for dashboard display.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence, Tuple

import numpy as np

from .errors import EmptyFrame, EmptyRisks, EmptySequence
from .segmenter import UNKNOWN_LABEL


@dataclass
class RiskBoundConfig:
    confidence: float = 0.95
    histogram_bins: int = 50

    def __post_init__(self):
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")


def estimate_risk_bound(train_risks: Sequence[float], confidence: float) -> float:
    """Minimal observed risk r with |{risk > r}| / N <= 1 - confidence."""
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    risks = np.asarray(list(train_risks), dtype=np.float64)
    if risks.size == 0:
        raise EmptyRisks("cannot estimate a risk bound from zero risks")
    n = risks.size
    allowed = (1.0 - confidence) * n
    ordered = np.sort(risks)
    values = np.unique(ordered)
    exceed = n - np.searchsorted(ordered, values, side="right")
    idx = int(np.argmax(exceed <= allowed))  # first (smallest) feasible value
    return float(values[idx])


def risk_histogram(train_risks: Sequence[float],
                   bins: int = 50) -> Tuple[np.ndarray, np.ndarray]:
    """Binned view of the training risks (display only; the bound is exact)."""
    risks = np.asarray(list(train_risks), dtype=np.float64)
    if risks.size == 0:
        raise EmptyRisks("no risks to histogram")
    counts, edges = np.histogram(risks, bins=bins)
    return counts, edges


def frame_risk(predictions: Sequence) -> float:
    """Fraction of patch predictions gated to the unknown label."""
    if not predictions:
        raise EmptyFrame("frame risk needs at least one patch prediction")
    phi = sum(1 for p in predictions if p.label == UNKNOWN_LABEL)
    return phi / len(predictions)


def sequence_risk(frame_risks: Sequence[float], risk_level: float) -> float:
    """Fraction of frames whose risk strictly exceeds the risk level."""
    values = list(frame_risks)
    if not values:
        raise EmptySequence("sequence risk needs at least one frame risk")
    return sum(1 for v in values if v > risk_level) / len(values)


@dataclass(frozen=True)
class RiskSeries:
    """Immutable snapshot of the rolling frame-risk series and trigger state.

    The trigger latches: once set it stays up, surviving later low-risk
    frames, until `acknowledge` clears it. The next update that exceeds the
    threshold latches it again.
    """

    frame_risks: Tuple[Tuple[str, float], ...] = ()
    risk_level: float = 0.5
    window: int = 100
    trigger_threshold: float = 0.5
    sequence_risk_value: float = 0.0
    triggered: bool = False

    def trailing(self) -> Tuple[Tuple[str, float], ...]:
        return self.frame_risks[-self.window:]


def update_trigger(series: RiskSeries, frame_id: str,
                   new_frame_risk: float) -> RiskSeries:
    """Append one frame risk and recompute the windowed sequence risk."""
    risks = series.frame_risks + ((frame_id, float(new_frame_risk)),)
    tail = risks[-series.window:]
    phi_s = sequence_risk([r for _, r in tail], series.risk_level)
    return replace(
        series,
        frame_risks=risks,
        sequence_risk_value=phi_s,
        triggered=series.triggered or phi_s > series.trigger_threshold,
    )


def acknowledge(series: RiskSeries) -> RiskSeries:
    return replace(series, triggered=False)


def export_risk_series(series: RiskSeries, path) -> None:
    """One {frame_id, flr} JSON line per frame, then a summary line."""
    with open(path, "w", encoding="utf-8") as f:
        for fid, flr in series.frame_risks:
            f.write(json.dumps({"frame_id": fid, "flr": flr}) + "\n")
        f.write(json.dumps({
            "phi_s": series.sequence_risk_value,
            "epsilon": series.risk_level,
            "window": series.window,
            "triggered": series.triggered,
        }) + "\n")
