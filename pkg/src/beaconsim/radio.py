"""Pathloss with log-normal shadowing and capture-effect reception.

Received signal strength follows mean pathloss plus a fresh Gaussian
shadowing draw per transmission. Concurrent transmissions at a receiver
resolve through the capture effect: the strongest packet survives when its
margin over the summed interference exceeds the capture threshold, otherwise
the payloads superpose bit by bit (agreeing bits kept, disagreements drawn
with probability proportional to linear signal power). Packets arriving
later than one preamble window after the first can only interfere, never win.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class RadioError(ValueError):
    """Invalid radio parameters."""


@dataclass(frozen=True)
class RadioParams:
    p_t_dbm: float = 0.0
    l_d0_db: float = 40.0
    d0_m: float = 1.0
    n: float = 3.0
    sigma_db: float = 7.0
    capture_threshold_db: float = 6.0
    preamble_window_s: float = 8e-6   # one preamble byte at 1 Mb/s
    sensitivity_dbm: float | None = None
    clamp_below_d0: bool = True       # analysis uses the far-field form (off)

    def __post_init__(self):
        if self.n <= 0 or self.d0_m <= 0 or self.sigma_db < 0:
            raise RadioError("need n > 0, d0 > 0, sigma >= 0")
        if self.preamble_window_s <= 0:
            raise RadioError("preamble window must be positive")


@dataclass(frozen=True, eq=False)
class Transmission:
    sender: int
    payload_bits: np.ndarray | None
    start_time: float
    rss_dbm: float

    def __post_init__(self):
        if not math.isfinite(self.rss_dbm):
            raise RadioError("rss must be finite")


class ReceptionKind(Enum):
    CLEAN = "clean"
    CAPTURED = "captured"
    COLLIDED_CORRUPTED = "collided_corrupted"
    NONE = "none"


@dataclass(frozen=True)
class ReceptionOutcome:
    kind: ReceptionKind
    delivered_payload: np.ndarray | None = None
    winner: int | None = None


def mean_rss(distance: float, params: RadioParams) -> float:
    """Mean received signal strength (dBm) at `distance` meters."""
    if distance <= 0 and params.clamp_below_d0:
        distance = params.d0_m
    elif distance <= 0:
        raise RadioError("distance must be positive for the far-field form")
    if params.clamp_below_d0:
        distance = max(distance, params.d0_m)
    return (
        params.p_t_dbm
        - params.l_d0_db
        - 10.0 * params.n * math.log10(distance / params.d0_m)
    )


def sample_rss(distance: float, params: RadioParams, rng: np.random.Generator) -> float:
    """One shadowed RSS draw from the caller's named stream."""
    mu = mean_rss(distance, params)
    if params.sigma_db == 0.0:
        return mu
    return mu + params.sigma_db * float(rng.standard_normal())


def prob_stronger(d_i: float, d_j: float, d_mono: float, params: RadioParams) -> float:
    """P[signal from anchor i beats anchor j at the receiver position].

    The difference of two independent shadowing draws is Gaussian with
    variance 2 sigma^2 around the mean-RSS difference.
    """
    if d_i < 0 or d_j < 0 or d_mono < 0:
        raise RadioError("positions must be non-negative")
    phi_i = _phi(abs(d_mono - d_i), params)
    phi_j = _phi(abs(d_mono - d_j), params)
    if params.sigma_db == 0.0:
        if phi_i > phi_j:
            return 1.0
        if phi_i < phi_j:
            return 0.0
        return 0.5
    arg = (phi_i - phi_j) / (params.sigma_db * math.sqrt(2.0))
    return 0.5 * (1.0 + math.erf(arg / math.sqrt(2.0)))


def _phi(distance: float, params: RadioParams) -> float:
    if distance <= 0:
        if params.clamp_below_d0:
            return mean_rss(params.d0_m, params)
        return math.inf
    return mean_rss(distance, params)


def _dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def _mw_to_dbm(mw: float) -> float:
    return 10.0 * math.log10(mw)


def resolve_reception(
    transmissions: list[Transmission],
    params: RadioParams,
    rng: np.random.Generator,
) -> ReceptionOutcome:
    """Resolve what a listening receiver gets out of overlapping transmissions."""
    if not transmissions:
        return ReceptionOutcome(ReceptionKind.NONE)

    t0 = min(t.start_time for t in transmissions)
    candidates = [t for t in transmissions if t.start_time <= t0 + params.preamble_window_s]

    if len(transmissions) == 1:
        t = transmissions[0]
        if params.sensitivity_dbm is not None and t.rss_dbm < params.sensitivity_dbm:
            return ReceptionOutcome(ReceptionKind.NONE)
        return ReceptionOutcome(ReceptionKind.CLEAN, t.payload_bits, t.sender)

    winner = max(candidates, key=lambda t: t.rss_dbm)
    if params.sensitivity_dbm is not None and winner.rss_dbm < params.sensitivity_dbm:
        return ReceptionOutcome(ReceptionKind.NONE)
    interference_mw = sum(
        _dbm_to_mw(t.rss_dbm) for t in transmissions if t is not winner
    )
    margin = winner.rss_dbm - _mw_to_dbm(interference_mw)
    if margin >= params.capture_threshold_db:
        return ReceptionOutcome(ReceptionKind.CAPTURED, winner.payload_bits, winner.sender)

    mixed = _superpose([t for t in candidates if t.payload_bits is not None], rng)
    return ReceptionOutcome(ReceptionKind.COLLIDED_CORRUPTED, mixed, None)


def _superpose(txs: list[Transmission], rng: np.random.Generator) -> np.ndarray | None:
    """Bitwise collision channel: agreement kept, disagreement power-weighted."""
    if not txs:
        return None
    bits = np.stack([t.payload_bits for t in txs]).astype(np.float64)
    weights = np.array([_dbm_to_mw(t.rss_dbm) for t in txs])
    weights = weights / weights.sum()
    p_one = weights @ bits
    agree_one = np.all(bits == 1, axis=0)
    agree_zero = np.all(bits == 0, axis=0)
    out = (rng.random(bits.shape[1]) < p_one).astype(np.uint8)
    out[agree_one] = 1
    out[agree_zero] = 0
    return out
