"""Accuracy / charging-period tradeoff of two-wave beaconing on a line.

Anchors sit at regular spacing along a line from the energy source, each
owning the cell around it; the mobile node is uniform over the line. Correct
detection in a cell is approximated by the product of pairwise win
probabilities of the shadowed signals. Waking only the near group first cuts
the expected charging period (the far anchors charge slowly) at the cost of
detection accuracy in the far cells, which must route through the border
anchor. These are far-field expressions: the pathloss reference-distance
clamp is disabled so the win probability tends to one at the anchor itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import simpson

from .energy import HarvestModel, PowerProfile, charging_period, harvested_power
from .radio import RadioParams, prob_stronger


class AnalysisError(ValueError):
    """Invalid deployment or non-converging quadrature."""


@dataclass(frozen=True)
class LineDeployment:
    """r anchors at (i - 1/2) d_v from the source, cells [(i-1) d_v, i d_v]."""

    r: int
    d_v: float = 1.0

    def __post_init__(self):
        if self.r < 1 or self.d_v <= 0:
            raise AnalysisError("need r >= 1 and d_v > 0")

    @property
    def span(self) -> float:
        return self.r * self.d_v

    @property
    def omega(self) -> float:
        """Probability of the mobile node falling in any one cell."""
        return 1.0 / self.r

    def position(self, i: int) -> float:
        """Anchor i's distance from the source, i in 1..r."""
        if not 1 <= i <= self.r:
            raise AnalysisError(f"anchor index {i} outside 1..{self.r}")
        return (i - 0.5) * self.d_v

    def cell(self, i: int) -> tuple[float, float]:
        if not 1 <= i <= self.r:
            raise AnalysisError(f"cell index {i} outside 1..{self.r}")
        return ((i - 1) * self.d_v, i * self.d_v)


@dataclass(frozen=True)
class TradeoffPoint:
    w: int
    e_a: float   # expected proximity detection accuracy
    e_c: float   # expected charging period (normalized in figure curves)


FIGURE_RADIO = RadioParams(sigma_db=7.0, n=3.0, d0_m=1.0, clamp_below_d0=False)
QUADRATURE_POINTS = 65  # composite Simpson, 64 intervals per cell


def k_correct(i: int, d: float, deployment: LineDeployment, params: RadioParams) -> float:
    """P[anchor i's signal beats every other anchor] at mobile position d."""
    if not 0 <= d <= deployment.span:
        raise AnalysisError(f"position {d} outside [0, {deployment.span}]")
    out = 1.0
    d_i = deployment.position(i)
    for j in range(1, deployment.r + 1):
        if j != i:
            out *= prob_stronger(d_i, deployment.position(j), d, params)
    return out


def _cell_mean(fn, cell: tuple[float, float], npts: int = QUADRATURE_POINTS) -> float:
    a, b = cell
    grid = np.linspace(a, b, npts)
    vals = np.array([fn(x) for x in grid])
    return float(simpson(vals, x=grid)) / (b - a)


def _win_product(w: int, members: range, d: float, deployment: LineDeployment,
                 params: RadioParams) -> float:
    out = 1.0
    d_w = deployment.position(w)
    for j in members:
        if j != w:
            out *= prob_stronger(d_w, deployment.position(j), d, params)
    return out


def cell_correct_prob(
    i: int, deployment: LineDeployment, params: RadioParams, npts: int = QUADRATURE_POINTS
) -> float:
    """Cell-averaged correct-detection probability with all anchors awake."""
    return _cell_mean(lambda d: k_correct(i, d, deployment, params), deployment.cell(i), npts)


def border_win_prob(
    w: int, i: int, deployment: LineDeployment, params: RadioParams,
    npts: int = QUADRATURE_POINTS,
) -> float:
    """Cell-averaged P[first wave resolves to the border] for the node in cell i."""
    return _cell_mean(
        lambda d: _win_product(w, range(1, w), d, deployment, params),
        deployment.cell(i),
        npts,
    )


def expected_pda_wake_all(
    deployment: LineDeployment, params: RadioParams, npts: int = QUADRATURE_POINTS
) -> float:
    """Expected detection accuracy when every anchor beacons at once."""
    total = sum(
        cell_correct_prob(i, deployment, params, npts) for i in range(1, deployment.r + 1)
    )
    return deployment.omega * total


def expected_two_wave(
    deployment: LineDeployment,
    params: RadioParams,
    w: int,
    charge_times,
    npts: int = QUADRATURE_POINTS,
) -> TradeoffPoint:
    """Expected accuracy and charging period with border anchor w.

    charge_times maps anchor index (1..r) to its charging period. One-wave
    rounds cost the border's charging period; rounds that trigger the second
    wave cost the farthest anchor's (both waves charge in parallel).
    """
    r = deployment.r
    if not 1 <= w <= r:
        raise AnalysisError(f"border {w} outside 1..{r}")
    c = charge_times if callable(charge_times) else (lambda i, seq=charge_times: seq[i - 1])
    H = [cell_correct_prob(i, deployment, params, npts) for i in range(1, r + 1)]
    if w == r:
        return TradeoffPoint(w=w, e_a=deployment.omega * sum(H), e_c=c(r))
    B = [border_win_prob(w, i, deployment, params, npts) for i in range(1, r + 1)]
    e_a = deployment.omega * (
        sum(H[i - 1] for i in range(1, w))
        + sum(B[i - 1] * H[i - 1] for i in range(w, r + 1))
    )
    e_c = deployment.omega * (
        c(w) * sum(1.0 - b for b in B) + c(r) * sum(B)
    )
    return TradeoffPoint(w=w, e_a=e_a, e_c=e_c)


def default_charge_times(
    deployment: LineDeployment,
    model: HarvestModel | None = None,
    profile: PowerProfile | None = None,
) -> list[float]:
    """Per-anchor charging periods for one reply round (rx + tx + adc)."""
    profile = profile or PowerProfile()
    if model is None:
        model = HarvestModel(domain=(0.3, max(5.0, deployment.span + deployment.d_v)))
    else:
        lo, hi = model.domain
        model = replace(model, domain=(lo, max(hi, deployment.span + deployment.d_v)))
    e_round = (
        profile.p_rx * profile.t_rx + profile.p_tx * profile.t_tx
        + profile.p_adc * profile.t_adc
    )
    return [
        charging_period(e_round, harvested_power(deployment.position(i), model))
        for i in range(1, deployment.r + 1)
    ]


def figure9_curves(
    r: int,
    params: RadioParams = FIGURE_RADIO,
    charge_times=None,
    d_v: float = 1.0,
    npts: int = QUADRATURE_POINTS,
) -> list[TradeoffPoint]:
    """Sweep the border anchor 1..r; charging periods normalized to the max."""
    if r < 2:
        raise AnalysisError("need at least two anchors to sweep a border")
    deployment = LineDeployment(r=r, d_v=d_v)
    if charge_times is None:
        charge_times = default_charge_times(deployment)
    points = [
        expected_two_wave(deployment, params, w, charge_times, npts)
        for w in range(1, r + 1)
    ]
    c_max = max(p.e_c for p in points)
    return [TradeoffPoint(p.w, p.e_a, p.e_c / c_max) for p in points]


def tradeoff_csv(points: list[TradeoffPoint]) -> str:
    lines = ["w,e_a,e_c_normalized"]
    for p in points:
        lines.append(f"{p.w},{p.e_a:.12g},{p.e_c:.12g}")
    return "\n".join(lines) + "\n"


def _is_finite_prob(x: float) -> bool:
    return math.isfinite(x) and 0.0 <= x <= 1.0 + 1e-12
