"""Scenario runner and the canned experiment reproductions."""

from __future__ import annotations

from dataclasses import dataclass

from ..energy import HarvestModel, charging_period, harvested_power
from ..radio import RadioParams
from .engine import Simulation
from .metrics import BeaconRoundResult, Metrics, compute_metrics
from .scenario import ScenarioConfig


@dataclass(frozen=True)
class ScenarioRun:
    metrics: Metrics
    results: list[BeaconRoundResult]
    trace: list[tuple] | None
    energy: dict[str, dict[str, float]]


def run_scenario(config: ScenarioConfig) -> ScenarioRun:
    """Execute one scenario; identical (config, seed) gives identical output."""
    sim = Simulation(config)
    results = sim.run()
    per_eha = {}
    e_round = (
        config.profile.p_rx * config.profile.t_rx
        + config.profile.p_tx * config.profile.t_tx
        + config.profile.p_adc * config.profile.t_adc
    )
    for eha_id, pos in sorted(config.eha_positions.items()):
        d = min(
            ((pos[0] - ex) ** 2 + (pos[1] - ey) ** 2) ** 0.5
            for ex, ey in config.esa_positions
        )
        lo, hi = config.harvest.domain
        p = harvested_power(min(max(d, lo), hi), config.harvest)
        per_eha[eha_id] = charging_period(e_round, p)
    metrics = compute_metrics(results, per_eha)
    return ScenarioRun(metrics=metrics, results=results, trace=sim.trace,
                       energy=sim.energy_report())


# ---------------------------------------------------------------------------
# dead-zone sweep: two anchors two meters apart, receiver walked between them

def dead_zone_scenario(
    position_index: int,
    use_spreading: bool,
    seed: int,
    rounds: int = 30,
) -> ScenarioConfig:
    """One measuring point of the 20-point collision sweep."""
    if not 0 <= position_index < 20:
        raise ValueError("position index must be in 0..19")
    x = 0.05 + 0.1 * position_index
    return ScenarioConfig(
        mode="wake-all",
        rounds=rounds,
        seed=seed,
        t_m=1.0,
        use_spreading=use_spreading,
        radio=RadioParams(
            p_t_dbm=0.0, l_d0_db=40.0, d0_m=0.1, n=3.0, sigma_db=3.0,
            capture_threshold_db=6.0,
        ),
        esa_positions=[(1.0, 1.0)],
        eha_positions={1: (0.0, 0.0), 2: (2.0, 0.0)},
        mono_position=(x, 0.0),
        eha_powered=True,
        mono_powered=True,
    )


def dead_zone_sweep(
    seeds: tuple[int, ...] = tuple(range(1, 11)),
    rounds: int = 30,
) -> dict[bool, list[float]]:
    """Per-position reception rate, with and without spreading codes."""
    out: dict[bool, list[float]] = {}
    for use_spreading in (False, True):
        rates = []
        for idx in range(20):
            total = 0.0
            for seed in seeds:
                cfg = dead_zone_scenario(idx, use_spreading, seed, rounds)
                run = run_scenario(cfg)
                total += run.metrics.prr
            rates.append(total / len(seeds))
        out[use_spreading] = rates
    return out


# ---------------------------------------------------------------------------
# corridor: one source anchor, four harvesting anchors in a line

CORRIDOR_EHAS = {1: (0.5, 0.0), 2: (1.5, 0.0), 3: (2.5, 0.0), 4: (3.5, 0.0)}

# single log-log segment (the 36x decay over 1 -> 3.5 m); the default
# three-anchor fit has a near-vertical drop past 3 m that would dominate
# every charging-period comparison between borders
CORRIDOR_HARVEST = HarvestModel(anchor_points=((1.0, 3.2e-3), (3.5, 3.2e-3 / 36.0)))


def corridor_scenario(
    mode: str,
    border: int | None = None,
    seed: int = 1,
    rounds_per_position: int = 20,
    mono_positions: tuple[float, ...] = tuple(i * 0.5 for i in range(9)),
) -> list[ScenarioConfig]:
    """One config per measuring position along the corridor."""
    configs = []
    for x in mono_positions:
        configs.append(ScenarioConfig(
            mode=mode,
            border=border,
            rounds=rounds_per_position,
            seed=seed,
            t_m=1.0,
            radio=RadioParams(
                p_t_dbm=0.0, l_d0_db=40.0, d0_m=0.1, n=3.0, sigma_db=7.0,
                capture_threshold_db=6.0,
            ),
            harvest=CORRIDOR_HARVEST,
            esa_positions=[(0.0, 0.0)],
            eha_positions=dict(CORRIDOR_EHAS),
            mono_position=(x, 0.0),
            eha_powered=True,
            mono_powered=True,
        ))
    return configs


def corridor_summary(mode: str, border: int | None, seeds: tuple[int, ...]) -> Metrics:
    """Pooled metrics over positions and seeds for one corridor variant."""
    results: list[BeaconRoundResult] = []
    for seed in seeds:
        for cfg in corridor_scenario(mode, border, seed):
            results.extend(run_scenario(cfg).results)
    reindexed = [
        BeaconRoundResult(
            round_index=i, requested=r.requested, success=r.success,
            decoded_ids=r.decoded_ids, selected_id=r.selected_id,
            true_cell=r.true_cell, error_m=r.error_m, waves_used=r.waves_used,
            cp_s=r.cp_s, mono_x=r.mono_x, mono_y=r.mono_y,
        )
        for i, r in enumerate(results)
    ]
    return compute_metrics(reindexed)


# ---------------------------------------------------------------------------
# line deployment with a uniformly placed mobile node, for analysis cross-checks

def line_scenario(
    r: int,
    border: int | None,
    seed: int = 1,
    rounds: int = 10_000,
    d_v: float = 1.0,
) -> ScenarioConfig:
    """r anchors at (i - 1/2) d_v; mobile node uniform over [0, r d_v] per round.

    Radio matches the tradeoff analysis: sigma 7, exponent 3, far-field form
    (no reference-distance clamp).
    """
    mode = "wake-all" if border is None or border == r else "two-wave"
    return ScenarioConfig(
        mode=mode,
        border=border if mode == "two-wave" else None,
        rounds=rounds,
        seed=seed,
        t_m=0.12,  # short request period: keeps idle polling off the hot path
        radio=RadioParams(
            p_t_dbm=0.0, l_d0_db=40.0, d0_m=1.0, n=3.0, sigma_db=7.0,
            capture_threshold_db=6.0, clamp_below_d0=False,
        ),
        esa_positions=[(0.0, 0.0)],
        eha_positions={i: ((i - 0.5) * d_v, 0.0) for i in range(1, r + 1)},
        mono_position=None,
        mono_placement="uniform-line",
        mono_line=(0.0, r * d_v),
        eha_powered=True,
        mono_powered=True,
    )


def simulated_pda(r: int, border: int | None, seed: int = 1, rounds: int = 10_000) -> float:
    """Correct detections over successes for one border choice."""
    run = run_scenario(line_scenario(r, border, seed, rounds))
    m = run.metrics
    if m.pda is None:
        raise RuntimeError("no successful rounds in cross-validation run")
    return m.pda


# ---------------------------------------------------------------------------
# best-effort charging period against distance

CHARGING_HARVEST_SCALE = 3.6  # calibration for unmodeled converter losses


def charging_scenario(distance: float, seed: int = 1, rounds: int = 400) -> ScenarioConfig:
    """Single anchor at `distance`; the mobile node requests continuously.

    The anchor's supply collapses after each served round (burst-converter
    behaviour), so successive successes are separated by a full recharge of
    the hysteresis swing: the measured success interval is the best-effort
    beacon period at that distance.
    """
    return ScenarioConfig(
        mode="wake-all",
        rounds=rounds,
        seed=seed,
        t_m=0.25,
        radio=RadioParams(p_t_dbm=0.0, l_d0_db=40.0, d0_m=0.1, n=3.0, sigma_db=0.0),
        harvest=HarvestModel(scale=CHARGING_HARVEST_SCALE),
        esa_positions=[(0.0, 0.0)],
        eha_positions={1: (distance, 0.0)},
        mono_position=(distance / 2.0, 0.0),
        eha_powered=False,
        eha_v_start=1.02,          # start discharged: first success needs a full charge
        mono_powered=True,
        eha_post_round_collapse=True,
    )


def best_effort_period(
    distance: float, seed: int = 1, min_successes: int = 6, max_rounds: int = 4000
) -> float:
    """Mean interval between successful rounds at one anchor distance."""
    cfg = charging_scenario(distance, seed, rounds=max_rounds)
    results = Simulation(cfg).run()
    times = [r.round_index * cfg.t_m for r in results if r.success]
    if len(times) < min_successes + 1:
        raise RuntimeError(
            f"only {len(times)} successes at {distance} m; increase max_rounds"
        )
    times = times[: min_successes + 1]
    gaps = [b - a for a, b in zip(times, times[1:])]
    return sum(gaps) / len(gaps)


def charging_period_sweep(
    distances: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5),
    seed: int = 1,
) -> dict[float, float]:
    return {d: best_effort_period(d, seed) for d in distances}
