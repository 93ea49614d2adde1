"""Round results and the PRR / PDA / LE summary metrics."""

from __future__ import annotations

from dataclasses import dataclass, field


class MetricsError(ValueError):
    """Empty or inconsistent result sets."""


@dataclass(frozen=True)
class BeaconRoundResult:
    round_index: int
    requested: bool
    success: bool
    decoded_ids: tuple[int, ...]
    selected_id: int | None
    true_cell: int
    error_m: float
    waves_used: int
    cp_s: float
    mono_x: float = 0.0
    mono_y: float = 0.0

    def __post_init__(self):
        if self.success and not self.decoded_ids:
            raise MetricsError("successful round must decode at least one id")

    @property
    def correct(self) -> bool:
        return self.success and self.selected_id == self.true_cell


@dataclass(frozen=True)
class Metrics:
    rounds: int
    requests: int
    successes: int
    correct: int
    prr: float
    pda: float | None            # None when there were no successes
    le_m: float
    mean_cp_s: float
    waves_histogram: dict[int, int] = field(default_factory=dict)
    per_cell_pda: dict[int, float | None] = field(default_factory=dict)
    per_eha_cp_s: dict[int, float] = field(default_factory=dict)


def compute_metrics(
    results: list[BeaconRoundResult],
    per_eha_cp_s: dict[int, float] | None = None,
) -> Metrics:
    """Aggregate per-round results.

    PRR counts successes over issued requests; PDA counts correct detections
    over successes only (undefined with zero successes, never reported as 0);
    LE averages the recorded error distances over successes, zero when
    correct.
    """
    if not results:
        raise MetricsError("results must not be empty")
    requests = sum(1 for r in results if r.requested)
    successes = [r for r in results if r.success]
    correct = sum(1 for r in successes if r.correct)
    prr = len(successes) / requests if requests else 0.0
    pda = correct / len(successes) if successes else None
    le = sum(r.error_m for r in successes) / len(successes) if successes else 0.0

    waves: dict[int, int] = {}
    for r in results:
        if r.requested:
            waves[r.waves_used] = waves.get(r.waves_used, 0) + 1

    per_cell: dict[int, float | None] = {}
    for cell in sorted({r.true_cell for r in results}):
        cell_succ = [r for r in successes if r.true_cell == cell]
        per_cell[cell] = (
            sum(1 for r in cell_succ if r.correct) / len(cell_succ) if cell_succ else None
        )

    cp_values = [r.cp_s for r in results if r.requested]
    mean_cp = sum(cp_values) / len(cp_values) if cp_values else 0.0

    return Metrics(
        rounds=len(results),
        requests=requests,
        successes=len(successes),
        correct=correct,
        prr=prr,
        pda=pda,
        le_m=le,
        mean_cp_s=mean_cp,
        waves_histogram=waves,
        per_cell_pda=per_cell,
        per_eha_cp_s=dict(per_eha_cp_s or {}),
    )


def metrics_to_csv(metrics: Metrics) -> str:
    """Key,value rows with locale-independent formatting."""
    rows = [
        ("rounds", str(metrics.rounds)),
        ("requests", str(metrics.requests)),
        ("successes", str(metrics.successes)),
        ("correct", str(metrics.correct)),
        ("prr", _fmt(metrics.prr)),
        ("pda", "NA" if metrics.pda is None else _fmt(metrics.pda)),
        ("le_m", _fmt(metrics.le_m)),
        ("mean_cp_s", _fmt(metrics.mean_cp_s)),
    ]
    for waves in sorted(metrics.waves_histogram):
        rows.append((f"waves_{waves}", str(metrics.waves_histogram[waves])))
    for cell in sorted(metrics.per_cell_pda):
        value = metrics.per_cell_pda[cell]
        rows.append((f"cell_pda_{cell}", "NA" if value is None else _fmt(value)))
    for eha in sorted(metrics.per_eha_cp_s):
        rows.append((f"eha_cp_s_{eha}", _fmt(metrics.per_eha_cp_s[eha])))
    return "metric,value\n" + "\n".join(f"{k},{v}" for k, v in rows) + "\n"


def rounds_from_trace(trace_rows) -> list[BeaconRoundResult]:
    """Rebuild round results from trace rows (kind == 'round')."""
    out = []
    for time, node, kind, detail in trace_rows:
        if kind != "round":
            continue
        kv = dict(part.split("=", 1) for part in detail.split())
        decoded = tuple(int(t) for t in kv["decoded"].split("|") if t)
        out.append(BeaconRoundResult(
            round_index=int(kv["idx"]),
            requested=kv["requested"] == "1",
            success=kv["success"] == "1",
            decoded_ids=decoded,
            selected_id=None if kv["selected"] == "None" else int(kv["selected"]),
            true_cell=int(kv["true"]),
            error_m=float(kv["error"]),
            waves_used=int(kv["waves"]),
            cp_s=float(kv["cp"]),
            mono_x=float(kv["x"]),
            mono_y=float(kv["y"]),
        ))
    return out


def _fmt(x: float) -> str:
    return format(x, ".12g")
