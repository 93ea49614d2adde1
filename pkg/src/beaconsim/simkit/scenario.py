"""Scenario configuration: dataclass, INI-style file format, validation.

A scenario file has sectioned key=value entries::

    [scenario]
    mode = two-wave          ; wake-all | range | two-wave
    border = 2               ; two-wave only
    rounds = 100
    seed = 42
    t_m = 1.0                ; beacon request period, s
    t_c = auto               ; ADC poll period, s, or "auto" for the optimum
    t_off = 0.05             ; wakeup pulse duration, s
    use_spreading = true
    trace = false

    [radio]
    p_t_dbm = 0
    l_d0_db = 40
    d0_m = 1.0
    n = 3.0
    sigma_db = 7.0
    capture_db = 6.0
    clamp_below_d0 = true

    [energy]
    anchors = 1.0:3.2e-3 3.0:0.79e-3 3.5:8.888889e-5   ; distance:power pairs
    harvest_scale = 1.0
    capacitance = 0.05
    v_thr_on = 1.25
    v_thr_off = 1.02
    v_max = 3.0
    eha_powered = false
    mono_powered = true
    eha_v_start = 1.25
    post_round_collapse = false
    sensor_noise_w = 0.0

    [profile]
    p_tx = 35.88e-3
    t_tx = 0.80e-3
    ...

    [nodes]
    esa = 0 0
    eha.1 = 0.5 0
    eha.2 = 1.5 0
    mono = 2.0 0             ; or: mono = uniform 0 4

Unknown keys are validation errors; all violations are reported together.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field

from ..energy import DEFAULT_ANCHORS, HarvestModel, PowerProfile
from ..protocol import optimal_tc
from ..radio import RadioParams


class ScenarioError(ValueError):
    """One or more configuration violations; message lists all of them."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("invalid scenario:\n  - " + "\n  - ".join(violations))


@dataclass
class ScenarioConfig:
    mode: str = "wake-all"
    border: int | None = None
    rho: float | None = None
    rounds: int = 100
    seed: int = 1
    t_m: float = 1.0
    t_c: float | None = None       # None -> optimal for the profile
    t_off: float = 0.05
    use_spreading: bool = True
    trace: bool = False
    fec_word_length: int = 8
    chip_length: int = 16

    radio: RadioParams = field(default_factory=RadioParams)
    harvest: HarvestModel = field(default_factory=HarvestModel)
    profile: PowerProfile = field(default_factory=PowerProfile)

    esa_positions: list[tuple[float, float]] = field(default_factory=lambda: [(0.0, 0.0)])
    eha_positions: dict[int, tuple[float, float]] = field(default_factory=dict)
    mono_position: tuple[float, float] | None = (1.0, 0.0)
    mono_placement: str = "fixed"  # fixed | uniform-line
    mono_line: tuple[float, float] = (0.0, 1.0)

    mono_powered: bool = True
    eha_powered: bool = False
    eha_v_start: float = 1.25
    capacitance: float = 50e-3
    v_thr_on: float = 1.25
    v_thr_off: float = 1.02
    v_max: float = 3.0
    eha_post_round_collapse: bool = False
    sensor_noise_w: float = 0.0

    def __post_init__(self):
        if self.t_c is None:
            self.t_c = optimal_tc(
                self.t_m, self.profile.t_adc, self.profile.p_adc, self.profile.p_rx
            )

    def replace(self, **kwargs) -> "ScenarioConfig":
        return dataclasses.replace(self, **kwargs)


def validate_config(config: ScenarioConfig):
    """Raise ScenarioError listing every violation at once."""
    problems: list[str] = []
    if config.mode not in ("wake-all", "range", "two-wave"):
        problems.append(f"mode must be wake-all, range or two-wave, got {config.mode!r}")
    if not config.eha_positions:
        problems.append("at least one harvesting anchor is required")
    if len(config.esa_positions) < 1:
        problems.append("at least one source anchor is required")
    if config.rounds < 1:
        problems.append(f"rounds must be >= 1, got {config.rounds}")
    if config.mode == "two-wave" and config.border not in config.eha_positions:
        problems.append(f"two-wave border {config.border} is not a known anchor id")
    if any(i < 0 or i > 239 for i in config.eha_positions):
        problems.append("anchor ids must fit the sleep bitmask (0..239)")
    if len(set(config.eha_positions)) != len(config.eha_positions):
        problems.append("anchor ids must be unique")
    if config.mono_placement not in ("fixed", "uniform-line"):
        problems.append(f"unknown mono placement {config.mono_placement!r}")
    if config.mono_placement == "fixed" and config.mono_position is None:
        problems.append("fixed mono placement needs a position")
    if config.t_c is not None and config.t_c <= 0:
        problems.append(f"t_c must be positive, got {config.t_c}")
    if config.t_c is not None and config.t_c >= config.t_m:
        problems.append(f"t_c ({config.t_c}) must be below t_m ({config.t_m})")
    if config.t_off <= 0:
        problems.append(f"t_off must be positive, got {config.t_off}")
    if config.t_c is not None and config.t_off < config.t_c:
        problems.append(
            f"t_off ({config.t_off}) must cover one poll period t_c ({config.t_c}) "
            "or anchors may miss the wakeup pulse"
        )
    if config.fec_word_length * config.chip_length > 240:
        problems.append("fec_word_length x chip_length must fit 240 payload bits")
    if len(config.eha_positions) > config.chip_length - 1:
        problems.append(
            f"{len(config.eha_positions)} anchors exceed the {config.chip_length}-chip "
            "codebook capacity"
        )
    if not 0 < config.v_thr_off < config.v_thr_on <= config.v_max:
        problems.append("need 0 < v_thr_off < v_thr_on <= v_max")
    if problems:
        raise ScenarioError(problems)


_SCENARIO_KEYS = {
    "mode", "border", "rho", "rho_dbm", "rounds", "seed", "t_m", "t_c", "t_off",
    "use_spreading", "trace", "fec_word_length", "chip_length",
}
_RADIO_KEYS = {
    "p_t_dbm", "l_d0_db", "d0_m", "n", "sigma_db", "capture_db", "preamble_s",
    "sensitivity_dbm", "clamp_below_d0",
}
_ENERGY_KEYS = {
    "anchors", "harvest_scale", "harvest_domain", "capacitance", "v_thr_on", "v_thr_off",
    "v_max", "eha_powered", "mono_powered", "eha_v_start", "post_round_collapse",
    "sensor_noise_w",
}
_PROFILE_KEYS = {"p_tx", "t_tx", "p_rx", "t_rx", "p_adc", "t_adc", "p_sleep"}


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def parse_scenario(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_file(io.StringIO(text))
    except configparser.Error as exc:
        raise ScenarioError([f"unparseable file: {exc}"]) from exc

    problems: list[str] = []
    kwargs: dict = {}

    def grab(section, key, conv, problems=problems):
        raw = parser.get(section, key, fallback=None)
        if raw is None:
            return None
        try:
            return conv(raw)
        except Exception as exc:
            problems.append(f"[{section}] {key}: {exc}")
            return None

    for section in parser.sections():
        known = {
            "scenario": _SCENARIO_KEYS, "radio": _RADIO_KEYS,
            "energy": _ENERGY_KEYS, "profile": _PROFILE_KEYS, "nodes": None,
        }.get(section)
        if known is None and section != "nodes":
            problems.append(f"unknown section [{section}]")
            continue
        if known is not None:
            for key in parser[section]:
                if key not in known:
                    problems.append(f"unknown key {key!r} in [{section}]")

    if parser.has_section("scenario"):
        for key, conv in (
            ("mode", str), ("border", int), ("rounds", int), ("seed", int),
            ("t_m", float), ("t_off", float), ("fec_word_length", int),
            ("chip_length", int),
        ):
            value = grab("scenario", key, conv)
            if value is not None:
                kwargs[key] = value
        raw_tc = parser.get("scenario", "t_c", fallback=None)
        if raw_tc is not None and raw_tc.strip().lower() != "auto":
            kwargs["t_c"] = grab("scenario", "t_c", float)
        for key in ("use_spreading", "trace"):
            if parser.has_option("scenario", key):
                kwargs[key] = parser.getboolean("scenario", key)
        if parser.has_option("scenario", "rho"):
            kwargs["rho"] = grab("scenario", "rho", float)
        elif parser.has_option("scenario", "rho_dbm"):
            dbm = grab("scenario", "rho_dbm", float)
            if dbm is not None:
                kwargs["rho"] = 10.0 ** (dbm / 10.0) / 1000.0

    radio_kwargs = {}
    if parser.has_section("radio"):
        for key, attr, conv in (
            ("p_t_dbm", "p_t_dbm", float), ("l_d0_db", "l_d0_db", float),
            ("d0_m", "d0_m", float), ("n", "n", float), ("sigma_db", "sigma_db", float),
            ("capture_db", "capture_threshold_db", float),
            ("preamble_s", "preamble_window_s", float),
            ("sensitivity_dbm", "sensitivity_dbm", float),
        ):
            value = grab("radio", key, conv)
            if value is not None:
                radio_kwargs[attr] = value
        if parser.has_option("radio", "clamp_below_d0"):
            radio_kwargs["clamp_below_d0"] = parser.getboolean("radio", "clamp_below_d0")
    if radio_kwargs:
        try:
            kwargs["radio"] = RadioParams(**radio_kwargs)
        except ValueError as exc:
            problems.append(f"[radio] {exc}")

    harvest_kwargs = {}
    if parser.has_section("energy"):
        anchors = grab("energy", "anchors", _parse_anchors)
        if anchors:
            harvest_kwargs["anchor_points"] = anchors
        scale = grab("energy", "harvest_scale", float)
        if scale is not None:
            harvest_kwargs["scale"] = scale
        domain = grab("energy", "harvest_domain", _parse_pair)
        if domain is not None:
            harvest_kwargs["domain"] = domain
        if harvest_kwargs:
            try:
                kwargs["harvest"] = HarvestModel(**harvest_kwargs)
            except ValueError as exc:
                problems.append(f"[energy] {exc}")
        for key, attr in (
            ("capacitance", "capacitance"), ("v_thr_on", "v_thr_on"),
            ("v_thr_off", "v_thr_off"), ("v_max", "v_max"),
            ("eha_v_start", "eha_v_start"), ("sensor_noise_w", "sensor_noise_w"),
        ):
            value = grab("energy", key, float)
            if value is not None:
                kwargs[attr] = value
        for key, attr in (
            ("eha_powered", "eha_powered"), ("mono_powered", "mono_powered"),
            ("post_round_collapse", "eha_post_round_collapse"),
        ):
            if parser.has_option("energy", key):
                kwargs[attr] = parser.getboolean("energy", key)

    if parser.has_section("profile"):
        profile_kwargs = {}
        for key in _PROFILE_KEYS:
            value = grab("profile", key, float)
            if value is not None:
                profile_kwargs[key] = value
        if profile_kwargs:
            try:
                kwargs["profile"] = PowerProfile(**profile_kwargs)
            except ValueError as exc:
                problems.append(f"[profile] {exc}")

    esas: list[tuple[float, float]] = []
    ehas: dict[int, tuple[float, float]] = {}
    if parser.has_section("nodes"):
        for key, raw in parser["nodes"].items():
            if key == "esa" or key.startswith("esa."):
                pos = _try(problems, f"[nodes] {key}", _parse_pair, raw)
                if pos is not None:
                    esas.append(pos)
            elif key.startswith("eha."):
                try:
                    eha_id = int(key.split(".", 1)[1])
                except ValueError:
                    problems.append(f"[nodes] bad anchor key {key!r}")
                    continue
                pos = _try(problems, f"[nodes] {key}", _parse_pair, raw)
                if pos is not None:
                    ehas[eha_id] = pos
            elif key == "mono":
                parts = raw.split()
                if parts and parts[0] == "uniform":
                    line = _try(problems, "[nodes] mono", _parse_pair, " ".join(parts[1:]))
                    if line is not None:
                        kwargs["mono_placement"] = "uniform-line"
                        kwargs["mono_line"] = line
                        kwargs["mono_position"] = None
                else:
                    pos = _try(problems, "[nodes] mono", _parse_pair, raw)
                    if pos is not None:
                        kwargs["mono_position"] = pos
            else:
                problems.append(f"unknown key {key!r} in [nodes]")
    if esas:
        kwargs["esa_positions"] = esas
    if ehas:
        kwargs["eha_positions"] = ehas

    if problems:
        raise ScenarioError(problems)
    config = ScenarioConfig(**kwargs)
    validate_config(config)
    return config


def _parse_pair(raw: str) -> tuple[float, float]:
    parts = raw.split()
    if len(parts) != 2:
        raise ValueError(f"expected two numbers, got {raw!r}")
    return float(parts[0]), float(parts[1])


def _parse_anchors(raw: str) -> tuple[tuple[float, float], ...]:
    points = []
    for token in raw.split():
        d, _, p = token.partition(":")
        points.append((float(d), float(p)))
    if len(points) < 2:
        raise ValueError("need at least two distance:power anchors")
    return tuple(points)


def _try(problems: list[str], label: str, conv, raw: str):
    try:
        return conv(raw)
    except Exception as exc:
        problems.append(f"{label}: {exc}")
        return None


def scenario_to_text(config: ScenarioConfig) -> str:
    """Serialize a config back to the file format (for generated scenarios)."""
    lines = ["[scenario]"]
    lines.append(f"mode = {config.mode}")
    if config.border is not None:
        lines.append(f"border = {config.border}")
    if config.rho is not None:
        lines.append(f"rho = {config.rho!r}")
    lines.append(f"rounds = {config.rounds}")
    lines.append(f"seed = {config.seed}")
    lines.append(f"t_m = {config.t_m!r}")
    lines.append(f"t_c = {config.t_c!r}")
    lines.append(f"t_off = {config.t_off!r}")
    lines.append(f"use_spreading = {str(config.use_spreading).lower()}")
    lines.append(f"trace = {str(config.trace).lower()}")
    lines.append(f"fec_word_length = {config.fec_word_length}")
    lines.append(f"chip_length = {config.chip_length}")
    r = config.radio
    lines += [
        "", "[radio]",
        f"p_t_dbm = {r.p_t_dbm!r}", f"l_d0_db = {r.l_d0_db!r}", f"d0_m = {r.d0_m!r}",
        f"n = {r.n!r}", f"sigma_db = {r.sigma_db!r}",
        f"capture_db = {r.capture_threshold_db!r}",
        f"preamble_s = {r.preamble_window_s!r}",
        f"clamp_below_d0 = {str(r.clamp_below_d0).lower()}",
    ]
    if r.sensitivity_dbm is not None:
        lines.append(f"sensitivity_dbm = {r.sensitivity_dbm!r}")
    h = config.harvest
    anchor_text = " ".join(f"{d!r}:{p!r}" for d, p in h.anchor_points)
    lines += [
        "", "[energy]",
        f"anchors = {anchor_text}",
        f"harvest_scale = {h.scale!r}",
        f"harvest_domain = {h.domain[0]!r} {h.domain[1]!r}",
        f"capacitance = {config.capacitance!r}",
        f"v_thr_on = {config.v_thr_on!r}", f"v_thr_off = {config.v_thr_off!r}",
        f"v_max = {config.v_max!r}",
        f"eha_powered = {str(config.eha_powered).lower()}",
        f"mono_powered = {str(config.mono_powered).lower()}",
        f"eha_v_start = {config.eha_v_start!r}",
        f"post_round_collapse = {str(config.eha_post_round_collapse).lower()}",
        f"sensor_noise_w = {config.sensor_noise_w!r}",
    ]
    p = config.profile
    lines += [
        "", "[profile]",
        f"p_tx = {p.p_tx!r}", f"t_tx = {p.t_tx!r}", f"p_rx = {p.p_rx!r}",
        f"t_rx = {p.t_rx!r}", f"p_adc = {p.p_adc!r}", f"t_adc = {p.t_adc!r}",
        f"p_sleep = {p.p_sleep!r}",
    ]
    lines += ["", "[nodes]"]
    for idx, (x, y) in enumerate(config.esa_positions):
        key = "esa" if idx == 0 else f"esa.{idx}"
        lines.append(f"{key} = {x!r} {y!r}")
    for eha_id in sorted(config.eha_positions):
        x, y = config.eha_positions[eha_id]
        lines.append(f"eha.{eha_id} = {x!r} {y!r}")
    if config.mono_placement == "uniform-line":
        lines.append(f"mono = uniform {config.mono_line[0]!r} {config.mono_line[1]!r}")
    else:
        x, y = config.mono_position
        lines.append(f"mono = {x!r} {y!r}")
    return "\n".join(lines) + "\n"
