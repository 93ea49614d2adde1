"""Single-threaded discrete-event loop driving the node state machines.

Events are processed in (time, priority, insertion order), which makes runs
with equal configuration and seed byte-identical. Each node owns an energy
account integrated lazily between events; threshold crossings are projected
analytically and scheduled as events of their own, so hysteresis transitions
land at exact times. Frames are delivered when their transmission ends: every
listener gets the resolved reception of all transmissions ending at that
instant (plus anything still in flight as interference).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import protocol
from ..codec import build_fec_codebook, build_spreading_codebook, decode_payload_detailed, \
    encode_id, EncodedPayload
from ..energy import (
    Depletion,
    EnergyState,
    HarvestModel,
    PowerProfile,
    charging_period,
    consume,
    harvested_power,
    step_charge,
)
from ..radio import ReceptionKind, ReceptionOutcome, Transmission, resolve_reception, sample_rss
from .metrics import BeaconRoundResult
from .rng import stream

# event priorities: field changes before deliveries before energy before timers
P_FIELD = 0
P_DELIVERY = 1
P_ENERGY = 2
P_TIMER = 3

# "tx_hold" carries no continuous load: transmissions draw their whole energy
# as a quantum when they start, so the abort-on-depletion time is exact.
ACTIVITY_POWER_KEY = {"off": None, "sleep": "sleep", "listen": "rx", "tx_hold": None}


@dataclass(order=True)
class _Queued:
    time: float
    priority: int
    seq: int
    kind: str = field(compare=False)
    payload: object = field(compare=False, default=None)
    target: str | None = field(compare=False, default=None)


class EventQueue:
    """Deterministic time-ordered queue with stable tie-breaking."""

    def __init__(self):
        self._heap: list[_Queued] = []
        self._seq = 0
        self.now = 0.0

    def push(self, time: float, priority: int, kind: str, payload=None, target=None):
        if time < self.now - 1e-12:
            raise RuntimeError(f"event {kind} scheduled in the past: {time} < {self.now}")
        self._seq += 1
        heapq.heappush(self._heap, _Queued(time, priority, self._seq, kind, payload, target))

    def pop(self) -> _Queued:
        item = heapq.heappop(self._heap)
        self.now = max(self.now, item.time)
        return item

    def __bool__(self):
        return bool(self._heap)


class EnergyAccount:
    """Lazy integrator for one node's capacitor between events."""

    def __init__(self, state: EnergyState, powered: bool, time: float = 0.0):
        self.state = state
        self.initial = state
        self.powered = powered
        self.last_time = time
        self.p_in = 0.0
        self.activity = "sleep" if powered else "off"
        self.epoch = 0  # bumps on every flow change; stale projections check it
        self._powered_ledger: dict[str, float] = {}

    @property
    def alive(self) -> bool:
        return self.powered or self.state.v_out_enabled

    def load_power(self, profile: PowerProfile) -> float:
        key = ACTIVITY_POWER_KEY[self.activity]
        return 0.0 if key is None else profile.power(key)

    def advance(self, now: float, profile: PowerProfile):
        dt = now - self.last_time
        if dt < 0:
            raise RuntimeError("energy account moving backwards")
        if dt == 0:
            return
        if self.powered:
            key = ACTIVITY_POWER_KEY[self.activity]
            if key is not None:
                self._powered_ledger[key] = (
                    self._powered_ledger.get(key, 0.0) + profile.power(key) * dt
                )
            self.last_time = now
            return
        key = ACTIVITY_POWER_KEY[self.activity] or "sleep"
        self.state = step_charge(
            self.state, self.p_in, self.load_power(profile), dt, load_class=key
        )
        self.last_time = now

    def quantum(self, op_class: str, duration: float, profile: PowerProfile):
        """Instantaneous draw of one operation's energy (e.g. an ADC poll)."""
        if self.powered:
            self._powered_ledger[op_class] = (
                self._powered_ledger.get(op_class, 0.0) + profile.energy(op_class, duration)
            )
            return None
        result = consume(self.state, op_class, duration, profile)
        if isinstance(result, Depletion):
            self.state = result.state
            return result
        self.state = result
        return None

    def next_transition(self, profile: PowerProfile) -> float | None:
        """Exact time of the next hysteresis flip under current flows."""
        if self.powered:
            return None
        s = self.state
        e = s.stored
        if s.v_out_enabled:
            net = self.p_in - self.load_power(profile)
            if net >= 0:
                return None
            e_off = 0.5 * s.capacitance * s.v_thr_off ** 2
            return self.last_time + max(e - e_off, 0.0) / (-net)
        if self.p_in <= 0:
            return None
        e_on = 0.5 * s.capacitance * s.v_thr_on ** 2
        if e >= e_on:
            return self.last_time
        return self.last_time + (e_on - e) / self.p_in

    def poke_thresholds(self):
        """Apply boundary-exact hysteresis flips after an advance."""
        s = self.state
        if self.powered:
            return False
        e = s.stored
        e_on = 0.5 * s.capacitance * s.v_thr_on ** 2
        e_off = 0.5 * s.capacitance * s.v_thr_off ** 2
        if not s.v_out_enabled and e >= e_on - 1e-18:
            self.state = replace(s, v_out_enabled=True)
            return True
        if s.v_out_enabled and e <= e_off + 1e-18:
            self.state = replace(s, v_out_enabled=False)
            return True
        return False

    def ledger(self) -> dict[str, float]:
        return dict(self._powered_ledger) if self.powered else dict(self.state.ledger)


@dataclass
class _ActiveTx:
    sender: str
    packet: protocol.Packet
    start: float
    end: float
    bits: np.ndarray


class Simulation:
    """Runs one scenario configuration to completion."""

    def __init__(self, config):
        from .scenario import validate_config  # deferred: scenario imports engine types

        validate_config(config)
        self.config = config
        self.queue = EventQueue()
        self.profile: PowerProfile = config.profile
        self.timing = protocol.Timing(
            t_tx=config.profile.t_tx, t_c=config.t_c, t_off=config.t_off, t_m=config.t_m
        )
        self.trace: list[tuple] | None = [] if config.trace else None
        self.results: list[BeaconRoundResult] = []
        self._setup_nodes()
        self._setup_field()

    # -- construction -------------------------------------------------------

    def _setup_nodes(self):
        cfg = self.config
        self.positions: dict[str, tuple[float, float]] = {}
        self.accounts: dict[str, EnergyAccount] = {}
        self.machines: dict[str, object] = {}
        self.listen_until: dict[str, float] = {}
        self.eha_ids = sorted(cfg.eha_positions)

        fec_len = cfg.fec_word_length
        chip_len = cfg.chip_length
        self.fec = build_fec_codebook(len(self.eha_ids), fec_len, ids=self.eha_ids)
        self.spread = build_spreading_codebook(
            len(self.eha_ids), chip_len, ids=self.eha_ids
        )

        for idx, (x, y) in enumerate(cfg.esa_positions):
            self.positions[f"esa{idx}"] = (x, y)
        self.positions["mono"] = cfg.mono_position if cfg.mono_position else (0.0, 0.0)
        for eha_id, pos in cfg.eha_positions.items():
            self.positions[f"eha{eha_id}"] = pos

        # harvested-power table reported by each anchor, from its nearest source
        self.mu: dict[int, float] = {}
        for eha_id in self.eha_ids:
            d = self._nearest_esa_distance(f"eha{eha_id}")
            self.mu[eha_id] = harvested_power(d, cfg.harvest)

        rho = cfg.rho
        if cfg.mode == "range" and rho is None:
            positions = {i: self._nearest_esa_distance(f"eha{i}") for i in self.eha_ids}
            rho = self.mu[protocol.middle_eha(self.mu, positions)]
        self.rho = rho

        for idx in range(len(cfg.esa_positions)):
            name = f"esa{idx}"
            self.machines[name] = protocol.EsaState(
                node_id=idx,
                timing=self.timing,
                mode=cfg.mode if cfg.mode != "wake-all" else "wake-all",
                eha_table=dict(self.mu),
                rho=rho,
                border=cfg.border,
            )
            acct = EnergyAccount(EnergyState(), powered=True)
            acct.activity = "listen"  # controller listens full time
            self.accounts[name] = acct

        for eha_id in self.eha_ids:
            name = f"eha{eha_id}"
            payload = encode_id(eha_id, self.fec, self.spread).to_bytes() \
                if cfg.use_spreading else None
            self.machines[name] = protocol.EhaState(
                node_id=eha_id,
                timing=self.timing,
                encoded_payload=payload,
                reported_mu=self.mu[eha_id],
                # detector average seeded with the reported steady reading, so a
                # first poll that lands inside an off-pulse still detects it
                ema_reading=self.mu[eha_id],
            )
            state = EnergyState(
                v_cap=cfg.eha_v_start if not cfg.eha_powered else 0.0,
                capacitance=cfg.capacitance,
                v_thr_on=cfg.v_thr_on,
                v_thr_off=cfg.v_thr_off,
                v_max=cfg.v_max,
                v_out_enabled=(not cfg.eha_powered) and cfg.eha_v_start >= cfg.v_thr_on,
            )
            acct = EnergyAccount(state, powered=cfg.eha_powered)
            acct.activity = "sleep" if (cfg.eha_powered or state.v_out_enabled) else "off"
            self.accounts[name] = acct
            if acct.activity == "off":
                self.machines[name].mode = "off"

        self.machines["mono"] = protocol.MonoState(
            node_id=0,
            timing=self.timing,
            mode=cfg.mode,
            border=cfg.border,
            use_spreading=cfg.use_spreading,
            decode_fn=self._decode_bits,
        )
        mono_state = EnergyState(
            v_cap=cfg.v_thr_on if not cfg.mono_powered else 0.0,
            capacitance=cfg.capacitance,
            v_thr_on=cfg.v_thr_on,
            v_thr_off=cfg.v_thr_off,
            v_max=cfg.v_max,
            v_out_enabled=not cfg.mono_powered,
        )
        self.accounts["mono"] = EnergyAccount(mono_state, powered=cfg.mono_powered)

        self.active_tx: list[_ActiveTx] = []
        self.shadow_rng = {
            name: stream(self.config.seed, "shadow", name) for name in self.positions
        }
        self.collision_rng = {
            name: stream(self.config.seed, "collision", name) for name in self.positions
        }
        self.sensor_rng = {
            name: stream(self.config.seed, "sensor", name) for name in self.positions
        }
        self.placement_rng = stream(self.config.seed, "placement")
        phase_rng = stream(self.config.seed, "poll-phase")
        self.poll_phase = {
            f"eha{eha_id}": float(phase_rng.uniform(0.0, self.timing.t_c))
            for eha_id in self.eha_ids
        }

    def _setup_field(self):
        self.field_epoch = 0
        self.field_off_until: float = 0.0
        self.transmitter_on = True
        for eha_id in self.eha_ids:
            name = f"eha{eha_id}"
            self._refresh_input_power(name)
            if self.accounts[name].activity != "off":
                self._schedule_poll(name, self.poll_phase[name])
        self._refresh_input_power("mono")
        for name, acct in self.accounts.items():
            if not acct.powered:
                self._project_energy(name)
        self.queue.push(0.0, P_TIMER, "round-timer", target="mono")

    # -- helpers -------------------------------------------------------------

    def _distance(self, a: str, b: str) -> float:
        (x1, y1), (x2, y2) = self.positions[a], self.positions[b]
        return math.hypot(x1 - x2, y1 - y2)

    def _nearest_esa(self, name: str) -> str:
        esas = [n for n in self.positions if n.startswith("esa")]
        return min(esas, key=lambda e: (self._distance(name, e), e))

    def _nearest_esa_distance(self, name: str) -> float:
        return self._distance(name, self._nearest_esa(name))

    def _harvest_at(self, name: str) -> float:
        if not self.transmitter_on:
            return 0.0
        d = self._nearest_esa_distance(name)
        lo, hi = self.config.harvest.domain
        d = min(max(d, lo), hi)
        return harvested_power(d, self.config.harvest)

    def _refresh_input_power(self, name: str):
        acct = self.accounts[name]
        acct.advance(self.queue.now, self.profile)
        acct.p_in = self._harvest_at(name)
        acct.epoch += 1

    def _decode_bits(self, bits: np.ndarray):
        candidates = decode_payload_detailed(
            EncodedPayload(bits.astype(np.uint8)), self.fec, self.spread
        )
        return [(c.node_id, c.score) for c in candidates]

    def _log(self, time: float, node: str, kind: str, detail: str):
        if self.trace is not None:
            self.trace.append((time, node, kind, detail))

    # -- energy plumbing -----------------------------------------------------

    def _project_energy(self, name: str):
        acct = self.accounts[name]
        t = acct.next_transition(self.profile)
        if t is not None and math.isfinite(t):
            self.queue.push(
                max(t, self.queue.now), P_ENERGY, "energy-check",
                payload=acct.epoch, target=name,
            )

    def _touch_energy(self, name: str):
        """Advance, apply boundary flips, emit power events, reproject."""
        acct = self.accounts[name]
        was_alive = acct.alive
        acct.advance(self.queue.now, self.profile)
        acct.poke_thresholds()
        acct.epoch += 1
        if acct.alive != was_alive:
            self._power_transition(name, acct.alive)
        self._project_energy(name)

    def _power_transition(self, name: str, alive: bool):
        now = self.queue.now
        machine = self.machines[name]
        acct = self.accounts[name]
        self._log(now, name, "power", "restored" if alive else "lost")
        if alive:
            acct.activity = "sleep"
            event = protocol.PowerRestored(now)
        else:
            acct.activity = "off"
            self.listen_until.pop(name, None)
            event = protocol.PowerLost(now)
        if name.startswith("eha"):
            _, actions = protocol.eha_handle(event, machine)
            self._run_actions(name, actions)
            if alive:
                self._schedule_poll(name, self._next_poll_time(name))
        elif name == "mono":
            _, actions = protocol.mono_handle(event, machine)
            self._run_actions(name, actions)

    def _set_activity(self, name: str, activity: str):
        acct = self.accounts[name]
        if acct.activity == activity:
            return
        acct.advance(self.queue.now, self.profile)
        acct.activity = activity
        acct.epoch += 1
        self._project_energy(name)

    # -- polling -------------------------------------------------------------

    def _next_poll_time(self, name: str) -> float:
        t_c = self.timing.t_c
        phase = self.poll_phase[name]
        k = math.floor((self.queue.now - phase) / t_c + 1e-9) + 1
        at = phase + k * t_c
        while at <= self.queue.now:
            k += 1
            at = phase + k * t_c
        return at

    def _schedule_poll(self, name: str, at: float):
        self.queue.push(max(at, self.queue.now), P_TIMER, "adc-poll", target=name)

    # -- main loop -----------------------------------------------------------

    def run(self) -> list[BeaconRoundResult]:
        rounds_wanted = self.config.rounds
        guard = 0
        while self.queue and len(self.results) < rounds_wanted:
            guard += 1
            if guard > 20_000_000:
                raise RuntimeError("event budget exceeded; runaway scenario")
            item = self.queue.pop()
            handler = getattr(self, "_on_" + item.kind.replace("-", "_"))
            handler(item)
        return self.results

    # -- event handlers ------------------------------------------------------

    def _on_round_timer(self, item: _Queued):
        now = self.queue.now
        cfg = self.config
        machine = self.machines["mono"]
        if machine.phase != "idle":
            # previous round never concluded: close it out as a failure
            _, actions = protocol.mono_handle(
                protocol.PhaseTimeout("reply-timeout", machine.round_index, now), machine
            )
            if machine.phase != "idle":
                machine.phase = "idle"
                self._record_round(protocol.RoundDone(
                    machine.round_index, True, False, frozenset(), None,
                    machine.waves_used, now,
                ))
            else:
                self._run_actions("mono", actions)
        if cfg.mono_placement == "uniform-line":
            lo, hi = cfg.mono_line
            x = float(self.placement_rng.uniform(lo, hi))
            self.positions["mono"] = (x, 0.0)
            self._refresh_input_power("mono")
        acct = self.accounts["mono"]
        acct.advance(now, self.profile)
        energy_ok = acct.alive
        reading = 0.0
        if energy_ok:
            reading = self._adc_reading("mono")
            q = acct.quantum("adc", self.profile.t_adc, self.profile)
            if q is not None:
                energy_ok = False
        _, actions = protocol.mono_handle(
            protocol.RoundTimer(now, reading, energy_ok), machine
        )
        self._run_actions("mono", actions)
        if machine.round_index + 1 < cfg.rounds:
            self.queue.push(now + self.timing.t_m, P_TIMER, "round-timer", target="mono")

    def _adc_reading(self, name: str) -> float:
        p_in = self.accounts[name].p_in
        sigma = self.config.sensor_noise_w
        if sigma > 0:
            return p_in + sigma * float(self.sensor_rng[name].standard_normal())
        return p_in

    def _on_adc_poll(self, item: _Queued):
        name = item.target
        acct = self.accounts[name]
        machine = self.machines[name]
        if acct.activity != "sleep" or machine.mode != "sleep":
            # listening, transmitting, or dark: polls resume once back asleep
            return
        acct.advance(self.queue.now, self.profile)
        reading = self._adc_reading(name)
        result = acct.quantum("adc", self.profile.t_adc, self.profile)
        self._log(self.queue.now, name, "adc", f"{reading:.9g}")
        if result is not None:
            self._touch_energy(name)
            return
        _, actions = protocol.eha_handle(
            protocol.AdcPoll(reading, self.field_epoch, self.queue.now), machine
        )
        self._run_actions(name, actions)
        if machine.mode == "sleep":
            self._schedule_poll(name, self._next_poll_time(name))
        self._touch_energy(name)

    def _on_energy_check(self, item: _Queued):
        acct = self.accounts[item.target]
        if item.payload != acct.epoch:
            return  # stale projection
        self._touch_energy(item.target)

    def _on_field_off(self, item: _Queued):
        self.transmitter_on = False
        self.field_epoch += 1
        self.field_off_until = max(self.field_off_until, self.queue.now + item.payload)
        self._log(self.queue.now, "world", "field", f"off epoch={self.field_epoch}")
        for name in list(self.accounts):
            self._refresh_input_power(name)
            if not self.accounts[name].powered:
                self._project_energy(name)
        self.queue.push(self.field_off_until, P_FIELD, "field-on")

    def _on_field_on(self, item: _Queued):
        if self.queue.now + 1e-12 < self.field_off_until:
            return  # extended by a later pulse
        if self.transmitter_on:
            return
        self.transmitter_on = True
        self._log(self.queue.now, "world", "field", "on")
        for name in list(self.accounts):
            self._refresh_input_power(name)
            if not self.accounts[name].powered:
                self._project_energy(name)

    def _on_tx_start(self, item: _Queued):
        name = item.target
        packet: protocol.Packet = item.payload
        acct = self.accounts[name]
        acct.advance(self.queue.now, self.profile)
        if not acct.alive:
            self._log(self.queue.now, name, "tx-abort", packet.kind.name)
            return
        q = acct.quantum("tx", self.profile.t_tx, self.profile)
        if q is not None:
            # browned out mid-transmission: frame discarded
            self._log(self.queue.now, name, "tx-abort", packet.kind.name)
            self._touch_energy(name)
            return
        if name.startswith("eha"):
            self._set_activity(name, "tx_hold")
        end = self.queue.now + self.profile.t_tx
        bits = packet.payload_bits()
        self.active_tx.append(
            _ActiveTx(sender=name, packet=packet, start=self.queue.now, end=end, bits=bits)
        )
        self._log(self.queue.now, name, "send", packet.kind.name)
        self.queue.push(end, P_DELIVERY, "tx-end")

    def _on_tx_end(self, item: _Queued):
        now = self.queue.now
        ending = [t for t in self.active_tx if abs(t.end - now) < 1e-12]
        if not ending:
            return
        in_flight = [t for t in self.active_tx if t.end > now + 1e-12]
        self.active_tx = in_flight
        senders = {t.sender for t in ending}
        for name in sorted(self.positions):
            if name in senders:
                continue
            if not self._is_listening(name):
                continue
            self._deliver(name, ending, in_flight)

    def _is_listening(self, name: str) -> bool:
        acct = self.accounts[name]
        if name.startswith("esa"):
            return acct.activity == "listen"
        if not acct.alive:
            return False
        if name == "mono":
            machine = self.machines["mono"]
            return machine.phase in ("await-wakeup-reply", "await-replies") \
                and acct.activity == "listen"
        until = self.listen_until.get(name)
        return acct.activity == "listen" and until is not None

    def _deliver(self, receiver: str, ending: list[_ActiveTx], in_flight: list[_ActiveTx]):
        now = self.queue.now
        rng_shadow = self.shadow_rng[receiver]
        txs = []
        for t in sorted(ending, key=lambda t: t.sender):
            rss = sample_rss(self._distance(t.sender, receiver), self.config.radio, rng_shadow)
            txs.append(Transmission(
                sender=t.packet.sender, payload_bits=t.bits, start_time=t.start, rss_dbm=rss,
            ))
        for t in sorted(in_flight, key=lambda t: t.sender):
            rss = sample_rss(self._distance(t.sender, receiver), self.config.radio, rng_shadow)
            txs.append(Transmission(
                sender=t.packet.sender, payload_bits=t.bits, start_time=t.start, rss_dbm=rss,
            ))
        outcome = resolve_reception(txs, self.config.radio, self.collision_rng[receiver])
        self._log(
            now, receiver, "outcome",
            f"{outcome.kind.value} from={sorted(t.packet.sender for t in ending)}",
        )
        machine = self.machines[receiver]
        if receiver == "mono" and machine.phase == "await-replies":
            if any(t.packet.kind is protocol.PacketKind.BEACON_REPLY for t in ending):
                _, actions = protocol.mono_handle(protocol.ReplyOutcome(outcome, now), machine)
                self._run_actions(receiver, actions)
            return
        if outcome.kind not in (ReceptionKind.CLEAN, ReceptionKind.CAPTURED):
            return  # header or CRC lost in the collision
        packet = next(t.packet for t in ending if t.packet.sender == outcome.winner)
        self._log(now, receiver, "recv", packet.kind.name)
        if receiver.startswith("esa"):
            _, actions = protocol.esa_handle(protocol.PacketArrived(packet, now), machine)
        elif receiver.startswith("eha"):
            _, actions = protocol.eha_handle(protocol.PacketArrived(packet, now), machine)
        else:
            _, actions = protocol.mono_handle(protocol.PacketArrived(packet, now), machine)
        self._run_actions(receiver, actions)

    def _on_listen_timeout(self, item: _Queued):
        name = item.target
        if self.listen_until.get(name) != item.payload:
            return  # superseded listen window
        del self.listen_until[name]
        machine = self.machines[name]
        _, actions = protocol.eha_handle(protocol.ListenTimeout(self.queue.now), machine)
        self._run_actions(name, actions)
        if machine.mode == "sleep":
            self._schedule_poll(name, self._next_poll_time(name))

    def _on_phase_timer(self, item: _Queued):
        tag, round_index = item.payload
        machine = self.machines["mono"]
        _, actions = protocol.mono_handle(
            protocol.PhaseTimeout(tag, round_index, self.queue.now), machine
        )
        self._run_actions("mono", actions)

    def _on_go_sleep(self, item: _Queued):
        name = item.target
        machine = self.machines[name]
        if machine.mode == "transmitting":
            machine.mode = "sleep"
        self.listen_until.pop(name, None)
        self._set_activity(name, "sleep")
        self._schedule_poll(name, self._next_poll_time(name))

    # -- action interpreter ---------------------------------------------------

    def _run_actions(self, name: str, actions: list):
        for action in actions:
            if isinstance(action, protocol.SendPacket):
                self.queue.push(action.at, P_TIMER, "tx-start", payload=action.packet,
                                target=name)
                if name == "mono":
                    self._mono_radio_schedule(action)
                elif name.startswith("eha"):
                    pass  # activity switches at tx-start via quantum draw
            elif isinstance(action, protocol.TransmitterPulse):
                self.queue.push(action.at, P_FIELD, "field-off", payload=action.duration)
            elif isinstance(action, protocol.StartListen):
                self.listen_until[name] = action.until
                self._set_activity(name, "listen")
                self.queue.push(action.until, P_TIMER, "listen-timeout",
                                payload=action.until, target=name)
            elif isinstance(action, protocol.GoSleep):
                self.queue.push(action.at, P_TIMER, "go-sleep", target=name)
            elif isinstance(action, protocol.SetTimer):
                self.queue.push(action.at, P_TIMER, "phase-timer",
                                payload=(action.tag, action.round_index), target=name)
            elif isinstance(action, protocol.RoundDone):
                self._record_round(action)
            else:
                raise RuntimeError(f"unknown action {action!r}")

    def _mono_radio_schedule(self, action: protocol.SendPacket):
        """Mobile node listens between its own transmissions."""
        end = action.at + self.profile.t_tx
        self.queue.push(action.at, P_TIMER, "mono-activity", payload="tx_hold")
        self.queue.push(end, P_TIMER, "mono-activity", payload="listen")

    def _on_mono_activity(self, item: _Queued):
        machine = self.machines["mono"]
        if item.payload == "listen" and machine.phase == "idle":
            self._set_activity("mono", "sleep")
            return
        self._set_activity("mono", item.payload)

    def _record_round(self, done: protocol.RoundDone):
        cfg = self.config
        mono_x, mono_y = self.positions["mono"]
        true_cell = min(
            self.eha_ids,
            key=lambda i: (self._distance("mono", f"eha{i}"), i),
        )
        error = 0.0
        if done.success and done.selected_id != true_cell:
            error = self._distance(f"eha{true_cell}", f"eha{done.selected_id}")
        cp = self._round_charging_period(done)
        result = BeaconRoundResult(
            round_index=done.round_index,
            requested=done.requested,
            success=done.success,
            decoded_ids=tuple(sorted(done.decoded_ids)),
            selected_id=done.selected_id,
            true_cell=true_cell,
            error_m=error,
            waves_used=done.waves_used,
            cp_s=cp,
            mono_x=mono_x,
            mono_y=mono_y,
        )
        self.results.append(result)
        self._log(
            done.now, "mono", "round",
            f"idx={result.round_index} requested={int(result.requested)} "
            f"success={int(result.success)} selected={result.selected_id} "
            f"true={result.true_cell} error={result.error_m:.9g} "
            f"waves={result.waves_used} cp={result.cp_s:.9g} "
            f"decoded={'|'.join(str(i) for i in result.decoded_ids)} "
            f"x={mono_x:.9g} y={mono_y:.9g}",
        )
        machine = self.machines["mono"]
        if machine.phase == "idle":
            self._set_activity("mono", "sleep")
        if self.config.eha_post_round_collapse and done.success:
            self._collapse_ehas(done)

    def _round_charging_period(self, done: protocol.RoundDone) -> float:
        """Model charging period for the set of anchors this round required."""
        cfg = self.config
        machine = self.machines["mono"]
        if cfg.mode == "wake-all" or done.waves_used == 2:
            required = set(self.eha_ids)
        else:
            esa_machines = [m for n, m in self.machines.items() if n.startswith("esa")]
            required = set()
            for m in esa_machines:
                if m.last_awakened:
                    required |= m.last_awakened
            if not required:
                required = set(self.eha_ids)
        e_round = (
            self.profile.p_rx * self.profile.t_rx
            + self.profile.p_tx * self.profile.t_tx
            + self.profile.p_adc * self.profile.t_adc
        )
        worst = 0.0
        for i in required:
            d = self._nearest_esa_distance(f"eha{i}")
            lo, hi = cfg.harvest.domain
            p = harvested_power(min(max(d, lo), hi), cfg.harvest)
            worst = max(worst, charging_period(e_round, p))
        return worst

    def _collapse_ehas(self, done: protocol.RoundDone):
        """Burst-converter model: a reply empties the supply swing."""
        for i in self.eha_ids:
            name = f"eha{i}"
            acct = self.accounts[name]
            if acct.powered or not acct.alive:
                continue
            machine = self.machines[name]
            if machine.mode == "off":
                continue
            acct.advance(self.queue.now, self.profile)
            state = acct.state
            e_off = 0.5 * state.capacitance * state.v_thr_off ** 2
            drop = state.stored - e_off
            if drop > 0:
                ledger = dict(state.ledger)
                ledger["boost"] = ledger.get("boost", 0.0) + drop
                acct.state = replace(
                    state,
                    v_cap=state.v_thr_off,
                    v_out_enabled=False,
                    ledger=ledger,
                )
                acct.epoch += 1
                self._power_transition(name, False)
                self._project_energy(name)

    # -- post-run reporting ----------------------------------------------------

    def energy_report(self) -> dict[str, dict[str, float]]:
        out = {}
        for name, acct in self.accounts.items():
            acct.advance(self.queue.now, self.profile)
            if acct.powered:
                out[name] = {
                    "powered": 1.0,
                    "consumed": sum(acct.ledger().values()),
                }
            else:
                s = acct.state
                out[name] = {
                    "powered": 0.0,
                    "harvested": s.harvested_total,
                    "consumed": sum(s.ledger.values()),
                    "clamp_loss": s.clamp_loss,
                    "stored_initial": acct.initial.stored,
                    "stored_final": s.stored,
                }
        return out
