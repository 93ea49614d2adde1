"""Node state machines and packet formats for the beacon procedure.

Three roles cooperate in a round. The mobile node broadcasts a wakeup
request; the mains-powered source anchor replies, pulses its energy
transmitter off as a passive wakeup signal, and broadcasts a sleep command
naming the anchors that should sit the round out. Harvesting anchors detect
the power dip at their next ADC poll, listen briefly, and answer the beacon
request simultaneously so the receiver can exploit the capture effect or the
spreading codes.

Round timeline, with t1 = end of the source anchor's wakeup reply and t_p the
packet duration:

    t1              transmitter off (pulse, duration t_off)
    t1 + u_i        anchor i's next ADC poll detects the dip, u_i in [0, t_c)
    t1 + t_c        sleep command broadcast (all detectors are listening)
    t1 + t_c + t_p  beacon request sent by the mobile node
    t1 + t_c + 2t_p request received; replies start simultaneously

Anchors listen for t_c + 2 t_p after waking so the slowest detector still
hears both control packets; receiving a packet requires listening through
its end, and deliveries sort before timeouts at equal times.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .codec import PAYLOAD_BITS, EncodedPayload
from .energy import PowerProfile

PAYLOAD_LEN = 30
PREAMBLE = 0xAA


class ProtocolError(ValueError):
    """Invalid protocol parameters or malformed packets."""


class PacketKind(Enum):
    WAKEUP_REQUEST = 1
    WAKEUP_REPLY = 2
    BEACON_REQUEST = 3
    BEACON_REPLY = 4
    SLEEP = 5


FLAG_REQUEST_AGAIN = 0x01


@dataclass(frozen=True, eq=False)
class Packet:
    """One frame: preamble byte, kind tag, flags, 30-byte payload, CRC-16.

    Wire layout (35 bytes): [preamble:1][kind:1][flags:1][payload:30][crc:2],
    CRC-16/CCITT-FALSE over the first 33 bytes, big-endian. Flag bit 0 is
    request-again.
    """

    kind: PacketKind
    payload: bytes
    request_again: bool = False
    sender: int = -1  # simulation metadata, not on the wire

    def __post_init__(self):
        if len(self.payload) != PAYLOAD_LEN:
            raise ProtocolError(f"payload must be {PAYLOAD_LEN} bytes, got {len(self.payload)}")

    def to_bytes(self) -> bytes:
        flags = FLAG_REQUEST_AGAIN if self.request_again else 0
        body = bytes([PREAMBLE, self.kind.value, flags]) + self.payload
        return body + struct.pack(">H", crc16(body))

    @classmethod
    def from_bytes(cls, raw: bytes, sender: int = -1) -> "Packet":
        if len(raw) != PAYLOAD_LEN + 5:
            raise ProtocolError(f"frame must be {PAYLOAD_LEN + 5} bytes, got {len(raw)}")
        body, crc = raw[:-2], struct.unpack(">H", raw[-2:])[0]
        if crc16(body) != crc:
            raise ProtocolError("CRC mismatch")
        if body[0] != PREAMBLE:
            raise ProtocolError("bad preamble byte")
        return cls(
            kind=PacketKind(body[1]),
            payload=body[3:],
            request_again=bool(body[2] & FLAG_REQUEST_AGAIN),
            sender=sender,
        )

    def payload_bits(self) -> np.ndarray:
        return np.unpackbits(np.frombuffer(self.payload, dtype=np.uint8))


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF)."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021 if crc & 0x8000 else crc << 1) & 0xFFFF
    return crc


def request_payload(node_id: int, power_reading_w: float | None = None) -> bytes:
    """Requests carry the mobile node's id in the first two bytes.

    The harvested-power reading used for range estimation rides in bytes
    2..5 as an IEEE-754 float32 (big-endian, watts); byte 6 flags presence.
    """
    out = bytearray(PAYLOAD_LEN)
    struct.pack_into(">H", out, 0, node_id)
    if power_reading_w is not None:
        struct.pack_into(">f", out, 2, power_reading_w)
        out[6] = 1
    return bytes(out)


def parse_request_payload(payload: bytes) -> tuple[int, float | None]:
    node_id = struct.unpack_from(">H", payload, 0)[0]
    reading = struct.unpack_from(">f", payload, 2)[0] if payload[6] else None
    return node_id, reading


def reply_payload(node_id: int) -> bytes:
    """Plain reply payload: sender id in the first two bytes."""
    out = bytearray(PAYLOAD_LEN)
    struct.pack_into(">H", out, 0, node_id)
    return bytes(out)


def parse_reply_id(payload: bytes) -> int:
    return struct.unpack_from(">H", payload, 0)[0]


def sleep_payload(ids: set[int]) -> bytes:
    """Sleep command payload: a 240-bit id bitmask, bit j of byte k = id 8k+j."""
    bits = np.zeros(PAYLOAD_BITS, dtype=np.uint8)
    for node_id in ids:
        if not 0 <= node_id < PAYLOAD_BITS:
            raise ProtocolError(f"id {node_id} does not fit the sleep bitmask")
        bits[node_id] = 1
    return np.packbits(bits, bitorder="little").tobytes()


def parse_sleep_payload(payload: bytes) -> set[int]:
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")
    return {int(i) for i in np.nonzero(bits)[0]}


def encoded_reply_payload(encoded: EncodedPayload) -> bytes:
    return encoded.to_bytes()


# ---------------------------------------------------------------------------
# grouping rules

def categorize_ranges(eha_table: dict[int, float], rho: float) -> tuple[set[int], set[int]]:
    """Split anchors into close (mu >= rho) and far (mu < rho) groups."""
    if not eha_table:
        raise ProtocolError("eha_table must not be empty")
    close = {i for i, mu in eha_table.items() if mu >= rho}
    far = {i for i, mu in eha_table.items() if mu < rho}
    return close, far


def categorize_waves(eha_table: dict[int, float], border: int) -> tuple[set[int], set[int]]:
    """Split anchors into wave one (mu >= theta) and wave two (mu <= theta).

    theta is the border anchor's own reading, so the border lands in both.
    """
    if border not in eha_table:
        raise ProtocolError(f"border id {border} not in eha_table")
    theta = eha_table[border]
    wave1 = {i for i, mu in eha_table.items() if mu >= theta}
    wave2 = {i for i, mu in eha_table.items() if mu <= theta}
    return wave1, wave2


def middle_eha(eha_table: dict[int, float], positions: dict[int, float]) -> int:
    """Anchor at the geographic middle (median distance, lower on ties)."""
    ordered = sorted(eha_table, key=lambda i: (positions[i], i))
    return ordered[(len(ordered) - 1) // 2]


# ---------------------------------------------------------------------------
# ADC duty-cycle optimization

def optimal_tc(t_m: float, t_d: float, p_d: float, p_rx: float) -> float:
    """Poll period minimizing a node's expected average power over a round."""
    if min(t_m, t_d, p_d, p_rx) <= 0:
        raise ProtocolError("optimal_tc arguments must be positive")
    return math.sqrt(2.0 * t_m * t_d * p_d / p_rx)


def expected_power(
    t_c: float,
    t_m: float,
    profile: PowerProfile,
    t_d: float | None = None,
    t_tx: float | None = None,
) -> float:
    """Expected average power of a duty-cycled anchor over one beacon period.

    The node polls floor(t_m/t_c) times, listens an expected t_c/2 after the
    wakeup signal (detection latency uniform over the poll period), transmits
    one reply, and sleeps the rest.
    """
    if not 0 < t_c < t_m:
        raise ProtocolError(f"need 0 < t_c < t_m, got t_c={t_c}, t_m={t_m}")
    t_d = profile.t_adc if t_d is None else t_d
    t_tx = profile.t_tx if t_tx is None else t_tx
    k_d = math.floor(t_m / t_c)
    t_rx = t_c / 2.0
    t_s = t_m - (k_d * t_d + t_rx + t_tx)
    if t_s < 0:
        raise ProtocolError(f"infeasible schedule: sleep time {t_s} < 0 at t_c={t_c}")
    total = (
        profile.p_rx * t_rx
        + profile.p_tx * t_tx
        + k_d * profile.p_adc * t_d
        + profile.p_sleep * t_s
    )
    return total / t_m


# ---------------------------------------------------------------------------
# state machines: events and actions

@dataclass(frozen=True)
class PacketArrived:
    packet: Packet
    now: float


@dataclass(frozen=True)
class AdcPoll:
    reading_w: float
    field_epoch: int
    now: float


@dataclass(frozen=True)
class ListenTimeout:
    now: float


@dataclass(frozen=True)
class RoundTimer:
    now: float
    power_reading_w: float
    energy_ok: bool


@dataclass(frozen=True)
class ReplyOutcome:
    """Resolved reception of the synchronized reply burst (or its absence)."""

    outcome: object  # radio.ReceptionOutcome
    now: float


@dataclass(frozen=True)
class PhaseTimeout:
    phase: str
    round_index: int
    now: float


@dataclass(frozen=True)
class PowerLost:
    now: float


@dataclass(frozen=True)
class PowerRestored:
    now: float


@dataclass(frozen=True)
class SendPacket:
    packet: Packet
    at: float


@dataclass(frozen=True)
class TransmitterPulse:
    at: float
    duration: float


@dataclass(frozen=True)
class StartListen:
    until: float


@dataclass(frozen=True)
class GoSleep:
    at: float


@dataclass(frozen=True)
class SetTimer:
    tag: str
    at: float
    round_index: int = -1


@dataclass(frozen=True)
class RoundDone:
    round_index: int
    requested: bool
    success: bool
    decoded_ids: frozenset
    selected_id: int | None
    waves_used: int
    now: float


@dataclass
class Timing:
    """Shared protocol timing constants for one scenario."""

    t_tx: float
    t_c: float
    t_off: float
    t_m: float

    def __post_init__(self):
        if min(self.t_tx, self.t_c, self.t_off, self.t_m) <= 0:
            raise ProtocolError("timing constants must be positive")

    @property
    def listen_duration(self) -> float:
        return self.t_c + 2.0 * self.t_tx


# ---------------------------------------------------------------------------
# source anchor (always listening, mains powered)

@dataclass
class EsaState:
    node_id: int
    timing: Timing
    mode: str = "wake-all"           # wake-all | range | two-wave
    eha_table: dict[int, float] = field(default_factory=dict)
    rho: float | None = None
    border: int | None = None
    transmitter_on: bool = True
    last_awakened: set[int] | None = None

    def __post_init__(self):
        if self.mode not in ("wake-all", "range", "two-wave"):
            raise ProtocolError(f"unknown mode {self.mode!r}")
        if self.mode == "range" and self.rho is None:
            raise ProtocolError("range mode needs a threshold rho")
        if self.mode == "two-wave" and self.border not in self.eha_table:
            raise ProtocolError("two-wave mode needs a border id present in eha_table")


def esa_handle(event, state: EsaState) -> tuple[EsaState, list]:
    """Source-anchor reaction to one event; returns emitted actions."""
    actions: list = []
    if isinstance(event, PacketArrived) and event.packet.kind is PacketKind.WAKEUP_REQUEST:
        now = event.now
        t = state.timing
        _, xi = parse_request_payload(event.packet.payload)
        reply = Packet(PacketKind.WAKEUP_REPLY, reply_payload(state.node_id), sender=state.node_id)
        actions.append(SendPacket(reply, at=now))
        pulse_at = now + t.t_tx
        actions.append(TransmitterPulse(at=pulse_at, duration=t.t_off))
        sleep_ids = _sleep_list(state, xi, event.packet.request_again)
        if sleep_ids is not None:
            pkt = Packet(PacketKind.SLEEP, sleep_payload(sleep_ids), sender=state.node_id)
            actions.append(SendPacket(pkt, at=pulse_at + t.t_c))
    return state, actions


def _sleep_list(state: EsaState, xi: float | None, request_again: bool) -> set[int] | None:
    """Which anchors to silence this wave; None means no sleep command."""
    if state.mode == "wake-all":
        return None
    if state.mode == "range":
        close, far = categorize_ranges(state.eha_table, state.rho)
        if request_again and state.last_awakened is not None:
            awaken = far if state.last_awakened == close else close
        else:
            # a low reading means the requester is far from the source
            awaken = far if (xi is not None and xi <= state.rho) else close
        state.last_awakened = awaken
        return set(state.eha_table) - awaken
    wave1, wave2 = categorize_waves(state.eha_table, state.border)
    if request_again:
        state.last_awakened = wave2
        return wave1 - {state.border}
    state.last_awakened = wave1
    return wave2 - {state.border}


# ---------------------------------------------------------------------------
# harvesting anchor

@dataclass
class EhaState:
    node_id: int
    timing: Timing
    mode: str = "sleep"              # off | sleep | listening | transmitting
    ema_reading: float | None = None
    seen_epoch: int = 0
    encoded_payload: bytes | None = None  # pre-encoded beacon reply
    reported_mu: float = 0.0
    drop_ratio: float = 0.5
    ema_alpha: float = 0.25


def eha_handle(event, state: EhaState) -> tuple[EhaState, list]:
    """Harvesting-anchor reaction to one event; returns emitted actions."""
    t = state.timing
    actions: list = []
    if isinstance(event, AdcPoll):
        if state.mode != "sleep":
            return state, actions
        detected = _detect_drop(state, event.reading_w, event.field_epoch)
        if detected:
            state.mode = "listening"
            actions.append(StartListen(until=event.now + t.listen_duration))
    elif isinstance(event, PacketArrived):
        pkt = event.packet
        if state.mode != "listening":
            return state, actions
        if pkt.kind is PacketKind.SLEEP:
            if state.node_id in parse_sleep_payload(pkt.payload):
                state.mode = "sleep"
                actions.append(GoSleep(at=event.now))
        elif pkt.kind is PacketKind.BEACON_REQUEST:
            payload = state.encoded_payload or reply_payload(state.node_id)
            reply = Packet(PacketKind.BEACON_REPLY, payload, sender=state.node_id)
            state.mode = "transmitting"
            actions.append(SendPacket(reply, at=event.now))
            actions.append(GoSleep(at=event.now + t.t_tx))
    elif isinstance(event, ListenTimeout):
        if state.mode == "listening":
            state.mode = "sleep"
            actions.append(GoSleep(at=event.now))
    elif isinstance(event, PowerLost):
        state.mode = "off"
    elif isinstance(event, PowerRestored):
        state.mode = "sleep"
        state.ema_reading = state.reported_mu or state.ema_reading
    return state, actions


def _detect_drop(state: EhaState, reading: float, field_epoch: int) -> bool:
    """Falling-power detector: reading under half the rolling average.

    Each wakeup pulse is consumed once; the average only adapts on normal
    readings so a long outage cannot poison it.
    """
    if state.ema_reading is None:
        state.ema_reading = reading
        return False
    dropped = reading < state.drop_ratio * state.ema_reading
    if dropped and field_epoch > state.seen_epoch:
        state.seen_epoch = field_epoch
        return True
    if not dropped:
        state.ema_reading = (
            (1.0 - state.ema_alpha) * state.ema_reading + state.ema_alpha * reading
        )
    return False


# ---------------------------------------------------------------------------
# mobile node

@dataclass
class MonoState:
    node_id: int
    timing: Timing
    mode: str = "wake-all"
    border: int | None = None
    use_spreading: bool = True
    phase: str = "idle"              # idle | await-wakeup-reply | await-replies
    round_index: int = -1
    retried: bool = False
    waves_used: int = 1
    xi: float = 0.0
    decoded_ids: frozenset = frozenset()
    selected_id: int | None = None
    decode_fn: object = None         # payload bits -> list of (id, score)


def mono_handle(event, state: MonoState) -> tuple[MonoState, list]:
    """Mobile-node reaction to one event; returns emitted actions."""
    t = state.timing
    actions: list = []
    if isinstance(event, RoundTimer):
        state.round_index += 1
        state.retried = False
        state.waves_used = 1
        state.decoded_ids = frozenset()
        state.selected_id = None
        if not event.energy_ok:
            state.phase = "idle"
            actions.append(
                RoundDone(state.round_index, False, False, frozenset(), None, 0, event.now)
            )
            return state, actions
        state.xi = event.power_reading_w
        actions += _send_wakeup_request(state, event.now, request_again=False)
    elif isinstance(event, PacketArrived) and event.packet.kind is PacketKind.WAKEUP_REPLY:
        if state.phase != "await-wakeup-reply":
            return state, actions
        state.phase = "await-replies"
        breq = Packet(
            PacketKind.BEACON_REQUEST,
            request_payload(state.node_id, state.xi),
            request_again=state.retried,
            sender=state.node_id,
        )
        send_at = event.now + t.t_c + t.t_tx
        actions.append(SendPacket(breq, at=send_at))
        actions.append(
            SetTimer("reply-timeout", at=send_at + 2.5 * t.t_tx, round_index=state.round_index)
        )
    elif isinstance(event, ReplyOutcome):
        if state.phase != "await-replies":
            return state, actions
        actions += _conclude_wave(state, event.outcome, event.now)
    elif isinstance(event, PhaseTimeout):
        if event.round_index != state.round_index:
            return state, actions
        if event.phase == "wakeup-reply-timeout" and state.phase == "await-wakeup-reply":
            state.phase = "idle"
            actions.append(
                RoundDone(
                    state.round_index, True, False, frozenset(), None,
                    state.waves_used, event.now,
                )
            )
        elif event.phase == "reply-timeout" and state.phase == "await-replies":
            actions += _conclude_wave(state, None, event.now)
    elif isinstance(event, PowerLost):
        if state.phase != "idle":
            state.phase = "idle"
            actions.append(
                RoundDone(
                    state.round_index, True, False, frozenset(), None,
                    state.waves_used, event.now,
                )
            )
    return state, actions


def _send_wakeup_request(state: MonoState, now: float, request_again: bool) -> list:
    t = state.timing
    pkt = Packet(
        PacketKind.WAKEUP_REQUEST,
        request_payload(state.node_id, state.xi),
        request_again=request_again,
        sender=state.node_id,
    )
    state.phase = "await-wakeup-reply"
    return [
        SendPacket(pkt, at=now),
        SetTimer(
            "wakeup-reply-timeout", at=now + 3.0 * t.t_tx, round_index=state.round_index
        ),
    ]


def _conclude_wave(state: MonoState, outcome, now: float) -> list:
    """Decode the wave's reply burst and either finish the round or retry."""
    decoded: list[tuple[int, float]] = []
    if outcome is not None and outcome.delivered_payload is not None:
        from .radio import ReceptionKind  # local import to avoid cycle

        bits = outcome.delivered_payload
        if state.use_spreading:
            decoded = list(state.decode_fn(bits))
        elif outcome.kind in (ReceptionKind.CLEAN, ReceptionKind.CAPTURED):
            payload = np.packbits(bits).tobytes()
            decoded = [(parse_reply_id(payload), 1.0)]

    actions: list = []
    if decoded:
        decoded.sort(key=lambda c: (-c[1], c[0]))
        selected = decoded[0][0]
        state.decoded_ids = frozenset(i for i, _ in decoded)
        state.selected_id = selected
        trigger_second = (
            state.mode == "two-wave" and not state.retried and selected == state.border
        )
        if trigger_second:
            state.retried = True
            state.waves_used = 2
            actions += _send_wakeup_request(state, now, request_again=True)
        else:
            state.phase = "idle"
            actions.append(
                RoundDone(
                    state.round_index, True, True, state.decoded_ids, selected,
                    state.waves_used, now,
                )
            )
    else:
        if not state.retried and state.mode in ("range", "two-wave"):
            state.retried = True
            state.waves_used = 2
            actions += _send_wakeup_request(state, now, request_again=True)
        else:
            state.phase = "idle"
            actions.append(
                RoundDone(
                    state.round_index, True, False, frozenset(), None,
                    state.waves_used, now,
                )
            )
    return actions
