"""Orthogonal spreading codes and equal-distance FEC for collision-tolerant beacon payloads.

Every anchor node owns one binary spreading code (a Hadamard row) and one FEC
codeword. Its ID is sent as the FEC word, one chip block per FEC bit: the
node's code for a 1-bit, the bitwise NOT of it for a 0-bit. A receiver
despreads each block against every candidate's code and accepts a candidate
whose recovered word lies within half the code distance. Because the codes
have zero cross-correlation, two superposed payloads can both survive a
collision and be recovered from the same packet.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PAYLOAD_BITS = 240  # fixed 30-byte payload


class CodecError(ValueError):
    """Invalid codec parameters or lookups."""


@dataclass(frozen=True)
class HadamardMatrix:
    order: int
    entries: np.ndarray  # (order, order) of +1 / -1

    def row(self, i: int) -> np.ndarray:
        return self.entries[i]


@dataclass(frozen=True)
class SpreadingCodebook:
    chip_length: int
    codes: np.ndarray            # (n, chip_length) binary chips, 0/1
    id_map: dict[int, int]       # node id -> row index in `codes`

    def code_for(self, node_id: int) -> np.ndarray:
        try:
            return self.codes[self.id_map[node_id]]
        except KeyError:
            raise CodecError(f"unknown id {node_id} in spreading codebook") from None

    @property
    def ids(self) -> list[int]:
        return sorted(self.id_map)


@dataclass(frozen=True)
class FecCodebook:
    word_length: int
    distance: int
    words: np.ndarray            # (n, word_length) binary words, 0/1
    id_map: dict[int, int]

    def word_for(self, node_id: int) -> np.ndarray:
        try:
            return self.words[self.id_map[node_id]]
        except KeyError:
            raise CodecError(f"unknown id {node_id} in FEC codebook") from None

    @property
    def ids(self) -> list[int]:
        return sorted(self.id_map)


@dataclass(frozen=True)
class EncodedPayload:
    bits: np.ndarray             # (PAYLOAD_BITS,) uint8

    def __post_init__(self):
        if self.bits.shape != (PAYLOAD_BITS,):
            raise CodecError(f"payload must be {PAYLOAD_BITS} bits, got {self.bits.shape}")

    def to_bytes(self) -> bytes:
        return np.packbits(self.bits).tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "EncodedPayload":
        if len(raw) != PAYLOAD_BITS // 8:
            raise CodecError(f"payload must be {PAYLOAD_BITS // 8} bytes, got {len(raw)}")
        return cls(np.unpackbits(np.frombuffer(raw, dtype=np.uint8)))


@dataclass(frozen=True)
class DecodeCandidate:
    """One accepted id with its decoding evidence."""

    node_id: int
    word_distance: int
    score: float                 # mean |despread correlation| over word blocks
    recovered_word: np.ndarray = field(repr=False, compare=False, default=None)


def build_hadamard(k: int) -> HadamardMatrix:
    """Sylvester construction: H_{2^k} = H_2 (x) H_{2^(k-1)}."""
    if not 1 <= k <= 8:
        raise CodecError(f"k must be in [1, 8], got {k}")
    h = np.array([[1, 1], [1, -1]], dtype=np.int64)
    m = h
    for _ in range(k - 1):
        m = np.kron(h, m)
    return HadamardMatrix(order=2 ** k, entries=m)


def build_spreading_codebook(
    num_ids: int,
    chip_length: int,
    ids: list[int] | None = None,
    exclude_all_ones: bool = True,
) -> SpreadingCodebook:
    """Assign one Hadamard-row chip code per id, mapping -1 chips to 0.

    The all-ones row is skipped by default: its bitwise NOT is all zeros,
    which is degenerate under correlation despreading.
    """
    if chip_length < 2 or chip_length & (chip_length - 1):
        raise CodecError(f"chip_length must be a power of two >= 2, got {chip_length}")
    if num_ids < 1:
        raise CodecError(f"num_ids must be >= 1, got {num_ids}")
    k = chip_length.bit_length() - 1
    rows = build_hadamard(k).entries
    first = 1 if exclude_all_ones else 0
    available = chip_length - first
    if num_ids > available:
        raise CodecError(
            f"cannot assign {num_ids} codes: only {available} usable rows "
            f"of a {chip_length}-chip code"
        )
    if ids is None:
        ids = list(range(num_ids))
    elif len(set(ids)) != num_ids:
        raise CodecError("ids must be unique and match num_ids")
    codes = ((rows[first:first + num_ids] + 1) // 2).astype(np.uint8)
    return SpreadingCodebook(
        chip_length=chip_length,
        codes=codes,
        id_map={node_id: idx for idx, node_id in enumerate(ids)},
    )


def build_fec_codebook(
    num_ids: int,
    word_length: int,
    ids: list[int] | None = None,
) -> FecCodebook:
    """Equal pairwise Hamming distance codewords.

    Two ids get the repetition pair {00..0, 11..1} (distance = word_length).
    Otherwise the words are Hadamard rows mapped -1 -> 0 (pairwise distance
    exactly half the Hadamard order), zero-padded up to word_length.
    """
    if num_ids < 1:
        raise CodecError(f"num_ids must be >= 1, got {num_ids}")
    if ids is None:
        ids = list(range(num_ids))
    elif len(set(ids)) != num_ids:
        raise CodecError("ids must be unique and match num_ids")
    id_map = {node_id: idx for idx, node_id in enumerate(ids)}

    if num_ids == 1:
        words = np.zeros((1, word_length), dtype=np.uint8)
        return FecCodebook(word_length, word_length, words, id_map)
    if num_ids == 2:
        words = np.zeros((2, word_length), dtype=np.uint8)
        words[1, :] = 1
        return FecCodebook(word_length, word_length, words, id_map)

    order = 1
    while order < num_ids:
        order *= 2
    if order > word_length:
        raise CodecError(
            f"no equal-distance construction for {num_ids} words of "
            f"length {word_length} (needs length >= {order})"
        )
    rows = build_hadamard(order.bit_length() - 1).entries
    words = np.zeros((num_ids, word_length), dtype=np.uint8)
    words[:, :order] = (rows[:num_ids] + 1) // 2
    return FecCodebook(word_length, order // 2, words, id_map)


def encode_id(node_id: int, fec: FecCodebook, spread: SpreadingCodebook) -> EncodedPayload:
    """Spread the id's FEC word into a fixed 240-bit payload, zero-padded."""
    word = fec.word_for(node_id)
    chip = spread.code_for(node_id)
    used = fec.word_length * spread.chip_length
    if used > PAYLOAD_BITS:
        raise CodecError(
            f"word_length x chip_length = {used} exceeds {PAYLOAD_BITS} payload bits"
        )
    blocks = np.where(word[:, None] == 1, chip[None, :], 1 - chip[None, :])
    bits = np.zeros(PAYLOAD_BITS, dtype=np.uint8)
    bits[:used] = blocks.reshape(-1)
    return EncodedPayload(bits)


def decode_payload_detailed(
    payload: EncodedPayload,
    fec: FecCodebook,
    spread: SpreadingCodebook,
) -> list[DecodeCandidate]:
    """Try every known id against the payload; return all accepted candidates.

    Per candidate: despread each chip block by +-1 correlation with the
    candidate's code (positive sum -> bit 1, ties -> 0), then accept when the
    Hamming distance to the candidate's FEC word is below half the code
    distance. Sorted by decreasing correlation score, ties by id.
    """
    if payload.bits.shape != (PAYLOAD_BITS,):
        raise CodecError("payload must be 240 bits")
    used = fec.word_length * spread.chip_length
    blocks = (payload.bits[:used].astype(np.int64) * 2 - 1).reshape(
        fec.word_length, spread.chip_length
    )
    accepted = []
    for node_id in fec.ids:
        if node_id not in spread.id_map:
            continue
        chip_pm = spread.code_for(node_id).astype(np.int64) * 2 - 1
        corr = blocks @ chip_pm
        recovered = (corr > 0).astype(np.uint8)
        d_c = int(np.sum(recovered != fec.word_for(node_id)))
        if d_c < fec.distance / 2:
            accepted.append(
                DecodeCandidate(
                    node_id=node_id,
                    word_distance=d_c,
                    score=float(np.mean(np.abs(corr))),
                    recovered_word=recovered,
                )
            )
    accepted.sort(key=lambda c: (-c.score, c.node_id))
    return accepted


def decode_payload(
    payload: EncodedPayload,
    fec: FecCodebook,
    spread: SpreadingCodebook,
) -> set[int]:
    """Set of ids accepted from the payload; empty when nothing decodes."""
    return {c.node_id for c in decode_payload_detailed(payload, fec, spread)}


def codebooks_to_text(fec: FecCodebook, spread: SpreadingCodebook) -> str:
    """Serialize paired codebooks to the line format used by scenario files.

    Header line carries dimensions, then one line per id with the FEC word
    and chip code as hex (MSB-first within each field).
    """
    if fec.ids != spread.ids:
        raise CodecError("FEC and spreading codebooks cover different ids")
    lines = [
        f"codebook word_length={fec.word_length} distance={fec.distance} "
        f"chip_length={spread.chip_length}"
    ]
    for node_id in fec.ids:
        word = _bits_to_hex(fec.word_for(node_id))
        chip = _bits_to_hex(spread.code_for(node_id))
        lines.append(f"id={node_id} fec={word} chip={chip}")
    return "\n".join(lines) + "\n"


def codebooks_from_text(text: str) -> tuple[FecCodebook, SpreadingCodebook]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("codebook "):
        raise CodecError("missing codebook header line")
    header = dict(kv.split("=") for kv in lines[0].split()[1:])
    word_length = int(header["word_length"])
    distance = int(header["distance"])
    chip_length = int(header["chip_length"])
    ids, words, chips = [], [], []
    for ln in lines[1:]:
        kv = dict(item.split("=") for item in ln.split())
        ids.append(int(kv["id"]))
        words.append(_hex_to_bits(kv["fec"], word_length))
        chips.append(_hex_to_bits(kv["chip"], chip_length))
    id_map = {node_id: idx for idx, node_id in enumerate(ids)}
    fec = FecCodebook(word_length, distance, np.array(words, dtype=np.uint8), id_map)
    spread = SpreadingCodebook(chip_length, np.array(chips, dtype=np.uint8), dict(id_map))
    return fec, spread


def _bits_to_hex(bits: np.ndarray) -> str:
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    width = (len(bits) + 3) // 4
    return f"0x{value:0{width}x}"


def _hex_to_bits(text: str, length: int) -> np.ndarray:
    value = int(text, 16)
    return np.array([(value >> (length - 1 - i)) & 1 for i in range(length)], dtype=np.uint8)
