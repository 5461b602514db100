"""Packet event model and flow identity types.

Every detector consumes the same immutable record shape: a flow key
(5-tuple, or origin-destination pair with ports and proto zeroed), a
packet type, per-flow logical sequence ids starting at 1, and integer
nanosecond timestamps. Keys serialize to a fixed 13-byte layout that is
the hashing substrate for every sketch; a bidirectional flow is
addressed by its canonical endpoint pair, which serializes to 26 bytes.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence


class PacketType(enum.IntEnum):
    DATA = 0
    ACK = 1
    SYN = 2
    SYNACK = 3
    FIN = 4


KEY_BYTES = 13
PAIR_BYTES = 26
RECORD_BYTES = 42

_KEY_CODEC = struct.Struct("<IIHHB")          # src, dst, src_port, dst_port, proto
_RECORD_CODEC = struct.Struct("<IIHHBBQQQI")  # key fields + ptype, seq, ack, ts, size


@dataclass(frozen=True)
class FlowKey:
    """Directed flow identity: 5-tuple of 32-bit endpoints, ports, proto.

    OD-pair mode uses the same type with ports and proto zeroed; whether
    a run is in 5-tuple or OD mode is a whole-run setting, never mixed.
    """

    src: int
    dst: int
    src_port: int = 0
    dst_port: int = 0
    proto: int = 0

    def to_bytes(self) -> bytes:
        return _KEY_CODEC.pack(self.src, self.dst, self.src_port, self.dst_port, self.proto)

    @classmethod
    def from_bytes(cls, data: bytes) -> "FlowKey":
        if len(data) != KEY_BYTES:
            raise ValueError(f"flow key must be {KEY_BYTES} bytes, got {len(data)}")
        return cls(*_KEY_CODEC.unpack(data))

    def reversed(self) -> "FlowKey":
        return FlowKey(self.dst, self.src, self.dst_port, self.src_port, self.proto)

    def to_od_pair(self) -> "FlowKey":
        """Collapse to origin-destination identity (ports/proto zeroed)."""
        return FlowKey(self.src, self.dst)


class Endpoint(NamedTuple):
    addr: int
    port: int


@dataclass(frozen=True)
class CanonicalPair:
    """Unordered endpoint pair addressing both directions of a flow.

    ``lo`` and ``hi`` satisfy lo <= hi under (addr, port) order;
    ``forward`` records whether the observed packet traveled lo -> hi.
    A key and its reversal canonicalize to the same (lo, hi).
    """

    lo: Endpoint
    hi: Endpoint
    proto: int
    forward: bool

    def forward_key(self) -> FlowKey:
        return FlowKey(self.lo.addr, self.hi.addr, self.lo.port, self.hi.port, self.proto)

    def to_bytes(self) -> bytes:
        """26-byte serialization: the canonical directed key, then its reversal."""
        fwd = self.forward_key()
        return fwd.to_bytes() + fwd.reversed().to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "CanonicalPair":
        if len(data) != PAIR_BYTES:
            raise ValueError(f"canonical pair must be {PAIR_BYTES} bytes, got {len(data)}")
        fwd = FlowKey.from_bytes(data[:KEY_BYTES])
        return cls(Endpoint(fwd.src, fwd.src_port), Endpoint(fwd.dst, fwd.dst_port),
                   fwd.proto, True)


def canonicalize(key: FlowKey) -> CanonicalPair:
    """Order a key's endpoints; reversing the key flips only ``forward``.

    Self-pairs (both endpoints equal) are legal and come out forward.
    """
    a = Endpoint(key.src, key.src_port)
    b = Endpoint(key.dst, key.dst_port)
    if a <= b:
        return CanonicalPair(a, b, key.proto, True)
    return CanonicalPair(b, a, key.proto, False)


def key_bytes(key: "FlowKey | CanonicalPair") -> bytes:
    """Deterministic, injective serialization of either key type."""
    return key.to_bytes()


@dataclass(frozen=True)
class PacketRecord:
    """One observed packet event.

    ``seq`` is a per-flow logical packet index (1, 2, 3, ...), not a TCP
    byte offset; ``ack`` is 0 when absent. ``ts`` is integer nanoseconds.
    """

    key: FlowKey
    ptype: PacketType
    seq: int
    ack: int
    ts: int
    size: int

    def to_bytes(self) -> bytes:
        k = self.key
        return _RECORD_CODEC.pack(k.src, k.dst, k.src_port, k.dst_port, k.proto,
                                  int(self.ptype), self.seq, self.ack, self.ts, self.size)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PacketRecord":
        if len(data) != RECORD_BYTES:
            raise ValueError(f"record must be {RECORD_BYTES} bytes, got {len(data)}")
        src, dst, sport, dport, proto, ptype, seq, ack, ts, size = _RECORD_CODEC.unpack(data)
        return cls(FlowKey(src, dst, sport, dport, proto), PacketType(ptype), seq, ack, ts, size)

    def to_text(self) -> str:
        """Comma-separated form with hex endpoints, for hand-written fixtures."""
        k = self.key
        return (f"{k.src:08x},{k.dst:08x},{k.src_port},{k.dst_port},{k.proto},"
                f"{self.ptype.name},{self.seq},{self.ack},{self.ts},{self.size}")

    @classmethod
    def from_text(cls, line: str) -> "PacketRecord":
        parts = line.strip().split(",")
        if len(parts) != 10:
            raise ValueError(f"expected 10 comma-separated fields, got {len(parts)}")
        src, dst = int(parts[0], 16), int(parts[1], 16)
        sport, dport, proto = int(parts[2]), int(parts[3]), int(parts[4])
        name = parts[5].strip().upper()
        ptype = PacketType[name] if name in PacketType.__members__ else PacketType(int(parts[5]))
        return cls(FlowKey(src, dst, sport, dport, proto), ptype,
                   int(parts[6]), int(parts[7]), int(parts[8]), int(parts[9]))


@dataclass(frozen=True)
class Epoch:
    """One monitoring interval: all packet timestamps lie in [start, end)."""

    start_ts: int
    end_ts: int
    packets: Sequence[PacketRecord] = ()

    def __post_init__(self) -> None:
        for p in self.packets:
            if not (self.start_ts <= p.ts < self.end_ts):
                raise ValueError(f"packet ts {p.ts} outside epoch [{self.start_ts}, {self.end_ts})")

    def __iter__(self) -> Iterator[PacketRecord]:
        return iter(self.packets)

    def __len__(self) -> int:
        return len(self.packets)
