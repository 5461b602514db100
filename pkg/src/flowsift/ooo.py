"""Detector for flows with many out-of-order packets.

A packet is out of order when its id is at or below the flow's highest
seen id and the flow was active within the recency window (default
3 ms). Per-flow state (max id, last packet time) lives in a bounded
two-way cuckoo cache; an unbounded dict mode backs oracle-style tests.
Qualifying packets feed a weighted frequent-items table with 1/eps
slots, so any flow holding more than an eps fraction of the total
out-of-order weight is guaranteed a slot at stream end, and every slot
weight is an underestimate of the flow's true weight.

The frequent-items decrement differs from the naive scheme in one way:
when a new flow displaces the minimum slot, every slot is decremented
by the old minimum (not by the event weight minus it), which keeps all
weights nonnegative while preserving both guarantees above.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from . import hashing
from .packets import PacketType
from .reports import HeavyReport

# Accounting per entry/slot, in bytes: key plus the stated payload.
CACHE_ENTRY_BYTES = 13 + 8 + 8   # key, max_seq, last_ts
TOP_SLOT_BYTES = 13 + 8          # key, weight


class RecencyCache:
    """Bounded map flow key -> (max seq, last packet ts) within a window.

    Two-way cuckoo layout: each key has two candidate slots; insertion
    kicks occupants along a short chain and drops whatever entry is
    still displaced when the chain dead-ends (counted in ``dropped``).
    ``exact=True`` swaps in an unbounded dict with identical semantics
    for oracle-style tests.
    """

    _MAX_KICKS = 8

    def __init__(self, capacity: int = 1 << 16, window_ns: int = 3_000_000,
                 *, run_seed: int = 0, exact: bool = False):
        self.window_ns = window_ns
        self.exact = exact
        self.dropped = 0
        self._entries: dict[bytes, tuple[int, int]] = {}
        self._expiry: deque[tuple[int, bytes]] = deque()
        if not exact:
            if capacity < 2:
                raise ValueError("capacity must be >= 2")
            self.capacity = capacity
            self._h1 = hashing.derive_hash_pair(run_seed, 0, hashing.STREAM_CACHE)
            self._h2 = hashing.derive_hash_pair(run_seed, 1, hashing.STREAM_CACHE)
            self._half = capacity // 2
            self._slots: list[bytes | None] = [None] * capacity

    def __len__(self) -> int:
        return len(self._entries)

    def _slot_pair(self, key: bytes) -> tuple[int, int]:
        x = hashing.fold64(key)
        s1 = hashing.bucket_of_fold(self._h1, x, self._half)
        s2 = self._half + hashing.bucket_of_fold(self._h2, x, self._half)
        return s1, s2

    def get(self, key: bytes, now_ns: int) -> "tuple[int, int] | None":
        """Entry for key, or None if absent or stale at time now_ns."""
        entry = self._entries.get(key)
        if entry is None or now_ns - entry[1] > self.window_ns:
            return None
        return entry

    def put(self, key: bytes, max_seq: int, last_ts: int) -> None:
        if self.exact or key in self._entries:
            self._entries[key] = (max_seq, last_ts)
            self._expiry.append((last_ts, key))
            self.expire(last_ts)
            return
        # register before placing so the kick chain sees the entry as live
        self._entries[key] = (max_seq, last_ts)
        self._expiry.append((last_ts, key))
        s1, s2 = self._slot_pair(key)
        self._place(key, s1, s2)
        self.expire(last_ts)

    def _place(self, key: bytes, s1: int, s2: int) -> None:
        """Claim a slot for a freshly registered key, kicking occupants
        along a bounded chain; whatever entry is still displaced when the
        chain dead-ends is dropped (possibly the new key itself)."""
        carried = key
        came_from = -1
        for _ in range(self._MAX_KICKS):
            for s in (s1, s2):
                occupant = self._slots[s]
                if occupant is None or occupant not in self._entries:
                    self._slots[s] = carried
                    return
            kick = s2 if s1 == came_from else s1
            carried, self._slots[kick] = self._slots[kick], carried
            came_from = kick
            s1, s2 = self._slot_pair(carried)
        self.dropped += 1
        self._entries.pop(carried, None)

    def expire(self, now_ns: int) -> None:
        """Drop entries whose last packet is older than the window."""
        cutoff = now_ns - self.window_ns
        expiry = self._expiry
        entries = self._entries
        while expiry and expiry[0][0] < cutoff:
            ts, key = expiry.popleft()
            entry = entries.get(key)
            if entry is not None and entry[1] == ts:
                del entries[key]

    def active_flows(self) -> dict[bytes, tuple[int, int]]:
        return dict(self._entries)

    def memory_bytes(self) -> int:
        count = len(self._entries) if self.exact else self.capacity
        return count * CACHE_ENTRY_BYTES


class TopTable:
    """Weighted frequent-items table with r slots and a shared offset.

    Decrement-all is O(1) via the offset; a slot's effective weight is
    its stored value minus the offset and never goes negative.
    """

    def __init__(self, slots: int):
        if slots < 1:
            raise ValueError("need at least one slot")
        self.slots = slots
        self._raw: dict[bytes, int] = {}
        self._offset = 0
        self.total_weight = 0   # total absorbed weight (the P in eps*P)

    def absorb(self, key: bytes, weight: int) -> None:
        if weight <= 0:
            raise ValueError("weight must be positive")
        self.total_weight += weight
        raw = self._raw
        if key in raw:
            raw[key] += weight
            return
        if len(raw) < self.slots:
            raw[key] = self._offset + weight
            return
        min_key = min(raw, key=lambda k: (raw[k], k))
        min_eff = raw[min_key] - self._offset
        if min_eff >= weight:
            self._offset += weight          # decrement every slot; event discarded
            return
        self._offset += min_eff             # decrement every slot by the old minimum
        del raw[min_key]
        raw[key] = self._offset + (weight - min_eff)

    def weight(self, key: bytes) -> int:
        raw = self._raw.get(key)
        return 0 if raw is None else raw - self._offset

    def occupied(self) -> list[tuple[bytes, int]]:
        return [(k, v - self._offset) for k, v in self._raw.items()]

    def memory_bytes(self) -> int:
        return self.slots * TOP_SLOT_BYTES


@dataclass
class OooDetector:
    """Recency-cached out-of-order tracking over data-direction keys."""

    slots: int = 500
    cache_capacity: int = 1 << 10
    window_ns: int = 3_000_000
    weight_mode: str = "bytes"     # or "packets"
    run_seed: int = 0
    exact_cache: bool = False

    def __post_init__(self) -> None:
        if self.weight_mode not in ("bytes", "packets"):
            raise ValueError(f"weight mode must be bytes or packets, got {self.weight_mode!r}")
        self.cache = RecencyCache(self.cache_capacity, self.window_ns,
                                  run_seed=self.run_seed, exact=self.exact_cache)
        self.table = TopTable(self.slots)
        self.skipped = 0

    @property
    def epsilon(self) -> float:
        return 1.0 / self.slots

    def observe(self, packet) -> None:
        if packet.ptype != PacketType.DATA:
            self.skipped += 1
            return
        self._observe(packet.key.to_bytes(), int(packet.seq), int(packet.ts),
                      int(packet.size))

    def _observe(self, key: bytes, seq: int, ts: int, size: int) -> None:
        entry = self.cache.get(key, ts)
        if entry is None:
            self.cache.put(key, seq, ts)
            return
        max_seq = entry[0]
        if seq <= max_seq:
            self.table.absorb(key, size if self.weight_mode == "bytes" else 1)
            self.cache.put(key, max_seq, ts)
        else:
            self.cache.put(key, seq, ts)

    def observe_trace(self, trace) -> None:
        """Stream a whole trace: same semantics as observe(), packet by
        packet, with the per-flow slot hashes precomputed in bulk."""
        data = trace.select(trace.ptype == int(PacketType.DATA))
        self.skipped += len(trace) - len(data)
        if len(data) == 0:
            return
        blob = data.key_matrix().tobytes()
        seqs = data.seq.tolist()
        stamps = data.ts.tolist()
        weights = data.size.tolist() if self.weight_mode == "bytes" else None
        cache = self.cache
        if not cache.exact:
            folds = hashing.fold64_matrix(data.key_matrix())
            slot1 = hashing.bucket_batch(cache._h1, folds, cache._half).tolist()
            slot2 = (cache._half
                     + hashing.bucket_batch(cache._h2, folds, cache._half)).tolist()
        entries = cache._entries
        expiry = cache._expiry
        window = cache.window_ns
        absorb = self.table.absorb
        for i in range(len(seqs)):
            key = blob[i * 13:i * 13 + 13]
            ts = stamps[i]
            seq = seqs[i]
            entry = entries.get(key)
            if entry is not None and ts - entry[1] <= window:
                max_seq = entry[0]
                if seq <= max_seq:
                    absorb(key, weights[i] if weights else 1)
                    entries[key] = (max_seq, ts)
                else:
                    entries[key] = (seq, ts)
            elif entry is not None or cache.exact:
                entries[key] = (seq, ts)
            else:
                entries[key] = (seq, ts)
                cache._place(key, slot1[i], slot2[i])
            expiry.append((ts, key))
            cutoff = ts - window
            while expiry[0][0] < cutoff:
                old_ts, old_key = expiry.popleft()
                old = entries.get(old_key)
                if old is not None and old[1] == old_ts:
                    del entries[old_key]

    def topk(self, k: int) -> HeavyReport:
        entries = [(key, w) for key, w in self.table.occupied() if w > 0]
        entries.sort(key=lambda item: (-item[1], item[0]))
        entries = [(key, float(w)) for key, w in entries[:k]]
        return HeavyReport("ooo", entries, total=float(self.table.total_weight),
                           threshold=self.epsilon * self.table.total_weight)

    def memory_bytes(self) -> int:
        return self.table.memory_bytes() + self.cache.memory_bytes()
