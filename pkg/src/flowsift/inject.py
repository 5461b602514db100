"""Fault injection: latency, loss, reorder, duplicate.

Every injector is measure-preserving outside the victim flows and
records ground truth in a manifest next to the modified trace. Victims
are drawn from the heaviest flows (by data-packet count); the pool size
and draw count are plan parameters. Injected latency is drawn once per
flow, so a victim's delay is constant across its packets.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .oracle import oracle_ooo
from .packets import PacketType
from .traceio import Trace

REORDER_DELAY_NS = 5_000_000
DUPLICATE_JITTER_NS = 1_000_000

_KEY_VOID = np.dtype((np.void, 13))


@dataclass(frozen=True)
class InjectionPlan:
    """One fault class applied to sampled heavy flows.

    ``magnitude`` is a delay in nanoseconds for latency, else a rate in
    [0, 1). ``magnitude_high`` turns a latency delay into a per-flow
    uniform draw from [magnitude, magnitude_high].
    """

    kind: str                      # latency | loss | reorder | duplicate
    magnitude: float
    magnitude_high: "float | None" = None
    victims: int = 100
    pool: int = 1000               # victims are drawn from the `pool` heaviest flows
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in ("latency", "loss", "reorder", "duplicate"):
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if self.kind == "latency":
            if self.magnitude < 0:
                raise ValueError("delay must be >= 0")
        elif not (0 <= self.magnitude < 1):
            raise ValueError(f"{self.kind} rate must lie in [0, 1), got {self.magnitude}")
        if self.victims < 1 or self.pool < self.victims:
            raise ValueError("need 1 <= victims <= pool")


def rank_flows(trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    """Distinct data-direction keys ranked by data-packet count.

    Returns (keys as a void-13 array, counts), heaviest first; ties
    break on key bytes.
    """
    data = trace.select(trace.ptype == int(PacketType.DATA))
    view = _key_view(data)
    uniq, counts = np.unique(view, return_counts=True)
    order = np.lexsort((uniq, -counts))
    return uniq[order], counts[order]


def select_victims(trace: Trace, plan: InjectionPlan) -> list[bytes]:
    keys, _ = rank_flows(trace)
    if len(keys) < plan.pool:
        raise ValueError(f"trace has {len(keys)} flows, pool of {plan.pool} requested")
    rng = np.random.default_rng(plan.seed)
    picks = rng.choice(plan.pool, size=plan.victims, replace=False)
    return [keys[i].tobytes() for i in sorted(picks)]


def _key_view(trace: Trace) -> np.ndarray:
    rows = trace.key_matrix()
    return np.ascontiguousarray(rows).view(_KEY_VOID).ravel()


def _reverse_key_view(arr: np.ndarray) -> np.ndarray:
    rev = arr.copy()
    rev["src"], rev["dst"] = arr["dst"], arr["src"]
    rev["sport"], rev["dport"] = arr["dport"], arr["sport"]
    return _key_view(Trace(rev))


def _victim_index(view: np.ndarray, victims: list[bytes]) -> np.ndarray:
    """Per-record victim index, -1 where the key is not a victim."""
    victim_view = np.frombuffer(b"".join(victims), dtype=_KEY_VOID)
    order = np.argsort(victim_view)
    pos = np.clip(np.searchsorted(victim_view[order], view), 0, len(victims) - 1)
    idx = order[pos].astype(np.int64)
    idx[victim_view[order][pos] != view] = -1
    return idx


def _manifest(plan: InjectionPlan, trace: Trace, victims: list[bytes],
              magnitudes, true_values) -> dict:
    return {
        "kind": plan.kind,
        "seed": plan.seed,
        "plan": asdict(plan),
        "victims": [
            {"key": key.hex(), "magnitude": float(m), "true_value": float(t)}
            for key, m, t in zip(victims, magnitudes, true_values)
        ],
        "trace_sha256": trace.sha256(),
    }


def inject_latency(trace: Trace, plan: InjectionPlan) -> tuple[Trace, dict]:
    """Shift every response packet of each victim by its per-flow delay."""
    plan.validate()
    victims = select_victims(trace, plan)
    rng = np.random.default_rng(plan.seed + 1)
    if plan.magnitude_high is None:
        delays = np.full(len(victims), int(plan.magnitude), dtype=np.int64)
    else:
        delays = rng.integers(int(plan.magnitude), int(plan.magnitude_high) + 1,
                              len(victims), dtype=np.int64)

    # a response's reversed key is its victim's data-direction key
    arr = trace.arr.copy()
    victim_idx = _victim_index(_reverse_key_view(arr), victims)
    is_resp = np.isin(arr["ptype"], [int(PacketType.ACK), int(PacketType.SYNACK)])
    shift = (victim_idx >= 0) & is_resp
    arr["ts"][shift] = arr["ts"][shift] + delays[victim_idx[shift]].astype(np.uint64)
    shifted_counts = np.bincount(victim_idx[shift], minlength=len(victims))

    out = Trace(arr).time_sorted()
    true_values = delays * shifted_counts   # added round-trip ns per victim
    return out, _manifest(plan, out, victims, delays, true_values)


def inject_loss(trace: Trace, plan: InjectionPlan) -> tuple[Trace, dict]:
    """Drop each victim DATA packet independently at the plan's rate."""
    plan.validate()
    victims = select_victims(trace, plan)
    rng = np.random.default_rng(plan.seed + 1)
    victim_idx = _victim_index(_key_view(trace), victims)
    droppable = (victim_idx >= 0) & (trace.ptype == int(PacketType.DATA))
    drop = droppable & (rng.random(len(trace)) < plan.magnitude)
    lost_counts = np.bincount(victim_idx[drop], minlength=len(victims))

    out = trace.select(~drop)
    return out, _manifest(plan, out, victims,
                          [plan.magnitude] * len(victims), lost_counts)


def inject_reorder(trace: Trace, plan: InjectionPlan,
                   delay_ns: int = REORDER_DELAY_NS,
                   window_ns: int = 3_000_000) -> tuple[Trace, dict]:
    """Delay sampled victim DATA packets by 5 ms to break packet order."""
    plan.validate()
    victims = select_victims(trace, plan)
    rng = np.random.default_rng(plan.seed + 1)
    victim_idx = _victim_index(_key_view(trace), victims)
    sampled = (victim_idx >= 0) & (trace.ptype == int(PacketType.DATA)) \
        & (rng.random(len(trace)) < plan.magnitude)
    arr = trace.arr.copy()
    arr["ts"][sampled] = arr["ts"][sampled] + np.uint64(delay_ns)
    out = Trace(arr).time_sorted()

    weights = oracle_ooo(out, window_ns=window_ns)
    true_values = [weights.get(v, 0) for v in victims]
    return out, _manifest(plan, out, victims,
                          [plan.magnitude] * len(victims), true_values)


def inject_duplicate(trace: Trace, plan: InjectionPlan,
                     jitter_ns: int = DUPLICATE_JITTER_NS) -> tuple[Trace, dict]:
    """Append a jittered copy of sampled victim DATA packets."""
    plan.validate()
    victims = select_victims(trace, plan)
    rng = np.random.default_rng(plan.seed + 1)
    victim_idx = _victim_index(_key_view(trace), victims)
    sampled = (victim_idx >= 0) & (trace.ptype == int(PacketType.DATA)) \
        & (rng.random(len(trace)) < plan.magnitude)
    copies = trace.arr[sampled].copy()
    copies["ts"] = copies["ts"] + np.uint64(jitter_ns)
    dup_counts = np.bincount(victim_idx[sampled], minlength=len(victims))

    out = Trace(np.concatenate([trace.arr, copies])).time_sorted()
    return out, _manifest(plan, out, victims,
                          [plan.magnitude] * len(victims), dup_counts)
