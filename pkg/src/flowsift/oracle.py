"""Exact per-flow ground truth for all four statistics.

Linear-memory, evaluation-side only: these functions define the
"relevant" sets that recall and precision are scored against, and they
deliberately do what the sketches cannot afford to do. Maps carry only
flows with a nonzero statistic (the retransmission oracle is the
exception: it reports every data flow's packet/distinct counts).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .packets import PacketType
from .traceio import Trace

_KEY13 = np.dtype((np.void, 13))
_KEY26 = np.dtype((np.void, 26))


class RttOracle(NamedTuple):
    """Both round-trip accountings, keyed by canonical pair bytes.

    ``accumulated`` mirrors the sketch's semantics (unmatched requests
    leave their timestamps in; the documented overestimation mode);
    ``matched`` sums response-minus-request over FIFO-matched pairs only.
    """

    accumulated: dict[bytes, int]
    matched: dict[bytes, int]


def oracle_rtt(trace: Trace, type_filter=None, *, time_unit_ns: int = 1000,
               epoch_start_ns: int = 0) -> RttOracle:
    from .latency import TypeFilter
    if type_filter is None:
        type_filter = TypeFilter.syn_handshake()
    admitted = np.isin(trace.ptype,
                       [int(t) for t in (type_filter.requests | type_filter.responses)])
    sub = trace.select(admitted)
    if len(sub) == 0:
        return RttOracle({}, {})
    matrix, fwd = sub.canonical_matrix()
    view = np.ascontiguousarray(matrix).view(_KEY26).ravel()
    t = (sub.ts.astype(np.int64) - epoch_start_ns) // time_unit_ns
    signed = np.where(fwd, t, -t)
    is_resp = np.isin(sub.ptype, [int(x) for x in type_filter.responses])

    order = np.argsort(view, kind="stable")
    keys, starts = np.unique(view[order], return_index=True)
    sums = np.add.reduceat(signed[order], starts)
    accumulated = {k.tobytes(): int(abs(s)) for k, s in zip(keys, sums)}

    matched: dict[bytes, int] = {}
    t_ord, resp_ord = t[order], is_resp[order]
    bounds = np.append(starts, len(view))
    for i, key in enumerate(keys):
        lo, hi = bounds[i], bounds[i + 1]
        req_t = t_ord[lo:hi][~resp_ord[lo:hi]]
        rsp_t = t_ord[lo:hi][resp_ord[lo:hi]]
        pairs = min(len(req_t), len(rsp_t))
        if pairs:
            total = int(rsp_t[:pairs].sum() - req_t[:pairs].sum())
            if total:
                matched[key.tobytes()] = total
    return RttOracle(accumulated, matched)


def _data_groups(trace: Trace, *extra_cols: str):
    """DATA records grouped by flow key in stream order.

    Yields (key bytes, column arrays...) for the requested columns.
    """
    data = trace.select(trace.ptype == int(PacketType.DATA))
    if len(data) == 0:
        return
    rows = data.key_matrix()
    view = np.ascontiguousarray(rows).view(_KEY13).ravel()
    order = np.argsort(view, kind="stable")
    keys, starts = np.unique(view[order], return_index=True)
    bounds = np.append(starts, len(view))
    cols = [getattr(data, c).astype(np.int64)[order] for c in extra_cols]
    for i, key in enumerate(keys):
        lo, hi = bounds[i], bounds[i + 1]
        yield key.tobytes(), *(c[lo:hi] for c in cols)


def oracle_loss(trace: Trace) -> dict[bytes, int]:
    """Missing-id count per flow: ids below the max that never appear."""
    out: dict[bytes, int] = {}
    for key, seq in _data_groups(trace, "seq"):
        missing = int(seq.max()) - len(np.unique(seq))
        if missing > 0:
            out[key] = missing
    return out


def oracle_ooo(trace: Trace, window_ns: int = 3_000_000,
               weight_mode: str = "bytes") -> dict[bytes, int]:
    """Out-of-order weight per flow under the recency-window semantics.

    A packet counts when its id is at or below the flow's max id seen
    since the last gap longer than the window; a gap resets the max.
    """
    out: dict[bytes, int] = {}
    for key, seq, ts, size in _data_groups(trace, "seq", "ts", "size"):
        w = size if weight_mode == "bytes" else np.ones_like(seq)
        if len(seq) < 2:
            continue
        fresh = np.empty(len(seq), dtype=bool)
        fresh[0] = True
        fresh[1:] = np.diff(ts) > window_ns
        total = 0
        if not fresh[1:].any():
            prevmax = np.maximum.accumulate(seq)[:-1]
            hits = seq[1:] <= prevmax
            total = int(w[1:][hits].sum())
        elif not fresh.all():
            max_seq = 0
            for i in range(len(seq)):
                if fresh[i]:
                    max_seq = seq[i]
                elif seq[i] <= max_seq:
                    total += int(w[i])
                else:
                    max_seq = seq[i]
        if total > 0:
            out[key] = total
    return out


class RtxStats(NamedTuple):
    packets: int
    distinct: int
    avg_retransmissions: float


def oracle_rtx(trace: Trace) -> dict[bytes, RtxStats]:
    """Packet count, distinct-id count, and their ratio, for every data flow."""
    out: dict[bytes, RtxStats] = {}
    for key, seq in _data_groups(trace, "seq"):
        n, d = len(seq), len(np.unique(seq))
        out[key] = RtxStats(n, d, n / d)
    return out


def relevant_topk(mapping: dict, k: int) -> list[bytes]:
    """Top-k keys by value, ties broken by key bytes ascending."""
    ranked = sorted(mapping.items(), key=lambda item: (-_value(item[1]), item[0]))
    return [key for key, _ in ranked[:k]]


def _value(v) -> float:
    return float(v.avg_retransmissions) if isinstance(v, RtxStats) else float(v)
