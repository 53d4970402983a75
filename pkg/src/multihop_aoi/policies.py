"""Per-link scheduling disciplines.

Queue entries are tuples ``(gen_time, packet_id, seq)`` where ``seq`` is the
arrival order at the link.  Tuple order therefore gives the LGFS priority
(larger generation time first, larger id on ties).
"""

from __future__ import annotations

import math
from bisect import insort
from collections import deque
from dataclasses import dataclass, field

PRMP_LGFS = "PrmpLGFS"
NON_PRMP_LGFS = "NonPrmpLGFS"
FCFS = "FCFS"
NON_PRMP_LCFS = "NonPrmpLCFS"
INFEASIBLE_LB = "InfeasibleLB"

KINDS = (PRMP_LGFS, NON_PRMP_LGFS, FCFS, NON_PRMP_LCFS, INFEASIBLE_LB)
PREEMPTIVE = frozenset({PRMP_LGFS})
LGFS_ORDERED = frozenset({PRMP_LGFS, NON_PRMP_LGFS, INFEASIBLE_LB})

# actions returned by on_arrival
START = "start_service"
ENQUEUE = "enqueue"
PREEMPT = "preempt_and_start"
REPLACE = "replace_in_queue"
DROP = "drop"


class PolicyError(ValueError):
    pass


def check_kind(kind: str) -> str:
    if kind not in KINDS:
        raise PolicyError(f"unknown policy kind {kind!r}; valid kinds: {', '.join(KINDS)}")
    return kind


@dataclass(frozen=True)
class PolicySpec:
    """A network-wide discipline, optionally overridden per link.

    ``buffer`` (if set) replaces every link buffer of the network the policy
    runs on; ``None`` keeps the network's own buffers.
    """

    kind: str
    buffer: float | None = None
    overrides: dict = field(default_factory=dict, hash=False)
    label: str | None = None

    def __post_init__(self):
        check_kind(self.kind)
        for k in self.overrides.values():
            check_kind(k)

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.buffer is None:
            return self.kind
        b = "inf" if self.buffer == math.inf else int(self.buffer)
        return f"{self.kind}(B={b})"

    def kind_for(self, link_key) -> str:
        return self.overrides.get(tuple(link_key), self.kind)

    def kinds(self) -> set:
        return {self.kind, *self.overrides.values()}

    def to_spec(self) -> dict:
        d = {"kind": self.kind}
        if self.buffer is not None:
            d["buffer"] = "inf" if self.buffer == math.inf else int(self.buffer)
        if self.overrides:
            d["overrides"] = [{"from": i, "to": j, "kind": k} for (i, j), k in self.overrides.items()]
        if self.label:
            d["label"] = self.label
        return d


class LinkState:
    """Server and queue of one link under one discipline."""

    __slots__ = (
        "kind", "capacity", "queue", "in_service", "start", "pending",
        "drops", "replacements", "preemptions", "_seq",
    )

    def __init__(self, kind: str, capacity: float = math.inf):
        self.kind = check_kind(kind)
        self.capacity = capacity
        if kind == FCFS:
            self.queue = deque()
        else:
            self.queue = []
        self.in_service = None
        self.start = 0.0
        self.pending = False  # server freed, next-packet decision deferred
        self.drops = 0
        self.replacements = 0
        self.preemptions = 0
        self._seq = 0

    @property
    def busy(self) -> bool:
        return self.in_service is not None

    @property
    def alpha(self) -> float:
        """Generation time of the packet in service (0 when idle)."""
        return self.in_service[0] if self.in_service is not None else 0.0

    @property
    def delta(self) -> float:
        """Smallest generation time among queued packets (0 when empty)."""
        if not self.queue:
            return 0.0
        if self.kind in LGFS_ORDERED:
            return self.queue[0][0]
        return min(e[0] for e in self.queue)

    def entry(self, gen_time: float, pid: int) -> tuple:
        self._seq += 1
        return (gen_time, pid, self._seq)

    def _start(self, item, t):
        self.in_service = item
        self.start = t


def _lgfs_admit(state: LinkState, item, cap) -> str:
    q = state.queue
    if len(q) < cap:
        insort(q, item)
        return ENQUEUE
    if cap > 0 and item[0] > q[0][0]:
        del q[0]
        insort(q, item)
        state.replacements += 1
        return REPLACE
    state.drops += 1
    return DROP


def on_arrival(state: LinkState, item, t: float) -> str:
    """Offer a packet ``item`` to the link at time ``t``; returns the action taken."""
    if state.in_service is None and not state.pending:
        state._start(item, t)
        return START
    kind = state.kind
    cap = state.capacity + 1 if state.pending else state.capacity
    if kind == PRMP_LGFS:
        if not state.pending and item[0] > state.in_service[0]:
            old = state.in_service
            state._start(item, t)
            state.preemptions += 1
            _lgfs_admit(state, old, cap)
            return PREEMPT
        return _lgfs_admit(state, item, cap)
    if kind == NON_PRMP_LGFS or kind == INFEASIBLE_LB:
        return _lgfs_admit(state, item, cap)
    q = state.queue
    if len(q) < cap:
        q.append(item)
        return ENQUEUE
    if kind == NON_PRMP_LCFS and cap > 0:
        del q[0]  # oldest arrival
        q.append(item)
        state.replacements += 1
        return REPLACE
    state.drops += 1
    return DROP


def select_next(state: LinkState, t: float):
    """Start the next queued packet per the discipline; returns it or None."""
    state.pending = False
    q = state.queue
    if not q:
        state.in_service = None
        return None
    if state.kind == FCFS:
        item = q.popleft()
    else:
        item = q.pop()  # freshest for LGFS kinds, latest arrival for LCFS
    state._start(item, t)
    return item


def complete(state: LinkState, t: float):
    """End the current service; returns the packet that finished."""
    if state.in_service is None:
        raise RuntimeError("completion on an idle link")
    item = state.in_service
    state.in_service = None
    state.pending = True
    return item


def on_completion(state: LinkState, t: float):
    """Complete the current service and immediately pick the next packet.

    Returns ``(finished, next_or_None)``.
    """
    done = complete(state, t)
    return done, select_next(state, t)


def ip_on_arrival(state: LinkState, item, t: float) -> str:
    if state.kind != INFEASIBLE_LB:
        raise PolicyError("ip_on_arrival needs an InfeasibleLB link")
    return on_arrival(state, item, t)


def ip_on_completion(state: LinkState, t: float):
    """Busy period of the lower-bound policy ends; the packet was already
    counted as delivered when its transmission started."""
    if state.kind != INFEASIBLE_LB:
        raise PolicyError("ip_on_completion needs an InfeasibleLB link")
    return on_completion(state, t)
