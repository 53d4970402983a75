"""Discrete-event simulation of a multihop network under a scheduling policy.

Event order at equal timestamps: service completions and uniformization
ticks, then packet arrivals at nodes, then deferred next-packet decisions of
links that just finished a service.  A decision is deferred only when other
events share its timestamp; this lets a packet that arrives at the very
instant a link frees up compete for the server.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import policies as pol
from .distributions import DistSpec, DrawStream, StreamKey
from .network import Network
from .traffic import Packet

INDEPENDENT = "independent"
SHARED_DRAWS = "shared_draws"
UNIFORMIZATION = "uniformization"
MODES = (INDEPENDENT, SHARED_DRAWS, UNIFORMIZATION)

_COMPLETE, _TICK, _ARRIVE, _DECIDE = 0, 1, 2, 3


class SimulationError(RuntimeError):
    pass


class CouplingError(ValueError):
    pass


@dataclass
class Deliveries:
    """Arrivals of packets at one node, in the order they happened."""

    ids: np.ndarray
    gen_time: np.ndarray
    arrival: np.ndarray

    def __len__(self):
        return len(self.ids)


@dataclass
class SimOutput:
    policy: str
    kinds: frozenset
    seed: int
    horizon: float
    node_count: int
    deliveries: dict  # node -> Deliveries
    u_trace: dict  # node -> (times, values); U jumps to values[k] at times[k]
    counters: dict
    link_keys: list
    link_epochs: list  # per link: service completion (busy-end) times
    service_spans: list  # per link: (start, end) arrays of completed services
    mode: str = SHARED_DRAWS
    coupling: str | None = None
    config: dict = field(default_factory=dict)

    @property
    def is_lower_bound(self) -> bool:
        return self.kinds == frozenset({pol.INFEASIBLE_LB})

    def u_at(self, node: int, t) -> np.ndarray:
        times, values = self.u_trace[node]
        idx = np.searchsorted(times, np.asarray(t, dtype=float), side="right") - 1
        vals = np.concatenate(([0.0], values))
        return vals[idx + 1]

    def write_deliveries(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "packet", "gen_time", "arrival_time"])
            for j in sorted(self.deliveries):
                d = self.deliveries[j]
                for pid, s, a in zip(d.ids, d.gen_time, d.arrival):
                    w.writerow([j, int(pid), repr(float(s)), repr(float(a))])

    def write_u_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "time", "freshest_gen_time"])
            for j in sorted(self.u_trace):
                for t, u in zip(*self.u_trace[j]):
                    w.writerow([j, repr(float(t)), repr(float(u))])


def _prepare(net: Network, policy: pol.PolicySpec) -> Network:
    if policy.buffer is not None:
        net = net.with_buffers(policy.buffer)
    if pol.INFEASIBLE_LB in policy.kinds():
        if not net.tree_restricted:
            raise pol.PolicyError("InfeasibleLB is defined only on tree networks")
        if any(ln.buffer < 1 for ln in net.links):
            raise pol.PolicyError("InfeasibleLB needs buffer >= 1 on every link")
    return net


def _simulate(
    net: Network,
    packets: Sequence[Packet],
    policy: pol.PolicySpec,
    horizon: float,
    seed: int,
    *,
    mode: str = SHARED_DRAWS,
    salt: int = 0,
    coupling: str | None = None,
    check: bool = False,
    forward_duplicates: bool = True,
) -> SimOutput:
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    net = _prepare(net, policy)
    L = len(net.links)
    N = net.node_count
    kinds = [policy.kind_for(ln.key) for ln in net.links]
    states = [pol.LinkState(kinds[k], net.links[k].buffer) for k in range(L)]
    is_ip = [kd == pol.INFEASIBLE_LB for kd in kinds]
    dest = [ln.dest for ln in net.links]
    out_links = [[] for _ in range(N)]
    for k, ln in enumerate(net.links):
        out_links[ln.origin].append(k)
    uniform = mode == UNIFORMIZATION

    if uniform:
        draws = None
        ticks = [
            DrawStream(DistSpec.exponential(ln.dist.service_rate()), StreamKey(seed, "tick", (k,)))
            for k, ln in enumerate(net.links)
        ]
    else:
        draws = [
            DrawStream(ln.dist, StreamKey(seed, "service", (k, salt)))
            for k, ln in enumerate(net.links)
        ]

    # external arrivals, merged lazily with the event heap
    ext = sorted(
        (a, g, p.id, p.gen_time) for p in packets for g, a in p.gw_arrival.items()
    )
    ext = [e for e in ext if e[0] <= horizon]
    n_ext = len(ext)

    heap: list = []
    push = heapq.heappush
    pop = heapq.heappop
    seqc = 0
    tokens = [0] * L

    d_ids = [[] for _ in range(N)]
    d_gen = [[] for _ in range(N)]
    d_arr = [[] for _ in range(N)]
    u_cur = [0.0] * N
    u_t = [[] for _ in range(N)]
    u_v = [[] for _ in range(N)]
    epochs = [[] for _ in range(L)]
    span_s = [[] for _ in range(L)]
    span_e = [[] for _ in range(L)]
    seen = [set() for _ in range(N)] if not forward_duplicates else None
    completions = 0

    if uniform:
        for k in range(L):
            seqc += 1
            push(heap, (ticks[k](), 0, k, seqc, _TICK, None))

    def begin(k, t):
        nonlocal seqc
        st = states[k]
        if is_ip[k]:
            seqc += 1
            s, pid, _ = st.in_service
            push(heap, (t, 1, dest[k], seqc, _ARRIVE, (s, pid)))
        if not uniform:
            tokens[k] += 1
            seqc += 1
            push(heap, (t + draws[k](), 0, k, seqc, _COMPLETE, tokens[k]))

    def arrive(j, t, s, pid):
        d_ids[j].append(pid)
        d_gen[j].append(s)
        d_arr[j].append(t)
        if s > u_cur[j]:
            u_cur[j] = s
            u_t[j].append(t)
            u_v[j].append(s)
        if seen is not None:
            if pid in seen[j]:
                return
            seen[j].add(pid)
        for k in out_links[j]:
            st = states[k]
            act = pol.on_arrival(st, st.entry(s, pid), t)
            if act is pol.START or act is pol.PREEMPT:
                begin(k, t)

    def finish(k, t, next_ext_t):
        nonlocal seqc, completions
        st = states[k]
        start = st.start
        item = pol.complete(st, t)
        completions += 1
        epochs[k].append(t)
        span_s[k].append(start)
        span_e[k].append(t)
        if (heap and heap[0][0] == t) or next_ext_t == t:
            seqc += 1
            push(heap, (t, 2, k, seqc, _DECIDE, None))
        elif pol.select_next(st, t) is not None:
            begin(k, t)
        if not is_ip[k]:
            seqc += 1
            push(heap, (t, 1, dest[k], seqc, _ARRIVE, (item[0], item[1])))

    i_ext = 0
    inf = math.inf
    while True:
        if i_ext < n_ext:
            a, g, pid, s = ext[i_ext]
            if heap and heap[0][:3] < (a, 1, g):
                ev = pop(heap)
            else:
                i_ext += 1
                nxt = ext[i_ext][0] if i_ext < n_ext else inf
                arrive(g, a, s, pid)
                if check:
                    _check_states(states)
                continue
        elif heap:
            ev = pop(heap)
        else:
            break
        t, _, ent, _, kind, data = ev
        if t > horizon:
            break
        nxt = ext[i_ext][0] if i_ext < n_ext else inf
        if kind == _COMPLETE:
            if data == tokens[ent] and states[ent].in_service is not None:
                finish(ent, t, nxt)
        elif kind == _ARRIVE:
            arrive(ent, t, data[0], data[1])
        elif kind == _DECIDE:
            if pol.select_next(states[ent], t) is not None:
                begin(ent, t)
        else:  # tick
            seqc += 1
            push(heap, (t + ticks[ent](), 0, ent, seqc, _TICK, None))
            if states[ent].in_service is not None:
                finish(ent, t, nxt)
        if check:
            _check_states(states)

    deliveries = {
        j: Deliveries(
            np.asarray(d_ids[j], dtype=np.int64),
            np.asarray(d_gen[j], dtype=float),
            np.asarray(d_arr[j], dtype=float),
        )
        for j in range(N)
    }
    u_trace = {j: (np.asarray(u_t[j], dtype=float), np.asarray(u_v[j], dtype=float)) for j in range(N)}
    counters = {
        "drops": sum(st.drops for st in states),
        "replacements": sum(st.replacements for st in states),
        "preemptions": sum(st.preemptions for st in states),
        "completions": completions,
        "external_arrivals": n_ext,
    }
    return SimOutput(
        policy=policy.name,
        kinds=frozenset(kinds),
        seed=seed,
        horizon=float(horizon),
        node_count=N,
        deliveries=deliveries,
        u_trace=u_trace,
        counters=counters,
        link_keys=[ln.key for ln in net.links],
        link_epochs=[np.asarray(e) for e in epochs],
        service_spans=[(np.asarray(a), np.asarray(b)) for a, b in zip(span_s, span_e)],
        mode=mode,
        coupling=coupling,
        config={"policy": policy.to_spec(), "network": net.to_spec(), "mode": mode},
    )


def _check_states(states) -> None:
    for k, st in enumerate(states):
        if st.pending:
            continue
        if st.in_service is None and st.queue:
            raise SimulationError(f"link {k} idle with a non-empty queue")
        if len(st.queue) > st.capacity:
            raise SimulationError(f"link {k} queue exceeds its buffer")


def run(
    net: Network,
    packets: Sequence[Packet],
    policy: pol.PolicySpec,
    horizon: float,
    seed: int,
    *,
    uniformize: bool = False,
    check: bool = False,
    forward_duplicates: bool = True,
) -> SimOutput:
    """Simulate one policy.

    Service times come from per-link keyed streams: the k-th service started
    on a link uses draw k of that link's stream.  With ``uniformize=True`` all
    links must be exponential and services end at ticks of per-link Poisson
    clocks instead.
    """
    mode = UNIFORMIZATION if uniformize else SHARED_DRAWS
    if uniformize:
        _require_exponential(net)
    return _simulate(
        net, packets, policy, horizon, seed, mode=mode, check=check,
        forward_duplicates=forward_duplicates,
    )


def _require_exponential(net: Network) -> None:
    bad = [ln.key for ln in net.links if not ln.dist.is_exponential]
    if bad:
        raise CouplingError(f"uniformization needs exponential links; not exponential: {bad}")


def _coupling_tag(mode: str, seed: int, packets: Sequence[Packet]) -> str:
    h = hashlib.sha1(f"{mode}|{seed}|{len(packets)}".encode())
    for p in packets[:64]:
        h.update(repr((p.id, p.gen_time, sorted(p.gw_arrival.items()))).encode())
    return h.hexdigest()[:16]


def run_coupled(
    net: Network,
    packets: Sequence[Packet],
    policies: Sequence[pol.PolicySpec],
    mode: str,
    horizon: float,
    seed: int,
    *,
    check: bool = False,
    forward_duplicates: bool = True,
) -> list[SimOutput]:
    """Run several policies on the same traffic with coupled randomness.

    ``uniformization``: per-link Poisson clocks shared by all policies (all
    links exponential).  ``shared_draws``: the k-th service on a link uses the
    same draw in every policy (non-preemptive policies only).
    ``independent``: each policy gets its own service streams.
    """
    if mode not in MODES:
        raise CouplingError(f"unknown coupling mode {mode!r}; valid: {MODES}")
    if mode == UNIFORMIZATION:
        _require_exponential(net)
    if mode == SHARED_DRAWS:
        pre = [p.name for p in policies if p.kinds() & pol.PREEMPTIVE]
        if pre:
            raise CouplingError(f"shared_draws coupling needs non-preemptive policies; got {pre}")
    tag = None if mode == INDEPENDENT else _coupling_tag(mode, seed, packets)
    return [
        _simulate(
            net, packets, p, horizon, seed, mode=mode,
            salt=(i + 1 if mode == INDEPENDENT else 0), coupling=tag, check=check,
            forward_duplicates=forward_duplicates,
        )
        for i, p in enumerate(policies)
    ]
