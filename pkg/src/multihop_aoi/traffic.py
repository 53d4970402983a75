"""Update-packet generation and gateway arrival traces."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .distributions import DistSpec, DrawStream, StreamKey, BLOCK


class TrafficError(ValueError):
    pass


@dataclass(frozen=True)
class Packet:
    id: int
    gen_time: float
    gw_arrival: dict = field(hash=False)

    def arrival(self, gateway: int = 0) -> float:
        return self.gw_arrival[gateway]


@dataclass(frozen=True)
class TwoPointDelay:
    """Delay equal to ``d1`` with probability ``p``, else ``d2``."""

    d1: float
    d2: float
    p: float = 0.5

    def __post_init__(self):
        if self.d1 < 0 or self.d2 < 0:
            raise TrafficError("invalid delay: delays must be non-negative")
        if not 0 <= self.p <= 1:
            raise TrafficError("two_point probability must lie in [0, 1]")

    def draw(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return np.where(gen.random(size) < self.p, self.d1, self.d2)


Delay = Union[None, TwoPointDelay, DistSpec, Sequence[float]]


@dataclass(frozen=True)
class TrafficSpec:
    """Exogenous traffic description.

    ``generation`` is either a DistSpec of inter-generation times (renewal
    process, first packet one draw after t=0) or an explicit sequence of
    generation times.  ``delay`` is ``None`` (zero), a TwoPointDelay, a
    DistSpec, or an explicit per-packet sequence.
    """

    generation: Union[DistSpec, Sequence[float]]
    delay: Delay = None
    horizon: float = 1.0
    gateways: tuple = (0,)

    @classmethod
    def erlang2(cls, lam: float, horizon: float, delay: Delay = None, gateways=(0,)):
        """Erlang-2 renewal generation with mean inter-generation time 1/lam."""
        return cls(DistSpec.erlang(2, 2.0 * lam), delay, horizon, tuple(gateways))


class _Blocks:
    """Gen-compatible shim that reads a keyed stream block by block."""

    def __init__(self, key: StreamKey):
        self.key = key
        self.block = 0

    def next_gen(self) -> np.random.Generator:
        g = np.random.Generator(np.random.PCG64(self.key.block_seed(self.block)))
        self.block += 1
        return g


def _renewal(dist: DistSpec, key: StreamKey, horizon: float) -> np.ndarray:
    stream = DrawStream(dist, key)
    chunks = []
    last = 0.0
    while True:
        gaps = stream.take(BLOCK)
        times = last + np.cumsum(gaps)
        chunks.append(times)
        last = times[-1]
        if last > horizon:
            break
    s = np.concatenate(chunks)
    return s[s <= horizon]


def _delays(delay: Delay, key: StreamKey, n: int) -> np.ndarray:
    if delay is None or delay == "zero":
        return np.zeros(n)
    if isinstance(delay, DistSpec):
        return DrawStream(delay, key).take(n)
    if isinstance(delay, TwoPointDelay):
        blocks = _Blocks(key)
        out = [delay.draw(blocks.next_gen(), BLOCK) for _ in range(-(-n // BLOCK))]
        return np.concatenate(out)[:n] if out else np.zeros(0)
    d = np.asarray(delay, dtype=float)
    if len(d) < n:
        raise TrafficError(f"explicit delay list has {len(d)} entries, need {n}")
    return d[:n]


def generate(spec: TrafficSpec, stream: StreamKey) -> list[Packet]:
    """Draw packets with generation times in (0, horizon].

    Uses sub-streams ``traffic.gen`` and ``traffic.delay`` (one per gateway)
    of ``stream.master_seed``.
    """
    if not spec.horizon > 0:
        raise TrafficError("horizon must be positive")
    seed = stream.master_seed
    if isinstance(spec.generation, DistSpec):
        s = _renewal(spec.generation, StreamKey(seed, "traffic.gen"), spec.horizon)
    else:
        s = np.asarray(spec.generation, dtype=float)
        s = s[s <= spec.horizon]
    n = len(s)
    arrivals = {}
    for g in spec.gateways:
        d = _delays(spec.delay, StreamKey(seed, "traffic.delay", (g,)), n)
        if (d < 0).any():
            raise TrafficError("invalid delay: negative gateway delay")
        arrivals[g] = s + d
    packets = [
        Packet(l + 1, float(s[l]), {g: float(arrivals[g][l]) for g in spec.gateways})
        for l in range(n)
    ]
    validate(packets)
    return packets


def validate(packets: Sequence[Packet]) -> None:
    prev_s = 0.0
    prev_id = 0
    for p in packets:
        if p.id <= prev_id:
            raise TrafficError(f"packet ids must increase (id {p.id} after {prev_id})")
        if p.gen_time < prev_s:
            raise TrafficError(f"generation times must be non-decreasing (packet {p.id})")
        if p.gen_time < 0:
            raise TrafficError(f"negative generation time (packet {p.id})")
        for g, a in p.gw_arrival.items():
            if a < p.gen_time:
                raise TrafficError(
                    f"arrival precedes generation (packet {p.id}, gateway {g})"
                )
        prev_s, prev_id = p.gen_time, p.id


TRACE_HEADER = ["id", "gen_time", "gateway", "arrival_time"]


def save_trace(packets: Sequence[Packet], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for p in packets:
            for g in sorted(p.gw_arrival):
                w.writerow([p.id, repr(p.gen_time), g, repr(p.gw_arrival[g])])


def load_trace(path) -> list[Packet]:
    text = Path(path).read_text()
    if not text.strip():
        return []
    rows = csv.reader(text.splitlines())
    header = next(rows)
    if [h.strip() for h in header] != TRACE_HEADER:
        raise TrafficError(f"trace header must be {','.join(TRACE_HEADER)}")
    packets: list[Packet] = []
    cur_id = None
    cur_s = 0.0
    cur_arr: dict = {}
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        try:
            pid, s, g, a = int(row[0]), float(row[1]), int(row[2]), float(row[3])
            if len(row) != 4:
                raise ValueError
        except (ValueError, IndexError):
            raise TrafficError(f"malformed row at line {lineno}: {row!r}") from None
        if pid != cur_id:
            if cur_id is not None:
                packets.append(Packet(cur_id, cur_s, cur_arr))
            cur_id, cur_s, cur_arr = pid, s, {}
        elif s != cur_s:
            raise TrafficError(f"line {lineno}: packet {pid} has two generation times")
        cur_arr[g] = a
    if cur_id is not None:
        packets.append(Packet(cur_id, cur_s, cur_arr))
    validate(packets)
    return packets
