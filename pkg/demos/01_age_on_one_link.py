"""Age sawtooth on a single link.

Packets come from an Erlang-2 source, cross one exponential link and we
look at the age at the far end under two disciplines.
"""

import math

import numpy as np

from multihop_aoi import (
    DistSpec, Link, Network, PolicySpec, StreamKey, TrafficSpec, generate, run,
    node_trace, time_average, average_peak, penalty,
)

net = Network(2, (Link(0, 1, math.inf, DistSpec.exponential(1.0)),))
packets = generate(TrafficSpec.erlang2(0.8, 5000.0), StreamKey(1, "traffic"))
print(len(packets), "packets, first three:", [round(p.gen_time, 3) for p in packets[:3]])

for kind in ("FCFS", "NonPrmpLGFS", "PrmpLGFS"):
    out = run(net, packets, PolicySpec(kind), 5000.0, seed=1)
    tr = node_trace(out, 1)
    print(f"{kind:12s} g1={time_average(tr):7.3f}  g2={average_peak(tr):7.3f}"
          f"  P(age>3)={penalty(tr, ('indicator', 3.0)):.3f}  resets={len(tr.reset_times)}")

# the trace itself is a plain function of time
tr = node_trace(run(net, packets, PolicySpec("PrmpLGFS"), 5000.0, seed=1), 1)
t = np.linspace(0, 10, 6)
print("age at", t, "->", np.round(tr(t), 3))
