"""Coupled runs: the same traffic and the same service randomness feed every
discipline, so orderings in distribution show up path by path.
"""

from multihop_aoi import PolicySpec, dominance_test, run_coupled
from multihop_aoi import experiments as ex

traffic = ex.TrafficConfig(lam=1.0, delay=ex.OUT_OF_ORDER)  # delays 1 or 100, so arrivals reorder

# exponential mesh, shared Poisson clocks per link
net = ex.fig5_network()
pairs = {name: [] for name in ("NonPrmpLGFS", "NonPrmpLCFS", "FCFS")}
for seed in range(20):
    pk = traffic.packets(500.0, seed)
    best, *rest = run_coupled(net, pk, [PolicySpec("PrmpLGFS")] + [PolicySpec(k) for k in pairs],
                              "uniformization", 500.0, seed)
    for k, o in zip(pairs, rest):
        pairs[k].append((best, o))
for k, pr in pairs.items():
    r = dominance_test(pr)
    print(f"PrmpLGFS vs {k:12s}: {r.violations} violations in {r.checked} checks")

# flip the claim: FCFS is not the best, and the checker says so
pr = []
for seed in range(5):
    pk = traffic.packets(500.0, seed)
    pr.append(tuple(run_coupled(net, pk, [PolicySpec("FCFS"), PolicySpec("PrmpLGFS")],
                                "uniformization", 500.0, seed)))
r = dominance_test(pr)
print("FCFS vs PrmpLGFS:", r.violations, "violations, e.g.", r.examples[0])
