"""Age traces, penalty functionals, lower-bound gap and dominance checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import Deliveries, SimOutput, CouplingError
from .network import Network, hop_decompose


class MetricError(ValueError):
    pass


@dataclass
class AgeTrace:
    """Sawtooth age at one node.

    ``reset_times[k]`` is the k-th informative delivery and ``fresh[k]`` the
    generation time of the freshest packet right after it, so the age is
    ``t - fresh[k]`` on ``[reset_times[k], reset_times[k+1])`` and ``t``
    before the first reset.
    """

    node: int
    reset_times: np.ndarray
    fresh: np.ndarray
    horizon: float

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        return list(zip(self.reset_times.tolist(), (self.reset_times - self.fresh).tolist()))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.reset_times, t, side="right")
        return t - np.concatenate(([0.0], self.fresh))[idx]

    def segments(self, start: float = 0.0):
        """Linear pieces as (a, b, u): age goes from a-u to b-u on [a, b)."""
        T = self.horizon
        a = np.concatenate(([0.0], self.reset_times))
        b = np.concatenate((self.reset_times, [T]))
        u = np.concatenate(([0.0], self.fresh))
        a = np.clip(a, start, T)
        b = np.clip(b, start, T)
        return a, b, u


def age_trace(deliveries: Deliveries, horizon: float, node: int = -1) -> AgeTrace:
    """Build the age sawtooth from the arrivals recorded at a node.

    Only informative deliveries (generation time above every earlier one)
    produce a reset; simultaneous resets collapse to the freshest.
    """
    arr = np.asarray(deliveries.arrival, dtype=float)
    gen = np.asarray(deliveries.gen_time, dtype=float)
    order = np.argsort(arr, kind="stable")
    arr, gen = arr[order], gen[order]
    keep = arr <= horizon
    arr, gen = arr[keep], gen[keep]
    if len(arr) == 0:
        return AgeTrace(node, np.zeros(0), np.zeros(0), float(horizon))
    running = np.maximum.accumulate(gen)
    prev = np.concatenate(([0.0], running[:-1]))
    informative = gen > prev
    t, u = arr[informative], gen[informative]
    if len(t) > 1:
        last_at_time = np.concatenate((t[1:] != t[:-1], [True]))
        t, u = t[last_at_time], u[last_at_time]
    return AgeTrace(node, t, u, float(horizon))


def node_trace(out: SimOutput, node: int) -> AgeTrace:
    return age_trace(out.deliveries[node], out.horizon, node)


def time_average(trace: AgeTrace, warmup: float = 0.0) -> float:
    """Exact time-average of the age over ``[warmup, horizon]``."""
    T = trace.horizon
    if not T > warmup:
        raise MetricError("horizon must exceed the warm-up period")
    a, b, u = trace.segments(warmup)
    area = np.sum((b - a) * (0.5 * (a + b) - u))
    return float(area / (T - warmup))


def peaks(trace: AgeTrace) -> np.ndarray:
    """Age values just before each reset."""
    prev = np.concatenate(([0.0], trace.fresh[:-1]))
    return trace.reset_times - prev


def average_peak(trace: AgeTrace) -> float:
    """Mean of the peak ages; the unfinished ramp at the horizon is not a peak."""
    if len(trace.reset_times) == 0:
        raise MetricError("no peaks in horizon")
    return float(np.mean(peaks(trace)))


@dataclass(frozen=True)
class Penalty:
    """Non-decreasing age penalty h: 'identity', 'floor', 'exp' or 'indicator' (needs d)."""

    kind: str
    d: float | None = None

    def antiderivative(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return 0.5 * x * x
        if self.kind == "floor":
            n = np.floor(x)
            return 0.5 * n * (n - 1) + n * (x - n)
        if self.kind == "exp":
            return np.exp(x)
        if self.kind == "indicator":
            return np.maximum(0.0, x - self.d)
        raise MetricError(f"unknown penalty kind {self.kind!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x
        if self.kind == "floor":
            return np.floor(x)
        if self.kind == "exp":
            return np.exp(x)
        if self.kind == "indicator":
            return (x > self.d).astype(float)
        raise MetricError(f"unknown penalty kind {self.kind!r}")


PENALTY_KINDS = ("identity", "floor", "exp", "indicator")


def _as_penalty(h) -> Penalty:
    if isinstance(h, Penalty):
        p = h
    elif isinstance(h, str):
        p = Penalty(h)
    else:
        p = Penalty(*h)
    if p.kind not in PENALTY_KINDS:
        raise MetricError(f"unknown penalty kind {p.kind!r}; valid: {PENALTY_KINDS}")
    if p.kind == "indicator" and p.d is None:
        raise MetricError("indicator penalty needs a threshold d")
    return p


def penalty(trace: AgeTrace, h) -> float:
    """(1/T) * integral of h(age) over the horizon, exact per linear piece."""
    p = _as_penalty(h)
    a, b, u = trace.segments()
    area = np.sum(p.antiderivative(b - u) - p.antiderivative(a - u))
    return float(area / trace.horizon)


# --- lower bound and gap ---------------------------------------------------


def lower_bound_trace(ip_output: SimOutput, node: int) -> AgeTrace:
    """Age-like sawtooth that resets when a fresher packet starts
    transmission towards ``node`` under the infeasible lower-bound policy."""
    if not ip_output.is_lower_bound:
        raise MetricError(f"lower_bound_trace needs InfeasibleLB output, got {ip_output.policy}")
    return node_trace(ip_output, node)


def gap_bound(net: Network, node: int) -> tuple[float, list, list]:
    """E[X_{first hop}] + 2 * sum of E[X] over later hops on the path to ``node``."""
    hops = hop_decompose(net)
    if node not in hops.path_to:
        raise MetricError("the gap bound needs a tree network")
    path = hops.path_to[node]
    means = []
    for j in path:
        (k,) = net.in_links(j)
        means.append(net.links[k].dist.mean())
    bound = (means[0] + 2.0 * sum(means[1:])) if means else 0.0
    return bound, path, means


@dataclass
class GapReport:
    node: int
    empirical_gap: float
    analytic_bound: float
    hop_path: list
    link_means: list

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "empirical_gap": self.empirical_gap,
            "analytic_bound": self.analytic_bound,
            "hop_path": list(self.hop_path),
            "link_means": list(self.link_means),
        }


def gap_report(trace_p: AgeTrace, trace_lb: AgeTrace, net: Network) -> GapReport:
    if trace_p.node != trace_lb.node:
        raise MetricError(f"traces are for different nodes ({trace_p.node}, {trace_lb.node})")
    if trace_p.horizon != trace_lb.horizon:
        raise MetricError("traces have different horizons")
    bound, path, means = gap_bound(net, trace_p.node)
    gap = time_average(trace_p) - time_average(trace_lb)
    return GapReport(trace_p.node, gap, bound, path, means)


# --- replication statistics ----------------------------------------------


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return float(v.mean()), math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


# --- stochastic ordering checks ------------------------------------------


@dataclass
class DominanceReport:
    kind: str
    holds: bool
    violations: int
    checked: int
    equal_everywhere: bool = False
    examples: list = field(default_factory=list)


def _samplewise(a: SimOutput, b: SimOutput, nodes) -> tuple[int, int, bool, list]:
    if a.coupling is None or a.coupling != b.coupling:
        raise CouplingError("samplewise dominance needs outputs from one coupled run")
    bad = 0
    total = 0
    equal = True
    ex = []
    for j in nodes:
        times = np.union1d(a.u_trace[j][0], b.u_trace[j][0])
        times = np.concatenate(([0.0], times))
        ua, ub = a.u_at(j, times), b.u_at(j, times)
        viol = ua < ub
        bad += int(viol.sum())
        total += len(times)
        equal = equal and bool(np.array_equal(ua, ub))
        if viol.any() and len(ex) < 5:
            i = int(np.argmax(viol))
            ex.append({"seed": a.seed, "node": j, "time": float(times[i]),
                       "u_a": float(ua[i]), "u_b": float(ub[i])})
    return bad, total, equal, ex


def dominance_test(
    pairs,
    kind: str = "samplewise",
    *,
    nodes=None,
    probe_times=None,
    thresholds=None,
    confidence: float = 0.999,
    min_reps: int = 200,
) -> DominanceReport:
    """Check that policy A's age is dominated by policy B's.

    samplewise: ``pairs`` is a list of coupled ``(out_a, out_b)``; asserts
    U_A(t) >= U_B(t) at every merged event time of every node.

    distributional: ``pairs`` is ``(outs_a, outs_b)``, two lists of
    independent replications; at each probe time and threshold x the
    empirical P{age_A(t) > x} may exceed P{age_B(t) > x} by at most the sum
    of the two DKW half-widths, and a violation is counted only when this
    fails at two adjacent thresholds.
    """
    if kind == "samplewise":
        bad = total = 0
        equal = True
        ex: list = []
        for a, b in pairs:
            ns = range(a.node_count) if nodes is None else nodes
            v, n, e, x = _samplewise(a, b, ns)
            bad += v
            total += n
            equal = equal and e
            ex.extend(x[: max(0, 5 - len(ex))])
        return DominanceReport("samplewise", bad == 0, bad, total, equal, ex)
    if kind != "distributional":
        raise MetricError(f"unknown dominance kind {kind!r}")
    outs_a, outs_b = pairs
    if min(len(outs_a), len(outs_b)) < min_reps:
        raise MetricError(f"distributional dominance needs at least {min_reps} replications")
    T = min(o.horizon for o in (*outs_a, *outs_b))
    probe_times = np.linspace(0.1 * T, T, 10) if probe_times is None else np.asarray(probe_times)
    ns = range(outs_a[0].node_count) if nodes is None else nodes
    alpha = 1.0 - confidence
    eps = lambda n: math.sqrt(math.log(2.0 / alpha) / (2.0 * n))  # noqa: E731
    band = eps(len(outs_a)) + eps(len(outs_b))
    bad = total = 0
    ex = []
    for j in ns:
        for t in probe_times:
            age_a = np.array([t - o.u_at(j, t) for o in outs_a])
            age_b = np.array([t - o.u_at(j, t) for o in outs_b])
            xs = (
                np.quantile(np.concatenate((age_a, age_b)), np.linspace(0.02, 0.98, 25))
                if thresholds is None else np.asarray(thresholds)
            )
            pa = (age_a[:, None] > xs[None, :]).mean(axis=0)
            pb = (age_b[:, None] > xs[None, :]).mean(axis=0)
            over = (pa - pb) > band
            runs = over[1:] & over[:-1]
            total += len(xs)
            if runs.any():
                bad += int(runs.sum())
                if len(ex) < 5:
                    ex.append({"node": j, "time": float(t), "x": float(xs[int(np.argmax(runs))])})
    return DominanceReport("distributional", bad == 0, bad, total, False, ex)
