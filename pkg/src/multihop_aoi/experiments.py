"""Experiment configuration, replication/sweep driver, figure presets and the
coupled-ordering verification battery."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from . import engine, metrics
from . import policies as pol
from .distributions import DistSpec, StreamKey
from .network import Network, build_network, INF
from .traffic import TrafficSpec, TwoPointDelay, generate, load_trace

METRIC_COLUMNS = ["run_id", "seed", "node", "policy", "metric", "value"]
SUMMARY_COLUMNS = ["sweep_variable", "sweep_value", "policy", "node", "metric", "mean", "se", "n"]


class ConfigError(ValueError):
    pass


# --- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class MetricSpec:
    name: str  # g1 | g2 | g3 | gap
    node: int
    h: str | None = None
    d: float | None = None
    warmup: float = 0.0

    def to_dict(self) -> dict:
        d = {"name": self.name, "node": self.node}
        if self.h is not None:
            d["h"] = self.h
        if self.d is not None:
            d["d"] = self.d
        if self.warmup:
            d["warmup"] = self.warmup
        return d


@dataclass(frozen=True)
class TrafficConfig:
    """Traffic settings; ``lam`` is shorthand for Erlang-2 generation with mean 1/lam."""

    lam: float | None = None
    generation: DistSpec | None = None
    delay: object = None
    trace: str | None = None
    gateways: tuple = (0,)

    def spec(self, horizon: float) -> TrafficSpec:
        if self.generation is not None:
            gen = self.generation
        elif self.lam is not None:
            gen = DistSpec.erlang(2, 2.0 * self.lam)
        else:
            raise ConfigError("traffic needs 'lambda', 'generation' or 'trace'")
        return TrafficSpec(gen, self.delay, horizon, tuple(self.gateways))

    def packets(self, horizon: float, seed: int):
        if self.trace is not None:
            return [p for p in load_trace(self.trace) if p.gen_time <= horizon]
        return generate(self.spec(horizon), StreamKey(seed, "traffic"))

    def to_dict(self) -> dict:
        d: dict = {}
        if self.lam is not None:
            d["lambda"] = self.lam
        if self.generation is not None:
            d["generation"] = self.generation.to_spec()
        if self.trace is not None:
            d["trace"] = self.trace
        if self.delay is None:
            d["delay"] = "zero"
        elif isinstance(self.delay, TwoPointDelay):
            d["delay"] = {"kind": "two_point", "d1": self.delay.d1, "d2": self.delay.d2, "p": self.delay.p}
        else:
            d["delay"] = self.delay.to_spec()
        d["gateways"] = list(self.gateways)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrafficConfig":
        delay = d.get("delay", "zero")
        if delay == "zero":
            delay = None
        elif delay.get("kind") == "two_point":
            delay = TwoPointDelay(delay["d1"], delay["d2"], delay.get("p", 0.5))
        else:
            delay = DistSpec.from_spec(delay)
        gen = d.get("generation")
        return cls(
            lam=d.get("lambda"),
            generation=DistSpec.from_spec(gen) if gen is not None else None,
            delay=delay,
            trace=d.get("trace"),
            gateways=tuple(d.get("gateways", [0])),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    network: Network
    traffic: TrafficConfig
    policies: tuple
    horizon: float
    coupling: str = engine.INDEPENDENT
    replications: int = 1
    seed: int = 0
    metrics: tuple = ()
    sweep: tuple | None = None  # (variable, values)
    name: str = "experiment"

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "network": self.network.to_spec(),
            "traffic": self.traffic.to_dict(),
            "policies": [p.to_spec() for p in self.policies],
            "coupling": self.coupling,
            "horizon": self.horizon,
            "replications": self.replications,
            "seed": self.seed,
            "metrics": [m.to_dict() for m in self.metrics],
        }
        if self.sweep is not None:
            var, values = self.sweep
            d["sweep"] = {"variable": var, "values": ["inf" if v == INF else v for v in values]}
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _schema() -> dict:
    text = resources.files("multihop_aoi").joinpath("config.schema.json").read_text()
    return json.loads(text)


def _locate(text: str, path) -> int | None:
    """Best-effort line number of the JSON element at ``path``."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            i = text.find(f'"{key}"', pos)
            if i < 0:
                break
            pos = i
        else:
            # skip to the key-th element start of the next array
            i = text.find("[", pos)
            if i < 0:
                break
            pos = i + 1
            for _ in range(key):
                i = text.find("{", pos)
                if i < 0:
                    break
                depth, j = 0, i
                while j < len(text):
                    if text[j] == "{":
                        depth += 1
                    elif text[j] == "}":
                        depth -= 1
                        if depth == 0:
                            break
                    j += 1
                pos = j + 1
    return text.count("\n", 0, pos) + 1 if text else None


def parse_config(source, *, base_dir=None) -> ExperimentConfig:
    """Parse and validate a configuration from JSON text, a dict or a path."""
    text = None
    if isinstance(source, (str, Path)) and not str(source).lstrip().startswith("{"):
        path = Path(source)
        base_dir = base_dir or path.parent
        text = path.read_text()
    elif isinstance(source, str):
        text = source
    if text is not None:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from None
    else:
        data = source
    try:
        jsonschema.validate(data, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        line = _locate(text, list(exc.absolute_path)) if text else None
        prefix = f"line {line}: " if line else ""
        msg = exc.message
        if exc.validator == "enum" and "kind" in exc.absolute_path:
            msg = f"unknown kind {exc.instance!r}; valid kinds: {', '.join(exc.validator_value)}"
        raise ConfigError(f"{prefix}{where}: {msg}") from None
    try:
        return _from_dict(data, base_dir)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def _buffer(v):
    return INF if v == "inf" else v


def _from_dict(d: dict, base_dir=None) -> ExperimentConfig:
    net = build_network(d["network"])
    traffic = TrafficConfig.from_dict(d["traffic"])
    if traffic.trace and base_dir is not None and not os.path.isabs(traffic.trace):
        traffic = replace(traffic, trace=str(Path(base_dir) / traffic.trace))
    for g in traffic.gateways:
        if g not in net.gateways:
            raise ConfigError(f"traffic gateway {g} is not a network gateway")
    policies = []
    for p in d["policies"]:
        overrides = {(o["from"], o["to"]): o["kind"] for o in p.get("overrides", [])}
        b = p.get("buffer")
        policies.append(pol.PolicySpec(p["kind"], None if b is None else _buffer(b), overrides, p.get("label")))
    names = [p.name for p in policies]
    if len(set(names)) != len(names):
        raise ConfigError(f"policy names must be unique, got {names}; add labels")
    ms = tuple(
        MetricSpec(m["name"], m["node"], m.get("h"), m.get("d"), m.get("warmup", 0.0))
        for m in d.get("metrics", [{"name": "g1", "node": net.node_count - 1}])
    )
    for m in ms:
        if m.node >= net.node_count:
            raise ConfigError(f"metric {m.name} references missing node {m.node}")
        if m.name == "g3" and m.h is None:
            raise ConfigError("metric g3 needs a penalty 'h'")
    sweep = None
    if "sweep" in d:
        sweep = (d["sweep"]["variable"], tuple(_buffer(v) for v in d["sweep"]["values"]))
    return ExperimentConfig(
        network=net,
        traffic=traffic,
        policies=tuple(policies),
        horizon=float(d["horizon"]),
        coupling=d.get("coupling", engine.INDEPENDENT),
        replications=int(d.get("replications", 1)),
        seed=int(d.get("seed", 0)),
        metrics=ms,
        sweep=sweep,
        name=d.get("name", "experiment"),
    )


# --- execution -----------------------------------------------------------------


def apply_sweep(cfg: ExperimentConfig, variable: str, value):
    """Network, traffic and policies with one sweep variable set."""
    net, traffic, policies = cfg.network, cfg.traffic, cfg.policies
    if variable == "lambda":
        traffic = replace(traffic, lam=float(value), generation=None)
    elif variable == "beta":
        net = net.with_dists(
            lambda ln: DistSpec.gamma_with_mean(float(value), ln.dist.mean())
            if ln.dist.kind == "gamma" else ln.dist
        )
    elif variable == "buffer":
        policies = tuple(replace(p, buffer=value) for p in policies)
    else:
        raise ConfigError(f"unknown sweep variable {variable!r}")
    return net, traffic, policies


def simulate_point(net, packets, policies, mode, horizon, seed, **kw) -> dict:
    """Run every policy on one traffic realization; returns name -> SimOutput.

    Under ``shared_draws`` preemptive policies are run on the same keyed
    service streams but are not part of the coupled set.
    """
    if mode == engine.SHARED_DRAWS:
        out = {}
        coupled = [p for p in policies if not (p.kinds() & pol.PREEMPTIVE)]
        for p, o in zip(coupled, engine.run_coupled(net, packets, coupled, mode, horizon, seed, **kw)):
            out[p.name] = o
        for p in policies:
            if p.name not in out:
                out[p.name] = engine.run(net, packets, p, horizon, seed, **kw)
        return {p.name: out[p.name] for p in policies}
    outs = engine.run_coupled(net, packets, list(policies), mode, horizon, seed, **kw)
    return {p.name: o for p, o in zip(policies, outs)}


def evaluate(outputs: dict, ms: Sequence[MetricSpec], net: Network) -> list[tuple]:
    """Metric values as (policy, node, metric, value, gap_report_or_None)."""
    rows = []
    lb = next((o for o in outputs.values() if o.is_lower_bound), None)
    for name, out in outputs.items():
        for m in ms:
            trace = metrics.node_trace(out, m.node)
            if m.name == "g1":
                rows.append((name, m.node, "g1", metrics.time_average(trace, m.warmup), None))
            elif m.name == "g2":
                try:
                    v = metrics.average_peak(trace)
                except metrics.MetricError:
                    v = math.nan
                rows.append((name, m.node, "g2", v, None))
            elif m.name == "g3":
                h = (m.h, m.d) if m.h == "indicator" else m.h
                rows.append((name, m.node, f"g3_{m.h}", metrics.penalty(trace, h), None))
            elif m.name == "gap":
                if lb is None:
                    raise ConfigError("metric 'gap' needs an InfeasibleLB policy in the policy list")
                if out is lb:
                    continue
                rep = metrics.gap_report(trace, metrics.lower_bound_trace(lb, m.node), net)
                rows.append((name, m.node, "gap", rep.empirical_gap, rep))
    return rows


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list  # dicts with METRIC_COLUMNS plus sweep_value
    gap_reports: list = field(default_factory=list)

    def summary(self) -> list[dict]:
        var = self.config.sweep[0] if self.config.sweep else ""
        groups: dict = {}
        for r in self.rows:
            key = (r["sweep_value"], r["policy"], r["node"], r["metric"])
            groups.setdefault(key, []).append(r["value"])
        out = []
        for (sv, p, node, metric), vals in groups.items():
            vals = [v for v in vals if not math.isnan(v)]
            mean, se = metrics.mean_se(vals) if vals else (math.nan, math.nan)
            out.append({
                "sweep_variable": var, "sweep_value": sv, "policy": p, "node": node,
                "metric": metric, "mean": mean, "se": se, "n": len(vals),
            })
        return out

    def values(self, policy: str, metric: str, node: int, sweep_value="") -> np.ndarray:
        """Per-replication values in replication order."""
        return np.array([
            r["value"] for r in self.rows
            if r["policy"] == policy and r["metric"] == metric and r["node"] == node
            and r["sweep_value"] == sweep_value
        ])


def run_experiment(cfg: ExperimentConfig, *, progress=None) -> ExperimentResult:
    """Run all replications (and sweep points); seeds are ``seed + rep``.

    The same replication seed is reused across sweep points, so traffic and
    service randomness are common across the sweep.
    """
    points = [("", None)] if cfg.sweep is None else [(v, v) for v in cfg.sweep[1]]
    rows = []
    gaps = []
    for sv, value in points:
        if value is None:
            net, traffic, policies = cfg.network, cfg.traffic, cfg.policies
        else:
            net, traffic, policies = apply_sweep(cfg, cfg.sweep[0], value)
        for rep in range(cfg.replications):
            seed = cfg.seed + rep
            packets = traffic.packets(cfg.horizon, seed)
            outs = simulate_point(net, packets, policies, cfg.coupling, cfg.horizon, seed)
            tag = f"{cfg.name}:" + (f"{cfg.sweep[0]}={_fmt(sv)}:" if value is not None else "") + f"rep{rep}"
            for name, node, metric, v, rep_obj in evaluate(outs, cfg.metrics, net):
                rows.append({
                    "run_id": tag, "seed": seed, "node": node, "policy": name,
                    "metric": metric, "value": v, "sweep_value": _fmt(sv),
                })
                if rep_obj is not None:
                    gaps.append({"run_id": tag, "policy": name, **rep_obj.to_dict()})
            if progress:
                progress(tag)
    return ExperimentResult(cfg, rows, gaps)


def _fmt(v) -> str:
    if v == "" or v is None:
        return ""
    if v == INF:
        return "inf"
    return repr(float(v)) if not isinstance(v, str) else v


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


def write_results(result: ExperimentResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    files = [out / "metrics.csv", out / "summary.csv", out / "config.json"]
    _atomic_write(files[0], _csv_text(result.rows, METRIC_COLUMNS))
    _atomic_write(files[1], _csv_text(result.summary(), SUMMARY_COLUMNS))
    _atomic_write(files[2], result.config.dumps() + "\n")
    if result.gap_reports:
        files.append(out / "gap_reports.json")
        _atomic_write(files[-1], json.dumps(result.gap_reports, indent=1) + "\n")
    return files


# --- figure presets ----------------------------------------------------------------

FIG5_LINKS = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]
FIG6_LINKS = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 6), (1, 7), (2, 8), (3, 9), (4, 10), (7, 11)]
LAMBDA_GRID = tuple(float(x) for x in np.logspace(np.log10(0.05), np.log10(5.0), 20))
BETA_GRID = (0.5, 1.0, 2.0, 3.0, 4.0, 5.0)
OUT_OF_ORDER = TwoPointDelay(1.0, 100.0, 0.5)


def _net(n, links, dists, buffer=INF) -> Network:
    return build_network({
        "nodes": n,
        "links": [{"from": i, "to": j, "buffer": buffer, "dist": dists[(i, j)]} for i, j in links],
    })


def fig5_network(buffer=INF) -> Network:
    """Four-node mesh with exponential links; (1,3) and (2,3) take mean 1."""
    means = {(0, 1): 1.0, (0, 2): 0.5, (1, 2): 1.0, (1, 3): 1.0, (2, 3): 1.0}
    return _net(4, FIG5_LINKS, {k: DistSpec.exponential(1.0 / m) for k, m in means.items()}, buffer)


def fig7_network(buffer=INF, gamma_shape: float = 2.0) -> Network:
    g = DistSpec.gamma_with_mean(gamma_shape, 1.0)
    se = DistSpec.shifted_exponential(0.5, 2.0)
    dists = {(0, 1): g, (1, 3): g, (0, 2): se, (1, 2): se, (2, 3): se}
    return _net(4, FIG5_LINKS, dists, buffer)


def fig6_network(beta: float = 3.0, buffer=1) -> Network:
    """12-node tree holding the 5-hop chain 0-1-2-3-4-5; gamma links of mean 0.2."""
    d = DistSpec.gamma_with_mean(beta, 0.2)
    return _net(12, FIG6_LINKS, {k: d for k in FIG6_LINKS}, buffer)


def _policies(*items) -> tuple:
    return tuple(pol.PolicySpec(kind, buf) for kind, buf in items)


def fig5_config(horizon=2000.0, replications=10, seed=0, grid=LAMBDA_GRID) -> ExperimentConfig:
    return ExperimentConfig(
        network=fig5_network(),
        traffic=TrafficConfig(lam=1.0, delay=OUT_OF_ORDER),
        policies=_policies(
            (pol.PRMP_LGFS, 1), (pol.NON_PRMP_LGFS, 1), (pol.NON_PRMP_LGFS, INF),
            (pol.NON_PRMP_LCFS, 1), (pol.NON_PRMP_LCFS, INF), (pol.FCFS, 1), (pol.FCFS, INF),
        ),
        horizon=horizon,
        coupling=engine.UNIFORMIZATION,
        replications=replications,
        seed=seed,
        metrics=(MetricSpec("g2", 2),),
        sweep=("lambda", tuple(grid)),
        name="fig5",
    )


def fig6_config(horizon=2000.0, replications=10, seed=0, grid=BETA_GRID, lam=30.0) -> ExperimentConfig:
    return ExperimentConfig(
        network=fig6_network(3.0),
        traffic=TrafficConfig(lam=lam),
        policies=_policies(
            (pol.PRMP_LGFS, 1), (pol.NON_PRMP_LGFS, 1), (pol.NON_PRMP_LGFS, 10),
            (pol.NON_PRMP_LGFS, 100), (pol.NON_PRMP_LCFS, 1), (pol.FCFS, 1),
            (pol.INFEASIBLE_LB, 1),
        ),
        horizon=horizon,
        coupling=engine.SHARED_DRAWS,
        replications=replications,
        seed=seed,
        metrics=(MetricSpec("g1", 5), MetricSpec("gap", 5)),
        sweep=("beta", tuple(grid)),
        name="fig6",
    )


def fig7_config(horizon=2000.0, replications=10, seed=0, grid=LAMBDA_GRID) -> ExperimentConfig:
    return ExperimentConfig(
        network=fig7_network(),
        traffic=TrafficConfig(lam=1.0, delay=OUT_OF_ORDER),
        policies=_policies(
            (pol.NON_PRMP_LGFS, 1), (pol.NON_PRMP_LGFS, INF), (pol.NON_PRMP_LCFS, 1),
            (pol.NON_PRMP_LCFS, INF), (pol.FCFS, 1), (pol.FCFS, INF),
        ),
        horizon=horizon,
        coupling=engine.SHARED_DRAWS,
        replications=replications,
        seed=seed,
        metrics=(MetricSpec("g1", 3),),
        sweep=("lambda", tuple(grid)),
        name="fig7",
    )


PRESETS = {"fig5": fig5_config, "fig6": fig6_config, "fig7": fig7_config}


# --- verification battery ---------------------------------------------------


@dataclass
class Verdict:
    name: str
    report: metrics.DominanceReport

    @property
    def passed(self) -> bool:
        return self.report.holds


def _samplewise_suite(name, net, traffic, best, others, mode, seeds, horizon, seed0):
    verdicts = []
    pairs = {o.name: [] for o in others}
    for r in range(seeds):
        seed = seed0 + r
        packets = traffic.packets(horizon, seed)
        outs = engine.run_coupled(net, packets, [best, *others], mode, horizon, seed)
        for o, out in zip(others, outs[1:]):
            pairs[o.name].append((outs[0], out))
    for o in others:
        rep = metrics.dominance_test(pairs[o.name], "samplewise")
        verdicts.append(Verdict(f"{name}: {best.name} >= {o.name}", rep))
    return verdicts


def verify_battery(seeds=100, horizon=1000.0, lam=1.0, seed=0, inverted=False) -> list[Verdict]:
    """Coupled samplewise dominance checks with unlimited buffers.

    exponential links under uniformization: PrmpLGFS against itself and the
    non-preemptive disciplines; gamma / shifted-exponential links under
    shared draws: NonPrmpLGFS against FCFS and NonPrmpLCFS.  With
    ``inverted=True`` FCFS is put forward as the candidate optimum; those
    claims are false and the battery reports their violations.
    """
    traffic = TrafficConfig(lam=lam, delay=OUT_OF_ORDER)
    prmp = pol.PolicySpec(pol.PRMP_LGFS)
    lgfs = pol.PolicySpec(pol.NON_PRMP_LGFS)
    lcfs = pol.PolicySpec(pol.NON_PRMP_LCFS)
    fcfs = pol.PolicySpec(pol.FCFS)
    if inverted:
        return _samplewise_suite(
            "inverted", fig5_network(), traffic, fcfs, [prmp, lgfs], engine.UNIFORMIZATION,
            seeds, horizon, seed,
        )
    out = _samplewise_suite(
        "uniformization", fig5_network(), traffic, prmp,
        [pol.PolicySpec(pol.PRMP_LGFS, label="PrmpLGFS'"), lgfs, lcfs, fcfs],
        engine.UNIFORMIZATION, seeds, horizon, seed,
    )
    out += _samplewise_suite(
        "shared_draws", fig7_network(), traffic, lgfs, [fcfs, lcfs],
        engine.SHARED_DRAWS, seeds, horizon, seed,
    )
    return out
