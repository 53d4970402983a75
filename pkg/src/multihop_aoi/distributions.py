"""Transmission-time distributions, NBU checks and keyed random streams.

Streams are counter-based: a :class:`StreamKey` names a stream by
``(master_seed, purpose, entity)`` and a draw position ``index``.  Draws are
produced in fixed-size blocks, block ``b`` seeded from
``SeedSequence(master_seed, spawn_key=(purpose, *entity, b))``, so the k-th
draw of a stream is the same value whether it is reached sequentially
(:class:`DrawStream`) or directly (:func:`sample`).
"""

from __future__ import annotations

import math
import numbers
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import special

BLOCK = 1024

KINDS = {
    "exponential": ("rate",),
    "gamma": ("shape", "scale"),
    "shifted_exponential": ("shift", "rate"),
    "erlang": ("stages", "rate"),
    "deterministic": ("value",),
    "geometric": ("p", "step"),
}


class DistributionError(ValueError):
    pass


@dataclass(frozen=True)
class DistSpec:
    """A member of the transmission-time catalog.

    Parameter names per kind:

    ==================== =========================================
    exponential          rate
    gamma                shape, scale
    shifted_exponential  shift, rate  (shift + Exp(rate))
    erlang               stages (int), rate (per stage)
    deterministic        value
    geometric            p, step  (step * N, N ~ Geometric(p) on 1,2,...)
    ==================== =========================================
    """

    kind: str
    params: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DistributionError(
                f"unknown distribution kind {self.kind!r}; valid: {sorted(KINDS)}"
            )
        names = KINDS[self.kind]
        if len(self.params) != len(names):
            raise DistributionError(f"{self.kind} takes parameters {names}")
        for name, v in zip(names, self.params):
            if not (isinstance(v, numbers.Real) and not isinstance(v, bool) and math.isfinite(v) and v > 0):
                raise DistributionError(f"{self.kind}.{name} must be positive, got {v!r}")
        if self.kind == "erlang" and int(self.params[0]) != self.params[0]:
            raise DistributionError("erlang.stages must be an integer")
        if self.kind == "geometric" and self.params[0] > 1:
            raise DistributionError("geometric.p must lie in (0, 1]")

    def __getattr__(self, name):
        names = KINDS.get(object.__getattribute__(self, "kind"), ())
        if name in names:
            return self.params[names.index(name)]
        raise AttributeError(name)

    # constructors -----------------------------------------------------

    @classmethod
    def exponential(cls, rate):
        return cls("exponential", (rate,))

    @classmethod
    def gamma(cls, shape, scale):
        return cls("gamma", (shape, scale))

    @classmethod
    def gamma_with_mean(cls, shape, mean):
        return cls("gamma", (shape, mean / shape))

    @classmethod
    def shifted_exponential(cls, shift, rate):
        return cls("shifted_exponential", (shift, rate))

    @classmethod
    def erlang(cls, stages, rate):
        return cls("erlang", (int(stages), rate))

    @classmethod
    def deterministic(cls, value):
        return cls("deterministic", (value,))

    @classmethod
    def geometric(cls, p, step):
        return cls("geometric", (p, step))

    @classmethod
    def from_spec(cls, spec: dict) -> "DistSpec":
        spec = dict(spec)
        kind = spec.pop("kind", None)
        if kind not in KINDS:
            raise DistributionError(
                f"unknown distribution kind {kind!r}; valid: {sorted(KINDS)}"
            )
        if kind == "gamma" and "mean" in spec and "scale" not in spec:
            spec["scale"] = spec.pop("mean") / spec["shape"]
        if kind == "exponential" and "mean" in spec and "rate" not in spec:
            spec["rate"] = 1.0 / spec.pop("mean")
        names = KINDS[kind]
        missing = [n for n in names if n not in spec]
        extra = sorted(set(spec) - set(names))
        if missing or extra:
            raise DistributionError(
                f"{kind} expects parameters {list(names)}; missing {missing}, unexpected {extra}"
            )
        return cls(kind, tuple(spec[n] for n in names))

    def to_spec(self) -> dict:
        return {"kind": self.kind, **dict(zip(KINDS[self.kind], self.params))}

    # analytic properties ----------------------------------------------

    @property
    def is_exponential(self) -> bool:
        return self.kind == "exponential" or (
            self.kind in ("gamma", "erlang") and self.params[0] == 1
        )

    def service_rate(self) -> float:
        """Rate of an exponential member (used for uniformization)."""
        if not self.is_exponential:
            raise DistributionError(f"{self.kind} is not exponential")
        return 1.0 / self.mean()

    def mean(self) -> float:
        k, p = self.kind, self.params
        if k == "exponential":
            return 1.0 / p[0]
        if k == "gamma":
            return p[0] * p[1]
        if k == "shifted_exponential":
            return p[0] + 1.0 / p[1]
        if k == "erlang":
            return p[0] / p[1]
        if k == "deterministic":
            return float(p[0])
        return p[1] / p[0]  # geometric

    def variance(self) -> float:
        k, p = self.kind, self.params
        if k in ("exponential", "shifted_exponential"):
            return 1.0 / p[-1] ** 2
        if k == "gamma":
            return p[0] * p[1] ** 2
        if k == "erlang":
            return p[0] / p[1] ** 2
        if k == "deterministic":
            return 0.0
        return p[1] ** 2 * (1 - p[0]) / p[0] ** 2

    def ccdf(self, x):
        """P[X > x], vectorized over ``x``."""
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k == "exponential":
            out = np.exp(-p[0] * np.maximum(x, 0.0))
        elif k == "gamma":
            out = special.gammaincc(p[0], np.maximum(x, 0.0) / p[1])
        elif k == "erlang":
            out = special.gammaincc(p[0], p[1] * np.maximum(x, 0.0))
        elif k == "shifted_exponential":
            out = np.where(x < p[0], 1.0, np.exp(-p[1] * (x - p[0])))
        elif k == "deterministic":
            out = np.where(x < p[0], 1.0, 0.0)
        else:
            q, step = p
            n = np.floor(np.maximum(x, 0.0) / step)
            out = (1.0 - q) ** n
        out = np.where(x < 0, 1.0, out)
        return out if out.ndim else float(out)

    def draw(self, gen: np.random.Generator, size: int) -> np.ndarray:
        k, p = self.kind, self.params
        if k == "exponential":
            return gen.exponential(1.0 / p[0], size)
        if k == "gamma":
            return gen.gamma(p[0], p[1], size)
        if k == "erlang":
            return gen.gamma(p[0], 1.0 / p[1], size)
        if k == "shifted_exponential":
            return p[0] + gen.exponential(1.0 / p[1], size)
        if k == "deterministic":
            return np.full(size, float(p[0]))
        return p[1] * gen.geometric(p[0], size).astype(float)


# --- NBU ---------------------------------------------------------------


@dataclass
class NBUReport:
    holds: bool
    worst_violation: float  # max over grid of ccdf(tau+t) - ccdf(tau)*ccdf(t)
    worst_point: tuple


NBU_TOL = 1e-12


def default_nbu_grid(dist: DistSpec, points: int = 51) -> list[tuple[float, float]]:
    ticks = np.linspace(0.0, 5.0 * dist.mean(), points)
    return [(float(a), float(b)) for a in ticks for b in ticks]


def check_nbu(dist: DistSpec, grid=None) -> NBUReport:
    """Evaluate F(tau+t) <= F(tau) F(t) for the CCDF F on a grid of pairs."""
    if grid is None:
        grid = default_nbu_grid(dist)
    pts = np.asarray(grid, dtype=float).reshape(-1, 2)
    if (pts < 0).any():
        raise DistributionError("NBU grid points must be non-negative")
    tau, t = pts[:, 0], pts[:, 1]
    gap = dist.ccdf(tau + t) - dist.ccdf(tau) * dist.ccdf(t)
    i = int(np.argmax(gap))
    worst = float(gap[i])
    return NBUReport(worst <= NBU_TOL, worst, (float(tau[i]), float(t[i])))


# --- keyed streams -----------------------------------------------------


def _tag(value) -> int:
    if isinstance(value, str):
        return zlib.crc32(value.encode())
    return int(value)


@dataclass(frozen=True)
class StreamKey:
    master_seed: int
    purpose: str
    entity: tuple = ()
    index: int = 0

    def block_seed(self, block: int) -> np.random.SeedSequence:
        spawn = (_tag(self.purpose), *(_tag(e) for e in self.entity), block)
        return np.random.SeedSequence(self.master_seed & (2**64 - 1), spawn_key=spawn)

    def at(self, index: int) -> "StreamKey":
        return StreamKey(self.master_seed, self.purpose, self.entity, index)


def _block(dist: DistSpec, key: StreamKey, block: int) -> np.ndarray:
    gen = np.random.Generator(np.random.PCG64(key.block_seed(block)))
    return dist.draw(gen, BLOCK)


def sample(dist: DistSpec, key: StreamKey) -> float:
    """Draw number ``key.index`` of the stream named by ``key``."""
    b, r = divmod(key.index, BLOCK)
    return float(_block(dist, key, b)[r])


class DrawStream:
    """Sequential reader over a keyed stream; draw k equals ``sample(dist, key.at(k))``."""

    __slots__ = ("dist", "key", "_buf", "_pos", "_block", "count")

    def __init__(self, dist: DistSpec, key: StreamKey):
        self.dist = dist
        self.key = key
        self._block = key.index // BLOCK
        self._buf = _block(dist, key, self._block).tolist()
        self._pos = key.index % BLOCK
        self.count = 0

    def __call__(self) -> float:
        if self._pos == BLOCK:
            self._block += 1
            self._buf = _block(self.dist, self.key, self._block).tolist()
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        self.count += 1
        return v

    def take(self, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._pos == BLOCK:
                self._block += 1
                self._buf = _block(self.dist, self.key, self._block).tolist()
                self._pos = 0
            m = min(n - filled, BLOCK - self._pos)
            out[filled:filled + m] = self._buf[self._pos:self._pos + m]
            self._pos += m
            filled += m
        self.count += n
        return out
