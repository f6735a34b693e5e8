"""Sandpile configurations, toppling, stabilization, the burning test,
the burning (tree <-> recurrent configuration) bijection, stationary
sampling, avalanches and the wave decomposition.

Everything here works on explicit finite site sets through SiteGraph;
these are the readable reference dynamics used by the enumeration
oracles and the tests.  Large-box Monte Carlo uses the array kernels via
the estimator module.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .forest import SiteGraph, SpanningForest
from .rng import CounterRng, RngSeed


class SandpileConfig:
    """Non-negative integer heights on a wired finite domain."""

    def __init__(self, domain, height=None):
        self.graph = SiteGraph.from_domain(domain)
        n = len(self.graph)
        if height is None:
            self.height = np.zeros(n, dtype=np.int64)
        elif isinstance(height, dict):
            self.height = np.zeros(n, dtype=np.int64)
            for p, h in height.items():
                self.height[self.graph.index[p]] = h
        else:
            self.height = np.asarray(height, dtype=np.int64).copy()
            if self.height.shape != (n,):
                raise ValueError("height array has wrong shape")
        if (self.height < 0).any():
            raise ValueError("negative height")

    @property
    def two_d(self):
        return 2 * self.graph.d

    def height_of(self, p) -> int:
        return int(self.height[self.graph.index[p]])

    def is_stable(self) -> bool:
        return bool((self.height < self.two_d).all())

    def unstable_sites(self):
        return [self.graph.sites[i] for i in np.flatnonzero(self.height >= self.two_d)]

    def total_grains(self) -> int:
        return int(self.height.sum())

    def copy(self) -> "SandpileConfig":
        return SandpileConfig(self.graph, self.height)

    def add_grain(self, p) -> "SandpileConfig":
        out = self.copy()
        out.height[out.graph.index[p]] += 1
        return out

    def __eq__(self, other):
        return (isinstance(other, SandpileConfig)
                and self.graph.sites == other.graph.sites
                and bool((self.height == other.height).all()))

    def __hash__(self):
        return hash((tuple(self.graph.sites), tuple(self.height.tolist())))

    def to_json(self) -> dict:
        return {
            "format": "sandtree-config-v1",
            "d": self.graph.d,
            "sites": [list(p) for p in self.graph.sites],
            "height": self.height.tolist(),
        }

    @classmethod
    def from_json(cls, obj) -> "SandpileConfig":
        if obj.get("format") != "sandtree-config-v1":
            raise ValueError("unknown config format")
        sites = [tuple(p) for p in obj["sites"]]
        return cls(SiteGraph(sites, obj["d"]), np.asarray(obj["height"]))


@dataclass
class AvalancheResult:
    """Topplings from one grain addition: odometer, waves, cluster."""

    odometer: dict
    waves: list
    cluster: set
    total: int
    truncated: bool

    def to_json(self) -> dict:
        if self.cluster:
            pts = np.asarray(sorted(self.cluster), dtype=np.int64)
            radius = int((pts.max(axis=0) - pts.min(axis=0)).max())
        else:
            radius = -1
        return {
            "total": self.total,
            "waves": [len(w) for w in self.waves],
            "cluster_radius": radius,
            "truncated": self.truncated,
        }


def topple(c: SandpileConfig, v) -> SandpileConfig:
    """Topple the unstable site v once; grains leaving the domain are lost."""
    g = c.graph
    i = g.index[v]
    if c.height[i] < c.two_d:
        raise ValueError(f"site {v} is stable (height {int(c.height[i])})")
    out = c.copy()
    out.height[i] -= c.two_d
    for t in g.nbr[i]:
        if t >= 0:
            out.height[t] += 1
    return out


def stabilize(c: SandpileConfig):
    """Topple until stable; returns (stable config, odometer dict).

    The result does not depend on the processing order; the tests check
    this against a random-order stabilizer.
    """
    out = c.copy()
    od = _stabilize_inplace(out.graph, out.height)
    odometer = {out.graph.sites[i]: int(od[i]) for i in np.flatnonzero(od)}
    return out, odometer


def _stabilize_inplace(g: SiteGraph, h, frozen=-1):
    two_d = 2 * g.d
    n = len(g)
    od = np.zeros(n, dtype=np.int64)
    queue = deque(i for i in range(n) if h[i] >= two_d and i != frozen)
    present = np.zeros(n, dtype=bool)
    for i in queue:
        present[i] = True
    while queue:
        i = queue.popleft()
        present[i] = False
        while h[i] >= two_d:
            h[i] -= two_d
            od[i] += 1
            for t in g.nbr[i]:
                if t >= 0:
                    h[t] += 1
                    if h[t] >= two_d and t != frozen and not present[t]:
                        present[t] = True
                        queue.append(t)
    return od


def stabilize_random_order(c: SandpileConfig, seed: RngSeed):
    """Oracle stabilizer: repeatedly topple a uniformly chosen unstable
    site.  Must agree exactly with ``stabilize`` (Abelian property)."""
    g = c.graph
    h = c.height.copy()
    two_d = c.two_d
    od = np.zeros(len(g), dtype=np.int64)
    rng = CounterRng(seed)
    while True:
        unstable = np.flatnonzero(h >= two_d)
        if len(unstable) == 0:
            break
        i = int(unstable[rng.bounded(len(unstable))])
        h[i] -= two_d
        od[i] += 1
        for t in g.nbr[i]:
            if t >= 0:
                h[t] += 1
    out = SandpileConfig(g, h)
    return out, {g.sites[i]: int(od[i]) for i in np.flatnonzero(od)}


def grains_lost(c_before: SandpileConfig, odometer: dict) -> int:
    """Exact grain loss implied by an odometer (wired edges only)."""
    g = c_before.graph
    return sum(n * g.wired_degree(g.index[p]) for p, n in odometer.items())


def is_recurrent(c: SandpileConfig) -> bool:
    """Burning test: repeatedly burn any unburnt site whose height is at
    least its number of unburnt neighbours (wired edges are pre-burnt);
    recurrent iff everything burns."""
    if not c.is_stable():
        raise ValueError("burning test requires a stable configuration")
    return bool((burning_times(c) > 0).all())


def burning_times(c: SandpileConfig):
    """Burning rounds per site (0 = wired root side); -1 if never burnt."""
    g = c.graph
    n = len(g)
    two_d = c.two_d
    unburnt = np.ones(n, dtype=bool)
    times = np.full(n, -1, dtype=np.int64)
    t = 0
    while True:
        cnt = np.zeros(n, dtype=np.int64)
        for k in range(two_d):
            tgt = g.nbr[:, k]
            cnt += (tgt >= 0) & unburnt[np.clip(tgt, 0, n - 1)]
        burn_now = unburnt & (c.height >= cnt)
        if not burn_now.any():
            break
        t += 1
        times[burn_now] = t
        unburnt &= ~burn_now
    return times


def md_bijection(t: SpanningForest) -> SandpileConfig:
    """Recurrent configuration bijectively encoding the wired spanning tree.

    When a site burns (at its tree depth), its height is
    2d - (#edges to earlier-burnt sites) + (rank of its parent edge among
    the edges to sites burnt exactly one round earlier), with the wired
    root burnt at round 0 and edges ranked in the global edge order.
    """
    if t.zero_rooted:
        raise ValueError("bijection applies to single-root spanning trees")
    h = kernels.tiny_md_heights(t.graph.nbr, t.parent_dir)
    return SandpileConfig(t.graph, np.asarray(h, dtype=np.int64))


def md_inverse(c: SandpileConfig) -> SpanningForest:
    """Inverse of the bijection: burn the configuration, selecting each
    site's parent edge among the fresh fire front by its height excess."""
    g = c.graph
    times = burning_times(c)
    if (times < 0).any():
        raise ValueError("configuration is not recurrent")
    n = len(g)
    two_d = c.two_d
    parent = np.full(n, -1, dtype=np.int8)
    for i in range(n):
        ti = times[i]
        b = 0
        front = []
        for k in range(two_d):
            t = g.nbr[i, k]
            tt = 0 if t < 0 else times[t]
            if tt < ti:
                b += 1
            if tt == ti - 1:
                front.append(k)
        r = int(c.height[i]) - (two_d - b)
        if r < 0 or r >= len(front):
            raise AssertionError("burning rank out of range on a recurrent config")
        parent[i] = front[r]
    return SpanningForest(g, parent, zero_rooted=False)


def sample_recurrent(domain, seed: RngSeed = RngSeed(0)) -> SandpileConfig:
    """Uniform recurrent configuration: push a uniform wired spanning tree
    through the bijection.  This realizes the stationary sandpile measure."""
    g = SiteGraph.from_domain(domain)
    od = np.arange(len(g), dtype=np.int32)
    pd = kernels.tiny_wilson_batch(g.nbr, od, -1, 1, seed.master_seed, seed.stream_id)[0]
    h = kernels.tiny_md_heights(g.nbr, pd)
    return SandpileConfig(g, np.asarray(h, dtype=np.int64))


def avalanche(c: SandpileConfig, v) -> AvalancheResult:
    """Add one grain at v and run the wave decomposition.

    Each wave topples v once and then every other unstable site, with v
    frozen; waves repeat while v is unstable.  Empty result if the
    addition leaves v stable.
    """
    if not c.is_stable():
        raise ValueError("avalanche requires a stable start")
    g = c.graph
    i = g.index[v]
    two_d = c.two_d
    h = c.height.copy()
    h[i] += 1
    od = np.zeros(len(g), dtype=np.int64)
    waves = []
    while h[i] >= two_d:
        h[i] -= two_d
        od[i] += 1
        for t in g.nbr[i]:
            if t >= 0:
                h[t] += 1
        wave_od = _stabilize_inplace(g, h, frozen=i)
        if (wave_od > 1).any():
            raise AssertionError("a site toppled twice within one wave")
        od += wave_od
        wave = {v} | {g.sites[j] for j in np.flatnonzero(wave_od)}
        waves.append(wave)
    cluster = set().union(*waves) if waves else set()
    truncated = any(g.wired_degree(g.index[p]) > 0 for p in cluster)
    odometer = {g.sites[j]: int(od[j]) for j in np.flatnonzero(od)}
    return AvalancheResult(odometer=odometer, waves=waves, cluster=cluster,
                           total=int(od.sum()), truncated=truncated)
