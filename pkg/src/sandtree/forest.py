"""Wilson's algorithm on wired domains, red/blue coloring, the past of
the origin, the 0-tree, tree observables and comparison diagnostics.

Spanning forests over explicit site sets and small boxes are held as
per-site parent-edge directions (which keeps the identity of parallel
wired edges, needed by the burning bijection).  Large-box Monte Carlo
goes through the batch kernels in the estimator module instead.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .lattice import ROOT, Box, Point, directions, linf_norm
from .rng import RngSeed

RED = "red"
BLUE = "blue"

_MAX_MATERIALIZED_SITES = 2_000_000


class SiteGraph:
    """Wired site-set domain: sorted sites, index map, neighbour table.

    The neighbour table columns follow the global edge order; -1 marks a
    wired edge to the root.  This single representation feeds both the
    pure-Python reference operations and the batched kernels.
    """

    def __init__(self, sites, d=None):
        sites = sorted(set(sites))
        if not sites:
            raise ValueError("empty domain")
        self.d = d if d is not None else len(sites[0])
        if any(len(p) != self.d for p in sites):
            raise ValueError("mixed dimensions")
        self.sites = sites
        self.index = {p: i for i, p in enumerate(sites)}
        dirs = directions(self.d)
        nbr = np.full((len(sites), 2 * self.d), -1, dtype=np.int32)
        for i, p in enumerate(sites):
            for k, s in enumerate(dirs):
                q = tuple(a + b for a, b in zip(p, s))
                nbr[i, k] = self.index.get(q, -1)
        self.nbr = nbr
        self.coords = np.asarray(sites, dtype=np.int64)

    def __len__(self):
        return len(self.sites)

    @classmethod
    def from_domain(cls, domain):
        if isinstance(domain, SiteGraph):
            return domain
        if isinstance(domain, Box):
            if len(domain) > _MAX_MATERIALIZED_SITES:
                raise ValueError(
                    f"domain with {len(domain)} sites is too large to materialize; "
                    "use the estimator batch samplers instead")
            return cls(list(domain.sites()), domain.dimension)
        return cls(list(domain))

    def wired_degree(self, i):
        return int((self.nbr[i] < 0).sum())


@dataclass
class TreeObservables:
    diam_ext: int
    diam_int: int
    volume: int


class SpanningForest:
    """Parent-pointer forest over a wired domain with one or two roots.

    parent_dir[i] is the direction index of site i's parent edge, or -1
    at a site promoted to root.  Colors: red sites are those whose parent
    chain reaches the root 0 (two-root forests) or passes through the
    origin (single-root trees).
    """

    def __init__(self, graph: SiteGraph, parent_dir, zero_rooted: bool):
        self.graph = graph
        self.parent_dir = np.asarray(parent_dir, dtype=np.int8)
        self.zero_rooted = zero_rooted
        origin = (0,) * graph.d
        self.roots = {ROOT, origin} if zero_rooted else {ROOT}
        self._color = self._compute_colors()

    @property
    def domain(self):
        return self.graph

    def parent_of(self, p) -> object:
        """Parent vertex of p (a point or ROOT); None at a root site."""
        i = self.graph.index[p]
        k = self.parent_dir[i]
        if k < 0:
            return None
        t = self.graph.nbr[i, k]
        return ROOT if t < 0 else self.graph.sites[t]

    def parent_edge_dir(self, p) -> int:
        return int(self.parent_dir[self.graph.index[p]])

    def color_of(self, p) -> str:
        return RED if self._color[self.graph.index[p]] else BLUE

    def _compute_colors(self):
        g = self.graph
        n = len(g)
        origin = (0,) * g.d
        oi = g.index.get(origin, -1)
        red = np.zeros(n, dtype=bool)
        if oi < 0:
            return red
        # red iff the chain hits the origin before a root
        state = np.full(n, -1, dtype=np.int8)  # -1 unknown, 0 blue, 1 red
        if self.zero_rooted:
            state[oi] = 1
        else:
            state[oi] = 1  # origin is red by convention in both colorings
        for i in range(n):
            if state[i] >= 0:
                continue
            chain = []
            cur = i
            while state[cur] < 0:
                chain.append(cur)
                k = self.parent_dir[cur]
                if k < 0:
                    state[cur] = 0 if not self.zero_rooted else (1 if cur == oi else 0)
                    break
                t = self.graph.nbr[cur, k]
                if t < 0:
                    state[cur] = 0
                    break
                cur = t
            val = state[chain[-1]] if state[chain[-1]] >= 0 else state[cur]
            for c in chain:
                state[c] = val
        red[:] = state == 1
        red[oi] = True
        return red

    def check_spanning(self):
        """Every site reaches a root in at most |domain| steps (acyclic)."""
        g = self.graph
        n = len(g)
        for i in range(n):
            cur = i
            for _ in range(n + 1):
                k = self.parent_dir[cur]
                if k < 0:
                    break  # root site
                t = g.nbr[cur, k]
                if t < 0:
                    break  # wired root
                cur = t
            else:
                raise AssertionError("parent chain did not reach a root")

    def edges(self):
        """Undirected tree edges between sites (wired edges excluded)."""
        g = self.graph
        out = []
        for i in range(len(g)):
            k = self.parent_dir[i]
            if k < 0:
                continue
            t = g.nbr[i, k]
            if t >= 0:
                out.append((i, int(t)))
        return out

    # -- serialization: one line per site "x y z -> px py pz|ROOT0|ROOTB color"

    def dump(self, fileobj):
        g = self.graph
        fileobj.write(f"# sandtree-forest v1 d={g.d} sites={len(g)}\n")
        origin = (0,) * g.d
        for i, p in enumerate(g.sites):
            k = self.parent_dir[i]
            if k < 0:
                tgt = "ROOT0"
            else:
                t = g.nbr[i, k]
                if t < 0:
                    tgt = "ROOTB"
                else:
                    q = g.sites[t]
                    tgt = " ".join(str(c) for c in q)
            color = RED if self._color[i] else BLUE
            fileobj.write(" ".join(str(c) for c in p) + f" -> {tgt} {color}\n")

    @classmethod
    def load(cls, fileobj):
        header = fileobj.readline().strip()
        if not header.startswith("# sandtree-forest v1"):
            raise ValueError("bad forest header")
        d = int(header.split("d=")[1].split()[0])
        dirs = directions(d)
        parents = {}
        zero_rooted = False
        for line in fileobj:
            line = line.strip()
            if not line:
                continue
            left, right = line.split("->")
            p = tuple(int(c) for c in left.split())
            toks = right.split()
            if toks[0] == "ROOT0":
                parents[p] = None
                if p == (0,) * d:
                    zero_rooted = True
            elif toks[0] == "ROOTB":
                parents[p] = ROOT
            else:
                parents[p] = tuple(int(c) for c in toks[:d])
        graph = SiteGraph(list(parents), d)
        pd = np.full(len(graph), -1, dtype=np.int8)
        for p, q in parents.items():
            if q is None:
                continue
            i = graph.index[p]
            if q is ROOT:
                # direction is not recorded in the dump; pick the first wired edge
                k = int(np.flatnonzero(graph.nbr[i] < 0)[0])
            else:
                step = tuple(a - b for a, b in zip(q, p))
                k = dirs.index(step)
            pd[i] = k
        return cls(graph, pd, zero_rooted)


def _order_indices(graph: SiteGraph, order):
    if order is None or order == "lex":
        return np.arange(len(graph), dtype=np.int32)
    if order == "reverse":
        return np.arange(len(graph) - 1, -1, -1, dtype=np.int32)
    idx = np.asarray([graph.index[p] for p in order], dtype=np.int32)
    if len(set(idx.tolist())) != len(graph):
        raise ValueError("order must enumerate every site exactly once")
    return idx


def wilson_ust(domain, order=None, seed: RngSeed = RngSeed(0)) -> SpanningForest:
    """Exact uniform spanning tree of the wired domain (root at the
    boundary vertex), via loop-erased random walks started in ``order``.

    The law does not depend on the order; that is checked statistically
    in the tests rather than assumed.
    """
    g = SiteGraph.from_domain(domain)
    od = _order_indices(g, order)
    pd = kernels.tiny_wilson_batch(g.nbr, od, -1, 1, seed.master_seed, seed.stream_id)[0]
    return SpanningForest(g, pd, zero_rooted=False)


def wilson_0wusf(domain, seed: RngSeed = RngSeed(0)) -> SpanningForest:
    """Two-component forest rooted at the origin and the wired boundary."""
    g = SiteGraph.from_domain(domain)
    origin = (0,) * g.d
    if origin not in g.index:
        raise ValueError("origin not in domain")
    od = np.arange(len(g), dtype=np.int32)
    pd = kernels.tiny_wilson_batch(g.nbr, od, g.index[origin], 1,
                                   seed.master_seed, seed.stream_id)[0]
    return SpanningForest(g, pd, zero_rooted=True)


def past_of_origin(f: SpanningForest) -> set:
    """Sites whose parent chain passes through the origin, plus the origin.

    Defined for single-root trees; equals the red set of the coloring.
    """
    if f.zero_rooted:
        raise ValueError("past is defined for single-root trees")
    g = f.graph
    origin = (0,) * g.d
    if origin not in g.index:
        raise ValueError("origin not in domain")
    return {g.sites[i] for i in np.flatnonzero(f._color)}


def past_via_deletion(f: SpanningForest) -> set:
    """Oracle: delete the origin; the past is the origin plus the tree
    components that lost every route to the wired root."""
    g = f.graph
    origin = (0,) * g.d
    oi = g.index[origin]
    adj = [[] for _ in range(len(g))]
    root_touch = np.zeros(len(g), dtype=bool)
    for i in range(len(g)):
        k = f.parent_dir[i]
        if k < 0:
            continue
        t = g.nbr[i, k]
        if t < 0:
            root_touch[i] = True
        elif i != oi and t != oi:
            adj[i].append(int(t))
            adj[int(t)].append(i)
    seen = np.zeros(len(g), dtype=bool)
    seen[oi] = True
    past = {origin}
    for i in range(len(g)):
        if seen[i]:
            continue
        comp = [i]
        seen[i] = True
        touches = False
        head = 0
        while head < len(comp):
            u = comp[head]
            head += 1
            if root_touch[u]:
                touches = True
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    comp.append(v)
        if not touches:
            past.update(g.sites[u] for u in comp)
    return past


def zero_tree(f: SpanningForest) -> set:
    """Component of the origin in a two-root forest (the red set)."""
    if not f.zero_rooted:
        raise ValueError("zero_tree is defined for two-root forests")
    return {f.graph.sites[i] for i in np.flatnonzero(f._color)}


def observables(f: SpanningForest, s) -> TreeObservables:
    """Extrinsic diameter, intrinsic (tree) diameter and volume of a
    connected set of sites ``s`` inside the forest ``f``."""
    g = f.graph
    idx = sorted(g.index[p] for p in s)
    if not idx:
        raise ValueError("empty set")
    members = set(idx)
    adj = {i: [] for i in idx}
    for i in idx:
        k = f.parent_dir[i]
        if k < 0:
            continue
        t = int(g.nbr[i, k])
        if t >= 0 and t in members:
            adj[i].append(t)
            adj[t].append(i)
    # connectivity check
    seen = {idx[0]}
    stack = [idx[0]]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) != len(members):
        raise ValueError("set is not connected in the forest")
    pts = g.coords[idx]
    diam_ext = int((pts.max(axis=0) - pts.min(axis=0)).max()) if len(idx) > 1 else 0

    def bfs(start):
        dist = {start: 0}
        q = deque([start])
        far, fard = start, 0
        while q:
            u = q.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    if dist[v] > fard:
                        far, fard = v, dist[v]
                    q.append(v)
        return far, fard

    u, _ = bfs(idx[0])
    _, diam_int = bfs(u)
    return TreeObservables(diam_ext=diam_ext, diam_int=diam_int, volume=len(idx))


def diam_ext_pair_scan(s) -> int:
    """Literal all-pairs extrinsic diameter (oracle for the bbox formula)."""
    pts = list(s)
    best = 0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            dd = max(abs(a - b) for a, b in zip(pts[i], pts[j]))
            best = max(best, dd)
    return best


def comparison_diagnostics(R: int, lambdas, reps: int, seed: RngSeed,
                           box_factor: int = 4, beta: float = 1.624):
    """Empirical frequencies of the intrinsic/extrinsic comparison events.

    For each replica one wired tree is explored lazily around the origin
    in Box(0, box_factor * R) and all lambda values are evaluated on the
    same sample, so the reported frequencies are monotone in lambda by
    construction.  Returns per-lambda frequencies of:

      ext_to_int:  the in-box component of 0 at scale R leaves the
                   intrinsic ball of radius lambda * R^beta,
      int_to_ext:  the intrinsic ball of radius R^beta / lambda leaves
                   Box(0, R),
      ball_volume: the intrinsic ball of radius R has at least
                   lambda * R^(3/beta) sites.
    """
    lambdas = sorted(set(float(x) for x in lambdas))
    box_radius = box_factor * R
    kern = kernels.BoxKernel(box_radius)
    rbeta = R ** beta
    ball_radii = sorted({max(1, int(rbeta / lam)) for lam in lambdas} | {R})
    counts = {lam: {"ext_to_int": 0, "int_to_ext": 0, "ball_volume": 0}
              for lam in lambdas}
    for rep in range(reps):
        kern.tree_begin(seed.stream(rep).state())
        kern.tree_branch(0, 0, 0)
        norms = {}
        sizes = {}
        for m in ball_radii:
            size, max_norm = kern.intrinsic_ball(m)
            norms[m] = max_norm
            sizes[m] = size
        u_size, u_maxdist = kern.component_stats(R)
        for lam in lambdas:
            if u_maxdist > lam * rbeta:
                counts[lam]["ext_to_int"] += 1
            m = max(1, int(rbeta / lam))
            if norms[m] > R:
                counts[lam]["int_to_ext"] += 1
            if sizes[R] >= lam * R ** (3.0 / beta):
                counts[lam]["ball_volume"] += 1
    return {lam: {k: v / reps for k, v in c.items()} for lam, c in counts.items()}
