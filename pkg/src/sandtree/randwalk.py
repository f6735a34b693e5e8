"""Seeded simple random walks on wired boxes and chronological loop erasure.

A path is a plain list of lattice points, optionally ending with the
wired root ``ROOT`` when the walk was absorbed at the boundary.
"""
from __future__ import annotations

import struct

import numpy as np

from .lattice import ROOT, Box, directions, linf_norm, neighbors
from .rng import CounterRng, RngSeed


def is_path(p) -> bool:
    """Consecutive lattice neighbours, except a final ROOT entry."""
    if not p:
        return False
    body = p[:-1] if p[-1] is ROOT else p
    for a, b in zip(body, body[1:]):
        if sum(abs(x - y) for x, y in zip(a, b)) != 1:
            return False
    return True


def srw_until_hit(start, absorbing, domain: Box, seed: RngSeed):
    """Walk from ``start`` on the wired multigraph of ``domain`` until the
    first absorbing vertex (time 0 counts).

    absorbing is a predicate over points and ROOT.  Every step is uniform
    over the 2d incident edges; edges leaving the box all lead to ROOT but
    keep their multiplicity, and steps from ROOT are uniform over all
    wired edges (so a non-absorbing root is handled correctly).
    """
    if start not in domain:
        raise ValueError(f"start {start} outside domain")
    d = domain.dimension
    dirs = directions(d)
    rng = CounterRng(seed)
    path = [start]
    cur = start
    wired_edges = None
    while not absorbing(cur):
        if cur is ROOT:
            if wired_edges is None:
                wired_edges = _wired_edge_list(domain)
            cur = wired_edges[rng.bounded(len(wired_edges))]
        else:
            k = rng.bounded(2 * d)
            step = dirs[k]
            nxt = tuple(c + s for c, s in zip(cur, step))
            cur = nxt if nxt in domain else ROOT
        path.append(cur)
    return path


def _wired_edge_list(domain: Box):
    """Inside endpoints of all wired edges, with multiplicity."""
    out = []
    for p in domain.sites():
        if linf_norm(tuple(a - b for a, b in zip(p, domain.center))) < domain.radius:
            continue
        for q in neighbors(p):
            if q not in domain:
                out.append(p)
    return out


def loop_erase(p):
    """Chronological loop erasure, single pass.

    Scans forward keeping the current loop-free prefix; revisiting a
    vertex truncates back to its first occurrence.  Agrees with the
    last-visit recursion (see loop_erase_rescan) and is tested against it.
    """
    if not p:
        raise ValueError("empty path")
    out = []
    pos = {}
    for v in p:
        if v in pos:
            for w in out[pos[v] + 1:]:
                del pos[w]
            del out[pos[v] + 1:]
        else:
            pos[v] = len(out)
            out.append(v)
    return out


def loop_erase_rescan(p):
    """Independent oracle: the literal last-visit recursion, rescanning
    the whole path for every output vertex (quadratic).

    t_0 is the last visit time of the start; each next index is the last
    visit time of the vertex right after the previous cut.  Kept fully
    separate from the production single-pass version; the full-path
    rescans run as vectorized equality when the path is ROOT-free.
    """
    if not p:
        raise ValueError("empty path")
    m = len(p) - 1
    if p[-1] is ROOT or len(p) < 8:
        def last_visit(t_next):
            v = p[t_next]
            last = -1
            for j, w in enumerate(p):
                if w == v:
                    last = j
            return last
    else:
        arr = np.asarray(p, dtype=np.int64)

        def last_visit(t_next):
            return int(np.flatnonzero((arr == arr[t_next]).all(axis=1))[-1])

    out = []
    t = last_visit(0)
    out.append(p[t])
    while t < m:
        t = last_visit(t + 1)
        out.append(p[t])
    return out


def ilerw_truncated(R: int, N: int | None = None, seed: RngSeed = RngSeed(0), d: int = 3):
    """Loop erasure of a walk from 0 stopped on the boundary of B(0,N),
    truncated at its first exit of B(0,R): a finite stand-in for the
    restriction of the infinite loop-erased walk to B(0,R).

    N defaults to 8R and must be at least 4R.  For R >= 1 the returned
    path ends at its first site of norm R+1; R = 0 returns [origin].
    """
    if N is None:
        N = 8 * R
    if R > 0 and N < 4 * R:
        raise ValueError(f"N = {N} < 4R = {4 * R}")
    origin = (0,) * d
    if R == 0:
        return [origin]
    dirs = directions(d)
    rng = CounterRng(seed)
    cur = origin
    walk = [origin]
    while linf_norm(cur) <= N:
        step = dirs[rng.bounded(2 * d)]
        cur = tuple(c + s for c, s in zip(cur, step))
        walk.append(cur)
    gamma = loop_erase(walk)
    for i, v in enumerate(gamma):
        if linf_norm(v) > R:
            return gamma[: i + 1]
    raise AssertionError("loop erasure lost the exit site")


# ----------------------------------------------------------------------
# serialization

_TRACE_MAGIC = b"STRW1\x00"


def path_to_json(p):
    return [("root" if v is ROOT else list(v)) for v in p]


def path_from_json(obj):
    return [ROOT if v == "root" else tuple(v) for v in obj]


def path_to_bytes(p):
    """Compact version-tagged binary trace: start point + step directions."""
    if not p:
        raise ValueError("empty path")
    body = p[:-1] if p[-1] is ROOT else p
    d = len(body[0])
    dirs = directions(d)
    step_of = {s: i for i, s in enumerate(dirs)}
    out = [_TRACE_MAGIC, struct.pack("<BBq", d, 1 if p[-1] is ROOT else 0, len(body))]
    out.append(struct.pack(f"<{d}q", *body[0]))
    steps = bytearray()
    for a, b in zip(body, body[1:]):
        steps.append(step_of[tuple(x - y for x, y in zip(b, a))])
    out.append(bytes(steps))
    return b"".join(out)


def path_from_bytes(buf):
    if buf[: len(_TRACE_MAGIC)] != _TRACE_MAGIC:
        raise ValueError("bad trace header")
    off = len(_TRACE_MAGIC)
    d, rooted, n = struct.unpack_from("<BBq", buf, off)
    off += struct.calcsize("<BBq")
    start = struct.unpack_from(f"<{d}q", buf, off)
    off += struct.calcsize(f"<{d}q")
    dirs = directions(d)
    path = [tuple(start)]
    for k in buf[off: off + n - 1]:
        path.append(tuple(c + s for c, s in zip(path[-1], dirs[k])))
    if rooted:
        path.append(ROOT)
    return path
