"""Lattice geometry: points, L-infinity boxes, neighbours and boundaries.

Points are plain tuples of ints; the dimension is the tuple length
(default 3 everywhere else in the package).  All sites outside a box are
identified with the single wired root vertex ``ROOT``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Iterator, Sequence, Union

Point = tuple


class _Root:
    """The wired boundary vertex (every site outside a box is glued to it)."""

    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ROOT"


ROOT = _Root()

Vertex = Union[Point, _Root]


@lru_cache(maxsize=8)
def directions(d: int) -> tuple:
    """Unit steps in the fixed global edge order (+e1, -e1, +e2, -e2, ...).

    This order is load-bearing: the burning bijection ranks a site's edges
    by it, so it must never change.
    """
    out = []
    for axis in range(d):
        for sign in (1, -1):
            step = [0] * d
            step[axis] = sign
            out.append(tuple(step))
    return tuple(out)


def neighbors(p: Point) -> list:
    """The 2d lattice neighbours of p, in the fixed global order."""
    d = len(p)
    return [tuple(p[i] + s[i] for i in range(d)) for s in directions(d)]


def linf_norm(p: Point) -> int:
    return max(abs(c) for c in p)


def linf_dist(p: Point, q: Point) -> int:
    if len(p) != len(q):
        raise ValueError(f"dimension mismatch: {len(p)} vs {len(q)}")
    return max(abs(a - b) for a, b in zip(p, q))


@dataclass(frozen=True)
class Box:
    """L-infinity ball {p : ||p - center|| <= radius} with wired boundary."""

    center: Point
    radius: int

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be >= 0")

    @property
    def dimension(self) -> int:
        return len(self.center)

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    def __contains__(self, p) -> bool:
        if not isinstance(p, tuple) or len(p) != len(self.center):
            return False
        return linf_dist(p, self.center) <= self.radius

    def __len__(self) -> int:
        return self.side ** self.dimension

    def sites(self) -> Iterator[Point]:
        """All sites of the box in lexicographic coordinate order."""
        c, r = self.center, self.radius
        ranges = [range(ci - r, ci + r + 1) for ci in c]
        for p in product(*ranges):
            yield p


def boundary(b: Box) -> set:
    """Outer vertex boundary: sites not in b adjacent to some site of b.

    For an L-infinity box this is every site at distance radius+1 from the
    center that has a neighbour inside, but it is computed from the
    definition so it stays correct for any future domain type.
    """
    out = set()
    for p in b.sites():
        if linf_dist(p, b.center) < b.radius:
            continue  # interior sites cannot touch the outside
        for q in neighbors(p):
            if q not in b:
                out.add(q)
    return out


def point_to_json(p: Vertex):
    if p is ROOT:
        return "root"
    return list(p)


def point_from_json(obj) -> Vertex:
    if obj == "root":
        return ROOT
    return tuple(int(c) for c in obj)


def box_to_json(b: Box) -> dict:
    return {"center": list(b.center), "radius": b.radius}


def box_from_json(obj) -> Box:
    return Box(tuple(int(c) for c in obj["center"]), int(obj["radius"]))
