"""Pure-Python backend for the hot sampling kernels.

This is the reference implementation: the compiled backend in
``_kernels.pyx`` mirrors it operation-for-operation and draw-for-draw, so
both backends produce bit-identical output for the same seeds.  It is
10-100x slower and intended for environments without a C toolchain and
for cross-checking the compiled code on small instances.

Conventions shared by both backends
-----------------------------------
* Boxes are centered at the origin with radius ``rb``; a site (x, y, z)
  maps to flat index ((x+rb)*L + (y+rb))*L + (z+rb) with L = 2*rb + 1.
* Directions are indexed 0..5 in the global edge order
  (+x, -x, +y, -y, +z, -z).
* A walk step: check absorption at the current site, then draw one
  direction with ``bounded(6)`` (top-bit rejection), then move; stepping
  outside the walk bound absorbs at the wired root.
* Loop erasure uses the direction-overwrite board: retracing the last
  exit direction from the walk's start yields the loop-erased path.
* Per-replica randomness: replica i of a batch uses the stream state
  ``stream_state(master_seed, stream_base + i)`` so shards merge
  deterministically.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .rng import GOLDEN, MASK64, mix64, stream_state

BACKEND_NAME = "python"

_DX = (1, -1, 0, 0, 0, 0)
_DY = (0, 0, 1, -1, 0, 0)
_DZ = (0, 0, 0, 0, 1, -1)

# past/zero-tree sample flags
FLAG_COMPLETE = 0
FLAG_BOUNDARY = 1
FLAG_EXCEEDS = 2

_BLUE = 0
_RED = 1


def _next(state):
    state = (state + GOLDEN) & MASK64
    return mix64(state), state


def _bounded(n, state):
    if n <= 1:
        return 0, state
    k = (n - 1).bit_length()
    shift = 64 - k
    while True:
        r, state = _next(state)
        r >>= shift
        if r < n:
            return r, state


class BoxKernel:
    """Sampling state for one wired box of radius ``rb`` (d = 3).

    Arrays are allocated lazily per feature group; visited-style arrays
    use an epoch counter so replicas never pay for a full clear.
    """

    def __init__(self, radius):
        if radius < 0:
            raise ValueError("radius must be >= 0")
        self.rb = radius
        self.L = 2 * radius + 1
        self.n = self.L ** 3
        self._epoch = 0
        # tree arrays
        self._visited = None  # uint32 epoch stamps
        self._last_dir = None  # int8
        self._parent_dir = None  # int8, -1 marks a root site
        self._color = None  # uint8
        self._depth = None  # int32, filled only in with-depth (session) mode
        self._ridx = None  # int32, red-component index board for closures
        self._with_depth = True
        # session state for the lazy (on-demand) tree
        self._sess_state = 0
        self._sess_zero_rooted = False
        # sandpile arrays
        self._height = None  # int16
        self._present = None  # uint8 queue-presence bitmap
        self._av_stamp = None  # uint32
        self._av_epoch = 0
        # gamma marks for the intersection estimator
        self._mark = None  # uint32: rank_base + rank
        self._mark_base = 0

    # ------------------------------------------------------------------
    # geometry helpers

    def idx(self, x, y, z):
        rb, L = self.rb, self.L
        return ((x + rb) * L + (y + rb)) * L + (z + rb)

    def coords(self, idx):
        rb, L = self.rb, self.L
        z = idx % L
        y = (idx // L) % L
        x = idx // (L * L)
        return x - rb, y - rb, z - rb

    # ------------------------------------------------------------------
    # lazy tree session (Wilson's algorithm, any branch order)

    def _need_lastdir(self):
        if self._last_dir is None:
            self._last_dir = np.zeros(self.n, dtype=np.int8)

    def _need_tree(self, with_depth):
        self._need_lastdir()
        if self._visited is None:
            self._visited = np.zeros(self.n, dtype=np.uint32)
            self._parent_dir = np.zeros(self.n, dtype=np.int8)
            self._color = np.zeros(self.n, dtype=np.uint8)
        if with_depth and self._depth is None:
            self._depth = np.zeros(self.n, dtype=np.int32)
        self._with_depth = with_depth

    def _need_ridx(self):
        if self._ridx is None:
            self._ridx = np.zeros(self.n, dtype=np.int32)

    def _new_epoch(self):
        if self._epoch >= 0xFFFFFFFE:
            self._visited[:] = 0
            self._epoch = 0
        self._epoch += 1
        return self._epoch

    def release_tree(self):
        self._visited = None
        self._last_dir = None
        self._parent_dir = None
        self._color = None
        self._depth = None
        self._ridx = None

    def tree_begin(self, state, zero_rooted=False):
        """Start a fresh (empty) wired tree; ``state`` seeds later branches."""
        self._need_tree(with_depth=True)
        self._new_epoch()
        self._sess_state = state & MASK64
        self._sess_zero_rooted = bool(zero_rooted)
        if zero_rooted:
            o = self.idx(0, 0, 0)
            self._visited[o] = self._epoch
            self._parent_dir[o] = -1
            self._color[o] = _RED
            self._depth[o] = 0

    def tree_state(self):
        return self._sess_state

    def _walk(self, x, y, z, state, walk_bound):
        """Random walk from (x,y,z) until it hits the current tree or exits.

        Returns (attach_idx or -1 for the wired root, state).  The
        direction board is left holding the exit direction of every cell
        the walk visited, which is all retracing needs.
        """
        rb = walk_bound
        visited, epoch = self._visited, self._epoch
        last_dir = self._last_dir
        while True:
            cur = self.idx(x, y, z)
            if visited[cur] == epoch:
                return cur, state
            d, state = _bounded(6, state)
            last_dir[cur] = d
            x += _DX[d]
            y += _DY[d]
            z += _DZ[d]
            if x > rb or x < -rb or y > rb or y < -rb or z > rb or z < -rb:
                return -1, state

    def _retrace(self, x, y, z, attach, color, want_path=False):
        """Mark the loop-erased path from (x,y,z) to ``attach`` as tree.

        In with-depth (session) mode, depth is attach depth + steps (the
        wired root has depth 0).  Returns the path as a list of flat
        indices (start..attach side, attach itself excluded) on request.
        """
        visited, epoch = self._visited, self._epoch
        last_dir, parent_dir = self._last_dir, self._parent_dir
        col = self._color
        path = []
        cur = self.idx(x, y, z)
        while True:
            if cur == attach:
                break
            path.append(cur)
            d = last_dir[cur]
            parent_dir[cur] = d
            x += _DX[d]
            y += _DY[d]
            z += _DZ[d]
            if abs(x) > self.rb or abs(y) > self.rb or abs(z) > self.rb:
                cur = -1
                break
            cur = self.idx(x, y, z)
        if self._with_depth:
            depth = self._depth
            base_depth = 0 if attach < 0 else int(depth[attach])
            for k, c in enumerate(reversed(path)):
                visited[c] = epoch
                col[c] = color
                depth[c] = base_depth + k + 1
        else:
            for c in path:
                visited[c] = epoch
                col[c] = color
        return path if want_path else None

    def tree_branch(self, x, y, z):
        """Ensure (x,y,z) is in the tree; one Wilson branch if it is not."""
        cur = self.idx(x, y, z)
        if self._visited[cur] == self._epoch:
            return
        attach, self._sess_state = self._walk(x, y, z, self._sess_state, self.rb)
        color = _BLUE if attach < 0 else self._color[attach]
        self._retrace(x, y, z, attach, color)

    def tree_branch_all(self, sub_radius=None):
        """Run branches from every site of B(0, sub_radius) in lex order."""
        r = self.rb if sub_radius is None else sub_radius
        for x in range(-r, r + 1):
            for y in range(-r, r + 1):
                for z in range(-r, r + 1):
                    self.tree_branch(x, y, z)

    def wilson_full(self, state, zero_rooted=False):
        """Exact wired UST (or 0-wired two-root forest) of the whole box."""
        self.tree_begin(state, zero_rooted)
        self.tree_branch_all()
        return self._sess_state

    # accessors (valid for the current epoch)

    def parent_dir_array(self):
        out = np.array(self._parent_dir, dtype=np.int8, copy=True)
        out[self._visited != self._epoch] = -2  # not in tree
        return out

    def color_array(self):
        out = np.array(self._color, dtype=np.uint8, copy=True)
        out[self._visited != self._epoch] = 255
        return out

    def depth_array(self):
        out = np.array(self._depth, dtype=np.int32, copy=True)
        out[self._visited != self._epoch] = -1
        return out

    # ------------------------------------------------------------------
    # burning-bijection heights from the current full tree

    def md_heights(self):
        """Recurrent heights bijectively encoding the current spanning tree.

        When a site burns (at burning time = its tree depth), its height
        is 2d - (#edges to earlier-burnt sites) + (rank of its parent edge
        among the edges to sites burnt exactly one round earlier).
        """
        if self._visited is None or not (self._visited == self._epoch).all():
            raise RuntimeError("md_heights requires a full spanning tree")
        rb, L, n = self.rb, self.L, self.n
        depth = self._depth
        parent_dir = self._parent_dir
        h = np.zeros(n, dtype=np.int16)
        for ix in range(L):
            for iy in range(L):
                for iz in range(L):
                    v = (ix * L + iy) * L + iz
                    dv = depth[v]
                    b = 0
                    rank = 0
                    pd = parent_dir[v]
                    for d in range(6):
                        jx = ix + _DX[d]
                        jy = iy + _DY[d]
                        jz = iz + _DZ[d]
                        if 0 <= jx < L and 0 <= jy < L and 0 <= jz < L:
                            td = depth[(jx * L + jy) * L + jz]
                        else:
                            td = 0
                        if td < dv:
                            b += 1
                        if td == dv - 1 and d < pd:
                            rank += 1
                    h[v] = 6 - b + rank
        return h

    # ------------------------------------------------------------------
    # past-of-origin / zero-tree closure samplers

    def _red_closure(self, state, spine, stop_r, stop_n, stop_i,
                     halt_on_boundary=True, red_sink=None):
        """Grow the red component by Wilson branches until it is closed.

        spine=True: UST past coloring (first branch 0 -> root is blue,
        origin red).  spine=False: 0-wired forest, origin is a red root.
        Stops early once diameter/volume/depth all exceed the stop values
        (FLAG_EXCEEDS) or, when halt_on_boundary, as soon as a red site
        reaches the box face (FLAG_BOUNDARY: values are right-censored).
        Returns (diam_ext, vol, diam_int, flag, state).
        """
        self._need_tree(with_depth=False)
        self._new_epoch()
        o = self.idx(0, 0, 0)
        if spine:
            attach, state = self._walk(0, 0, 0, state, self.rb)
            # fresh tree: the only absorber is the wired root
            self._retrace(0, 0, 0, attach, _BLUE)
            self._color[o] = _RED
        else:
            self._visited[o] = self._epoch
            self._parent_dir[o] = -1
            self._color[o] = _RED
        red_cells = [o]
        red_parent = [-1]
        red_depth = [0]
        red_index = {o: 0}
        if red_sink is not None:
            red_sink.append(o)
        minx = maxx = miny = maxy = minz = maxz = 0
        vol = 1
        max_depth = 0
        touched = self.rb == 0
        exceeded = False
        halt = touched and halt_on_boundary
        queue = deque([o])
        while queue and not halt:
            c = queue.popleft()
            cx, cy, cz = self.coords(c)
            for d in range(6):
                nx, ny, nz = cx + _DX[d], cy + _DY[d], cz + _DZ[d]
                if abs(nx) > self.rb or abs(ny) > self.rb or abs(nz) > self.rb:
                    continue
                ni = self.idx(nx, ny, nz)
                if self._visited[ni] == self._epoch:
                    continue
                attach, state = self._walk(nx, ny, nz, state, self.rb)
                color = _BLUE if attach < 0 else self._color[attach]
                path = self._retrace(nx, ny, nz, attach, color, want_path=True)
                if color != _RED:
                    continue
                # append new red cells attach-side first so parents exist
                parent_red = red_index[attach]
                for cell in reversed(path):
                    dep = red_depth[parent_red] + 1
                    red_index[cell] = len(red_cells)
                    red_cells.append(cell)
                    red_parent.append(parent_red)
                    red_depth.append(dep)
                    parent_red = red_index[cell]
                    queue.append(cell)
                    if red_sink is not None:
                        red_sink.append(cell)
                    px, py, pz = self.coords(cell)
                    minx = min(minx, px)
                    maxx = max(maxx, px)
                    miny = min(miny, py)
                    maxy = max(maxy, py)
                    minz = min(minz, pz)
                    maxz = max(maxz, pz)
                    vol += 1
                    if dep > max_depth:
                        max_depth = dep
                    if abs(px) == self.rb or abs(py) == self.rb or abs(pz) == self.rb:
                        touched = True
                if touched and halt_on_boundary:
                    halt = True
                    break
                diam = max(maxx - minx, maxy - miny, maxz - minz)
                if diam >= stop_r and vol >= stop_n and max_depth >= stop_i:
                    exceeded = True
                    halt = True
                    break
        diam = max(maxx - minx, maxy - miny, maxz - minz)
        if exceeded:
            flag = FLAG_EXCEEDS
            dint = max_depth
        else:
            flag = FLAG_BOUNDARY if touched else FLAG_COMPLETE
            dint = _tree_diameter(red_cells, red_parent)
        return diam, vol, dint, flag, state

    def past_batch(self, reps, master, stream_base, stop_r, stop_n, stop_i,
                   halt_on_boundary=True):
        return self._closure_batch(True, reps, master, stream_base,
                                   stop_r, stop_n, stop_i, halt_on_boundary)

    def zero_tree_batch(self, reps, master, stream_base, stop_r, stop_n, stop_i,
                        halt_on_boundary=True):
        return self._closure_batch(False, reps, master, stream_base,
                                   stop_r, stop_n, stop_i, halt_on_boundary)

    def _closure_batch(self, spine, reps, master, stream_base, stop_r, stop_n, stop_i,
                       halt_on_boundary=True):
        diam = np.empty(reps, dtype=np.int32)
        vol = np.empty(reps, dtype=np.int64)
        dint = np.empty(reps, dtype=np.int32)
        flag = np.empty(reps, dtype=np.uint8)
        for i in range(reps):
            st = stream_state(master, stream_base + i)
            diam[i], vol[i], dint[i], flag[i], _ = self._red_closure(
                st, spine, stop_r, stop_n, stop_i, halt_on_boundary=halt_on_boundary)
        return diam, vol, dint, flag

    def red_set_once(self, state, spine):
        """One complete closure sample returning the red set (for tests)."""
        cells = []
        stats = self._red_closure(state, spine, 2 ** 30, 2 ** 62, 2 ** 30,
                                  halt_on_boundary=False, red_sink=cells)
        return [self.coords(c) for c in cells], stats[:4]

    # ------------------------------------------------------------------
    # one-point 0-tree membership: walk from x until it hits 0 or exits

    def hit_zero_batch(self, x, y, z, reps, master, stream_base):
        rb = self.rb
        hits = 0
        for i in range(reps):
            state = stream_state(master, stream_base + i)
            cx, cy, cz = x, y, z
            while True:
                if cx == 0 and cy == 0 and cz == 0:
                    hits += 1
                    break
                d, state = _bounded(6, state)
                cx += _DX[d]
                cy += _DY[d]
                cz += _DZ[d]
                if abs(cx) > rb or abs(cy) > rb or abs(cz) > rb:
                    break
        return hits

    # ------------------------------------------------------------------
    # LERW non-intersection / length replica (alpha and beta estimators)

    def _need_mark(self):
        if self._mark is None:
            self._mark = np.zeros(self.n, dtype=np.uint32)
            self._mark_base = 0
        self._need_lastdir()

    def alpha_batch(self, r_list, walk_bound, reps, master, stream_base):
        """Per radius R: count replicas where an independent walk stopped at
        its first exit of B(0,R) avoids the loop-erased walk truncated at
        its first exit of B(0,R); also sum the truncated lengths (edges).

        walk_bound is the outer radius N for the underlying walk; the box
        must have radius >= N + 1 so exit sites stay addressable.
        """
        rs = list(r_list)
        nr = len(rs)
        if walk_bound + 1 > self.rb:
            raise ValueError("box too small for walk bound")
        if any(rs[i] >= rs[i + 1] for i in range(nr - 1)):
            raise ValueError("radii must be ascending")
        if rs[-1] > walk_bound:
            raise ValueError("largest radius exceeds walk bound")
        self._need_mark()
        surv = np.zeros(nr, dtype=np.int64)
        lensum = np.zeros(nr, dtype=np.int64)
        last_dir = self._last_dir
        mark = self._mark
        rmax = rs[-1]
        for i in range(reps):
            state = stream_state(master, stream_base + i)
            # reserve a fresh mark window for this replica
            if self._mark_base >= 0xF0000000:
                mark[:] = 0
                self._mark_base = 0
            base = self._mark_base
            # walk from the origin until it leaves B(0, walk_bound)
            x = y = z = 0
            while True:
                d, state = _bounded(6, state)
                last_dir[self.idx(x, y, z)] = d
                x += _DX[d]
                y += _DY[d]
                z += _DZ[d]
                if max(abs(x), abs(y), abs(z)) > walk_bound:
                    break
            # retrace: mark gamma ranks up to its first exit of B(0, rmax)
            gamlen = [0] * nr
            x = y = z = 0
            rank = 0
            ridx = 0
            while True:
                c = self.idx(x, y, z)
                mark[c] = base + 1 + rank
                nrm = max(abs(x), abs(y), abs(z))
                while ridx < nr and nrm > rs[ridx]:
                    gamlen[ridx] = rank
                    ridx += 1
                if ridx >= nr:
                    break
                d = last_dir[c]
                x += _DX[d]
                y += _DY[d]
                z += _DZ[d]
                rank += 1
            self._mark_base = base + 1 + rank
            # independent walk from the origin to its first exit of B(0,rmax)
            fail = [False] * nr
            x = y = z = 0
            ridx = 0
            while ridx < nr:
                d, state = _bounded(6, state)
                x += _DX[d]
                y += _DY[d]
                z += _DZ[d]
                m = int(mark[self.idx(x, y, z)])
                if m > base:
                    rho = m - base - 1
                    for j in range(ridx, nr):
                        if rho <= gamlen[j]:
                            fail[j] = True
                nrm = max(abs(x), abs(y), abs(z))
                while ridx < nr and nrm > rs[ridx]:
                    if not fail[ridx]:
                        surv[ridx] += 1
                    ridx += 1
            for j in range(nr):
                lensum[j] += gamlen[j]
        return surv, lensum

    # ------------------------------------------------------------------
    # sandpile dynamics on the box

    def _need_sand(self):
        if self._height is None:
            self._height = np.zeros(self.n, dtype=np.int16)
            self._present = np.zeros(self.n, dtype=np.uint8)
            self._av_stamp = np.zeros(self.n, dtype=np.uint32)
            self._av_epoch = 0

    def load_heights(self, h):
        self._need_sand()
        flat = np.asarray(h, dtype=np.int16).reshape(-1)
        if flat.shape[0] != self.n:
            raise ValueError("height array has wrong size")
        self._height[:] = flat

    def heights(self):
        return np.array(self._height, dtype=np.int16, copy=True)

    def _new_av_epoch(self):
        self._need_sand()
        if self._av_epoch >= 0xFFFFFFFE:
            self._av_stamp[:] = 0
            self._av_epoch = 0
        self._av_epoch += 1
        return self._av_epoch

    def _topple_into(self, c, h, queue, frozen=-1):
        """Topple site c once; push inside neighbours that become unstable."""
        rb = self.rb
        cx, cy, cz = self.coords(c)
        h[c] -= 6
        lost = 0
        for d in range(6):
            nx, ny, nz = cx + _DX[d], cy + _DY[d], cz + _DZ[d]
            if abs(nx) > rb or abs(ny) > rb or abs(nz) > rb:
                lost += 1
                continue
            ni = self.idx(nx, ny, nz)
            h[ni] += 1
            if h[ni] >= 6 and ni != frozen and not self._present[ni]:
                self._present[ni] = 1
                queue.append(ni)
        return lost

    def add_and_stabilize(self, x, y, z):
        """Add one grain at (x,y,z) and stabilize (FIFO order).

        Returns (total_topplings, cluster_size, cluster_diam_ext,
        truncated, grains_lost).
        """
        self._need_sand()
        h = self._height
        v = self.idx(x, y, z)
        h[v] += 1
        if h[v] < 6:
            return 0, 0, -1, False, 0
        epoch = self._new_av_epoch()
        stamp = self._av_stamp
        queue = deque([v])
        self._present[v] = 1
        av = 0
        lost = 0
        cluster = 0
        minx = maxx = miny = maxy = minz = maxz = 0
        first = True
        truncated = False
        rb = self.rb
        while queue:
            c = queue.popleft()
            self._present[c] = 0
            while h[c] >= 6:
                av += 1
                lost += self._topple_into(c, h, queue)
                if stamp[c] != epoch:
                    stamp[c] = epoch
                    cluster += 1
                    px, py, pz = self.coords(c)
                    if first:
                        minx = maxx = px
                        miny = maxy = py
                        minz = maxz = pz
                        first = False
                    else:
                        minx = min(minx, px)
                        maxx = max(maxx, px)
                        miny = min(miny, py)
                        maxy = max(maxy, py)
                        minz = min(minz, pz)
                        maxz = max(maxz, pz)
                    if abs(px) == rb or abs(py) == rb or abs(pz) == rb:
                        truncated = True
        diam = max(maxx - minx, maxy - miny, maxz - minz) if cluster else -1
        return av, cluster, diam, truncated, lost

    def chain_batch(self, steps):
        """Repeated add-at-origin measurements (stationarity-preserving)."""
        av = np.empty(steps, dtype=np.int64)
        avc = np.empty(steps, dtype=np.int64)
        diam = np.empty(steps, dtype=np.int32)
        trunc = np.empty(steps, dtype=np.uint8)
        for i in range(steps):
            a, c, dm, tr, _ = self.add_and_stabilize(0, 0, 0)
            av[i] = a
            avc[i] = c
            diam[i] = dm
            trunc[i] = 1 if tr else 0
        return av, avc, diam, trunc

    def waves_at_origin(self, collect_sites=False):
        """Add one grain at 0 and run the wave decomposition.

        Each wave topples the origin once and then every unstable site
        except the origin.  Returns (waves, total, truncated, violation)
        where waves is a list of dicts with size/diam (+ sites if asked);
        ``violation`` counts any site toppling twice within one wave
        (provably impossible; checked anyway).
        """
        self._need_sand()
        h = self._height
        o = self.idx(0, 0, 0)
        h[o] += 1
        waves = []
        total = 0
        truncated = False
        violation = 0
        rb = self.rb
        while h[o] >= 6:
            epoch = self._new_av_epoch()
            stamp = self._av_stamp
            queue = deque()
            total += 1
            stamp[o] = epoch
            size = 1
            minx = maxx = miny = maxy = minz = maxz = 0
            sites = [o] if collect_sites else None
            if rb == 0:
                truncated = True
            self._topple_into(o, h, queue, frozen=o)
            while queue:
                c = queue.popleft()
                self._present[c] = 0
                if h[c] < 6:
                    continue
                if stamp[c] == epoch:
                    violation += 1
                else:
                    stamp[c] = epoch
                    size += 1
                    px, py, pz = self.coords(c)
                    minx = min(minx, px)
                    maxx = max(maxx, px)
                    miny = min(miny, py)
                    maxy = max(maxy, py)
                    minz = min(minz, pz)
                    maxz = max(maxz, pz)
                    if abs(px) == rb or abs(py) == rb or abs(pz) == rb:
                        truncated = True
                    if sites is not None:
                        sites.append(c)
                total += 1
                self._topple_into(c, h, queue, frozen=o)
                if h[c] >= 6 and not self._present[c]:
                    self._present[c] = 1
                    queue.append(c)
            diam = max(maxx - minx, maxy - miny, maxz - minz)
            wave = {"size": size, "diam": diam}
            if collect_sites:
                wave["sites"] = [self.coords(c) for c in sites]
            waves.append(wave)
        return waves, total, truncated, violation

    # ------------------------------------------------------------------
    # intrinsic-ball / in-box component diagnostics over the lazy tree

    def intrinsic_ball(self, max_dist):
        """Grow the intrinsic tree ball around 0 with on-demand branches.

        Requires an active session (tree_begin) with the branch from the
        origin already placed.  Returns (size, max_extrinsic_norm).
        """
        o = self.idx(0, 0, 0)
        if self._visited[o] != self._epoch:
            raise RuntimeError("origin branch missing")
        dist = {o: 0}
        queue = deque([o])
        max_norm = 0
        while queue:
            c = queue.popleft()
            dc = dist[c]
            if dc >= max_dist:
                continue
            cx, cy, cz = self.coords(c)
            # parent edge
            pd = self._parent_dir[c]
            if pd >= 0:
                px, py, pz = cx + _DX[pd], cy + _DY[pd], cz + _DZ[pd]
                if abs(px) <= self.rb and abs(py) <= self.rb and abs(pz) <= self.rb:
                    pi = self.idx(px, py, pz)
                    if pi not in dist:
                        dist[pi] = dc + 1
                        max_norm = max(max_norm, abs(px), abs(py), abs(pz))
                        queue.append(pi)
            # child edges need every neighbour's branch to exist
            for d in range(6):
                nx, ny, nz = cx + _DX[d], cy + _DY[d], cz + _DZ[d]
                if abs(nx) > self.rb or abs(ny) > self.rb or abs(nz) > self.rb:
                    continue
                self.tree_branch(nx, ny, nz)
                ni = self.idx(nx, ny, nz)
                pd = self._parent_dir[ni]
                if pd < 0:
                    continue
                tx, ty, tz = nx + _DX[pd], ny + _DY[pd], nz + _DZ[pd]
                if (tx, ty, tz) == (cx, cy, cz) and ni not in dist:
                    dist[ni] = dc + 1
                    max_norm = max(max_norm, abs(nx), abs(ny), abs(nz))
                    queue.append(ni)
        return len(dist), max_norm

    def component_stats(self, sub_radius):
        """Component of 0 in (tree intersected with B(0, sub_radius)).

        Branches every site of the sub-box first.  Returns (size,
        max_tree_dist).  Tree paths inside the component stay inside the
        sub-box, so the distances are intrinsic distances.
        """
        self.tree_branch_all(sub_radius)
        r = sub_radius
        o = self.idx(0, 0, 0)
        dist = {o: 0}
        queue = deque([o])
        max_dist = 0
        while queue:
            c = queue.popleft()
            dc = dist[c]
            cx, cy, cz = self.coords(c)
            pd = self._parent_dir[c]
            cand = []
            if pd >= 0:
                px, py, pz = cx + _DX[pd], cy + _DY[pd], cz + _DZ[pd]
                if max(abs(px), abs(py), abs(pz)) <= r:
                    cand.append((px, py, pz))
            for d in range(6):
                nx, ny, nz = cx + _DX[d], cy + _DY[d], cz + _DZ[d]
                if max(abs(nx), abs(ny), abs(nz)) > r:
                    continue
                ni = self.idx(nx, ny, nz)
                qd = self._parent_dir[ni]
                if qd < 0:
                    continue
                if (nx + _DX[qd], ny + _DY[qd], nz + _DZ[qd]) == (cx, cy, cz):
                    cand.append((nx, ny, nz))
            for (nx, ny, nz) in cand:
                ni = self.idx(nx, ny, nz)
                if ni not in dist:
                    dist[ni] = dc + 1
                    max_dist = max(max_dist, dc + 1)
                    queue.append(ni)
        return len(dist), max_dist


def _tree_diameter(cells, parent):
    """Diameter of a tree given parent indices (double BFS)."""
    k = len(cells)
    if k <= 1:
        return 0
    children = [[] for _ in range(k)]
    for i in range(1, k):
        children[parent[i]].append(i)

    def bfs(start):
        dist = [-1] * k
        dist[start] = 0
        queue = deque([start])
        far, fard = start, 0
        while queue:
            u = queue.popleft()
            du = dist[u]
            nbrs = children[u]
            p = parent[u]
            for v in (nbrs + ([p] if p >= 0 else [])):
                if dist[v] < 0:
                    dist[v] = du + 1
                    if du + 1 > fard:
                        fard = du + 1
                        far = v
                    queue.append(v)
        return far, fard

    u, _ = bfs(0)
    _, d = bfs(u)
    return d


# ----------------------------------------------------------------------
# small-domain (explicit site set) kernels

def tiny_wilson_batch(nbr, order, root, reps, master, stream_base):
    """Wilson's algorithm on an explicit wired site set, batched.

    nbr: int32[n, 2d] neighbour table in global edge order (-1 = wired
    edge to the root).  order: site processing order.  root: extra root
    site index (-1 for none, i.e. plain wired UST).  Returns parent
    directions int8[reps, n] with -1 at root sites.
    """
    nbr = np.asarray(nbr, dtype=np.int32)
    order = np.asarray(order, dtype=np.int32)
    n, two_d = nbr.shape
    out = np.empty((reps, n), dtype=np.int8)
    for rep in range(reps):
        state = stream_state(master, stream_base + rep)
        visited = np.zeros(n, dtype=np.uint8)
        last_dir = np.zeros(n, dtype=np.int8)
        parent = np.full(n, -1, dtype=np.int8)
        if root >= 0:
            visited[root] = 1
        for s in order:
            if visited[s]:
                continue
            cur = s
            while True:
                if cur >= 0 and visited[cur]:
                    break
                if cur < 0:
                    break
                d, state = _bounded(two_d, state)
                last_dir[cur] = d
                cur = nbr[cur, d]
            attach = cur
            cur = s
            while cur != attach and cur >= 0:
                visited[cur] = 1
                parent[cur] = last_dir[cur]
                cur = nbr[cur, last_dir[cur]]
        out[rep] = parent
    return out


def tiny_md_heights(nbr, parent):
    """Burning-bijection heights for one tree on a site-set domain."""
    nbr = np.asarray(nbr, dtype=np.int32)
    parent = np.asarray(parent, dtype=np.int8)
    n, two_d = nbr.shape
    depth = np.full(n, -1, dtype=np.int64)
    for v in range(n):
        if depth[v] >= 0:
            continue
        chain = []
        cur = v
        while cur >= 0 and depth[cur] < 0 and parent[cur] >= 0:
            chain.append(cur)
            cur = nbr[cur, parent[cur]]
        base = 0 if cur < 0 else (0 if parent[cur] < 0 and depth[cur] < 0 else depth[cur])
        if cur >= 0 and parent[cur] < 0:
            depth[cur] = 0
            base = 0
        for c in reversed(chain):
            base += 1
            depth[c] = base
    h = np.zeros(n, dtype=np.int16)
    for v in range(n):
        if parent[v] < 0:
            continue  # root site carries no height
        dv = depth[v]
        b = 0
        rank = 0
        pd = parent[v]
        for d in range(two_d):
            t = nbr[v, d]
            td = 0 if t < 0 else depth[t]
            if td < dv:
                b += 1
            if td == dv - 1 and d < pd:
                rank += 1
        h[v] = two_d - b + rank
    return h


def _tiny_stabilize(nbr, h, odometer=None, frozen=-1):
    """FIFO stabilization on a site-set domain; returns grains lost."""
    n, two_d = nbr.shape
    queue = deque(i for i in range(n) if h[i] >= two_d and i != frozen)
    present = np.zeros(n, dtype=np.uint8)
    for i in queue:
        present[i] = 1
    lost = 0
    while queue:
        c = queue.popleft()
        present[c] = 0
        while h[c] >= two_d:
            h[c] -= two_d
            if odometer is not None:
                odometer[c] += 1
            for d in range(two_d):
                t = nbr[c, d]
                if t < 0:
                    lost += 1
                    continue
                h[t] += 1
                if h[t] >= two_d and t != frozen and not present[t]:
                    present[t] = 1
                    queue.append(t)
    return lost


def tiny_dhar_batch(nbr, v, xs, reps, master, stream_base):
    """Monte Carlo of Dhar's formula on a site-set domain.

    Per replica: sample a stationary configuration (Wilson tree through
    the burning bijection), add one grain at v, stabilize, and record the
    toppling count at each requested site.  Returns (sums, sums of
    squares) as int64 arrays.
    """
    nbr = np.asarray(nbr, dtype=np.int32)
    xs = np.asarray(xs, dtype=np.int64)
    n, two_d = nbr.shape
    order = np.arange(n, dtype=np.int32)
    sums = np.zeros(len(xs), dtype=np.int64)
    sums2 = np.zeros(len(xs), dtype=np.int64)
    for rep in range(reps):
        parent = tiny_wilson_batch(nbr, order, -1, 1, master, stream_base + rep)[0]
        h = tiny_md_heights(nbr, parent).astype(np.int64)
        od = np.zeros(n, dtype=np.int64)
        h[v] += 1
        _tiny_stabilize(nbr, h, odometer=od)
        for j, x in enumerate(xs):
            c = od[x]
            sums[j] += c
            sums2[j] += c * c
    return sums, sums2


def tiny_first_wave_batch(nbr, coords, origin, reps, master, stream_base):
    """First-wave extrinsic diameters under the stationary measure.

    Per replica: stationary configuration via Wilson + burning bijection,
    add a grain at the origin site; if it topples, run one wave (origin
    once, then everything else unstable, origin frozen) and record the
    wave's extrinsic diameter; else record -1.
    """
    nbr = np.asarray(nbr, dtype=np.int32)
    coords = np.asarray(coords, dtype=np.int64)
    n, two_d = nbr.shape
    order = np.arange(n, dtype=np.int32)
    out = np.empty(reps, dtype=np.int32)
    for rep in range(reps):
        parent = tiny_wilson_batch(nbr, order, -1, 1, master, stream_base + rep)[0]
        h = tiny_md_heights(nbr, parent).astype(np.int64)
        h[origin] += 1
        if h[origin] < two_d:
            out[rep] = -1
            continue
        h[origin] -= two_d
        toppled = [origin]
        for d in range(two_d):
            t = nbr[origin, d]
            if t >= 0:
                h[t] += 1
        od = np.zeros(n, dtype=np.int64)
        _tiny_stabilize(nbr, h, odometer=od, frozen=origin)
        for i in range(n):
            if od[i] > 0:
                toppled.append(i)
        pts = coords[np.array(toppled, dtype=np.int64)]
        out[rep] = int((pts.max(axis=0) - pts.min(axis=0)).max())
    return out
