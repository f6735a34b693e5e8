# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled backend for the hot sampling kernels.

Mirrors ``_pykernels`` operation-for-operation and draw-for-draw; see
that module's docstring for the shared conventions.  Any change here must
be made there as well (the cross-backend tests enforce equality).
"""
import numpy as np

from libc.stdint cimport (int8_t, int16_t, int32_t, int64_t, uint8_t,
                          uint32_t, uint64_t)

BACKEND_NAME = "cython"

FLAG_COMPLETE = 0
FLAG_BOUNDARY = 1
FLAG_EXCEEDS = 2

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15
cdef uint64_t STREAM_SALT = 0x5851F42D4C957F2D
cdef uint64_t MASTER_SALT = 0xDA942042E4DD58B5

cdef int DX[6]
cdef int DY[6]
cdef int DZ[6]
DX[0], DX[1], DX[2], DX[3], DX[4], DX[5] = 1, -1, 0, 0, 0, 0
DY[0], DY[1], DY[2], DY[3], DY[4], DY[5] = 0, 0, 1, -1, 0, 0
DZ[0], DZ[1], DZ[2], DZ[3], DZ[4], DZ[5] = 0, 0, 0, 0, 1, -1

cdef int BLUE = 0
cdef int RED = 1


cdef inline uint64_t c_mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline uint64_t c_stream_state(uint64_t master, uint64_t stream) noexcept nogil:
    cdef uint64_t a = c_mix64(master ^ STREAM_SALT)
    cdef uint64_t b = c_mix64(stream ^ MASTER_SALT)
    return c_mix64(a + b * GOLDEN)


cdef inline uint64_t c_next(uint64_t* state) noexcept nogil:
    state[0] += GOLDEN
    return c_mix64(state[0])


cdef inline int c_bit_length(int v) noexcept nogil:
    cdef int k = 0
    while v > 0:
        v >>= 1
        k += 1
    return k


cdef inline int c_bounded(int n, int shift, uint64_t* state) noexcept nogil:
    # shift must be 64 - bit_length(n-1); caller precomputes it
    cdef uint64_t r
    if n <= 1:
        return 0
    while True:
        r = c_next(state) >> shift
        if r < <uint64_t>n:
            return <int>r


def mix64(z):
    return int(c_mix64(<uint64_t>(z & 0xFFFFFFFFFFFFFFFF)))


def stream_state(master, stream):
    return int(c_stream_state(<uint64_t>(master & 0xFFFFFFFFFFFFFFFF),
                              <uint64_t>(stream & 0xFFFFFFFFFFFFFFFF)))


cdef class BoxKernel:
    """Sampling state for one wired box of radius ``rb`` (d = 3)."""

    cdef public int rb
    cdef public int L
    cdef public long long n
    cdef uint32_t epoch
    cdef uint64_t sess_state
    cdef bint sess_zero
    cdef bint with_depth
    # numpy owners (None while unallocated) + raw views
    cdef object np_visited, np_last_dir, np_parent_dir, np_color, np_depth, np_ridx
    cdef uint32_t[::1] visited
    cdef int8_t[::1] last_dir
    cdef int8_t[::1] parent_dir
    cdef uint8_t[::1] color
    cdef int32_t[::1] depth
    cdef int32_t[::1] ridx
    # loop-erased path scratch
    cdef object np_pathbuf
    cdef int64_t[::1] pathbuf
    cdef long long path_cap
    # red-closure arrays
    cdef object np_red_cells, np_red_parent, np_red_depth
    cdef int64_t[::1] red_cells
    cdef int32_t[::1] red_parent
    cdef int32_t[::1] red_depth
    cdef long long red_cap
    # FIFO queue buffer (sandpile + diagnostics BFS)
    cdef object np_queue
    cdef int64_t[::1] queue
    cdef long long queue_cap
    # sandpile
    cdef object np_height, np_present, np_av_stamp
    cdef int16_t[::1] height
    cdef uint8_t[::1] present
    cdef uint32_t[::1] av_stamp
    cdef uint32_t av_epoch
    # gamma marks
    cdef object np_mark
    cdef uint32_t[::1] mark
    cdef uint64_t mark_base
    # diagnostics scratch (ball BFS)
    cdef object np_ball_dist, np_ball_stamp
    cdef int32_t[::1] ball_dist
    cdef uint32_t[::1] ball_stamp
    cdef uint32_t ball_epoch

    def __init__(self, radius):
        if radius < 0:
            raise ValueError("radius must be >= 0")
        self.rb = radius
        self.L = 2 * radius + 1
        self.n = <long long>self.L * self.L * self.L
        self.epoch = 0
        self.av_epoch = 0
        self.ball_epoch = 0
        self.mark_base = 0
        self.red_cap = 0
        self.queue_cap = 0
        self.path_cap = 0
        self.np_visited = None
        self.np_last_dir = None
        self.np_parent_dir = None
        self.np_color = None
        self.np_depth = None
        self.np_ridx = None
        self.np_pathbuf = None
        self.np_red_cells = None
        self.np_queue = None
        self.np_height = None
        self.np_mark = None
        self.np_ball_dist = None
        self.with_depth = True

    # ------------------------------------------------------------------
    # allocation helpers

    def _need_lastdir(self):
        if self.np_last_dir is None:
            self.np_last_dir = np.zeros(self.n, dtype=np.int8)
            self.last_dir = self.np_last_dir

    def _need_tree(self, with_depth):
        self._need_lastdir()
        self._need_pathbuf()
        if self.np_visited is None:
            self.np_visited = np.zeros(self.n, dtype=np.uint32)
            self.visited = self.np_visited
            self.np_parent_dir = np.zeros(self.n, dtype=np.int8)
            self.parent_dir = self.np_parent_dir
            self.np_color = np.zeros(self.n, dtype=np.uint8)
            self.color = self.np_color
        if with_depth and self.np_depth is None:
            self.np_depth = np.zeros(self.n, dtype=np.int32)
            self.depth = self.np_depth
        self.with_depth = with_depth

    def _need_ridx(self):
        if self.np_ridx is None:
            self.np_ridx = np.zeros(self.n, dtype=np.int32)
            self.ridx = self.np_ridx

    def _need_pathbuf(self):
        if self.np_pathbuf is None:
            self.path_cap = 1 << 12
            self.np_pathbuf = np.zeros(self.path_cap, dtype=np.int64)
            self.pathbuf = self.np_pathbuf

    def _grow_pathbuf(self, need):
        while self.path_cap < need:
            self.path_cap *= 2
        grown = np.zeros(self.path_cap, dtype=np.int64)
        grown[: self.np_pathbuf.shape[0]] = self.np_pathbuf
        self.np_pathbuf = grown
        self.pathbuf = grown

    def _need_red(self):
        if self.np_red_cells is None:
            self.red_cap = 4096
            self.np_red_cells = np.zeros(self.red_cap, dtype=np.int64)
            self.red_cells = self.np_red_cells
            self.np_red_parent = np.zeros(self.red_cap, dtype=np.int32)
            self.red_parent = self.np_red_parent
            self.np_red_depth = np.zeros(self.red_cap, dtype=np.int32)
            self.red_depth = self.np_red_depth

    def _grow_red(self, need):
        while self.red_cap < need:
            self.red_cap *= 2
        cells = np.zeros(self.red_cap, dtype=np.int64)
        cells[: self.np_red_cells.shape[0]] = self.np_red_cells
        parents = np.zeros(self.red_cap, dtype=np.int32)
        parents[: self.np_red_parent.shape[0]] = self.np_red_parent
        depths = np.zeros(self.red_cap, dtype=np.int32)
        depths[: self.np_red_depth.shape[0]] = self.np_red_depth
        self.np_red_cells = cells
        self.red_cells = cells
        self.np_red_parent = parents
        self.red_parent = parents
        self.np_red_depth = depths
        self.red_depth = depths

    def _need_queue(self):
        if self.np_queue is None:
            self.queue_cap = 1 << 16
            self.np_queue = np.zeros(self.queue_cap, dtype=np.int64)
            self.queue = self.np_queue

    def _grow_queue(self):
        self.queue_cap *= 2
        grown = np.zeros(self.queue_cap, dtype=np.int64)
        grown[: self.np_queue.shape[0]] = self.np_queue
        self.np_queue = grown
        self.queue = grown

    cdef void c_queue_room(self, long long* qh, long long* qt) except *:
        """Make room for one push: compact the live region or grow."""
        cdef long long live, i
        if qh[0] > 0:
            live = qt[0] - qh[0]
            for i in range(live):
                self.queue[i] = self.queue[qh[0] + i]
            qh[0] = 0
            qt[0] = live
            if qt[0] < self.queue_cap:
                return
        self._grow_queue()

    def _need_sand(self):
        self._need_queue()
        if self.np_height is None:
            self.np_height = np.zeros(self.n, dtype=np.int16)
            self.height = self.np_height
            self.np_present = np.zeros(self.n, dtype=np.uint8)
            self.present = self.np_present
            self.np_av_stamp = np.zeros(self.n, dtype=np.uint32)
            self.av_stamp = self.np_av_stamp

    def _need_mark(self):
        if self.np_mark is None:
            self.np_mark = np.zeros(self.n, dtype=np.uint32)
            self.mark = self.np_mark
            self.mark_base = 0
        self._need_lastdir()

    def _need_ball(self):
        if self.np_ball_dist is None:
            self.np_ball_dist = np.zeros(self.n, dtype=np.int32)
            self.ball_dist = self.np_ball_dist
            self.np_ball_stamp = np.zeros(self.n, dtype=np.uint32)
            self.ball_stamp = self.np_ball_stamp

    def release_tree(self):
        self.np_visited = None
        self.np_last_dir = None
        self.np_parent_dir = None
        self.np_color = None
        self.np_depth = None
        self.np_ridx = None
        self.visited = None
        self.last_dir = None
        self.parent_dir = None
        self.color = None
        self.depth = None
        self.ridx = None

    def _new_epoch(self):
        if self.epoch >= 0xFFFFFFFE:
            self.np_visited[:] = 0
            self.epoch = 0
        self.epoch += 1
        return self.epoch

    # ------------------------------------------------------------------
    # geometry

    cdef inline int64_t c_idx(self, int x, int y, int z) noexcept nogil:
        return (<int64_t>(x + self.rb) * self.L + (y + self.rb)) * self.L + (z + self.rb)

    cdef inline void c_coords(self, int64_t idx, int* x, int* y, int* z) noexcept nogil:
        cdef int L = self.L
        z[0] = <int>(idx % L) - self.rb
        y[0] = <int>((idx / L) % L) - self.rb
        x[0] = <int>(idx / (<int64_t>L * L)) - self.rb

    def idx(self, x, y, z):
        return int(self.c_idx(x, y, z))

    def coords(self, idx):
        cdef int x, y, z
        self.c_coords(idx, &x, &y, &z)
        return x, y, z

    # ------------------------------------------------------------------
    # walk + retrace

    cdef int64_t c_walk(self, int x, int y, int z, uint64_t* state, int bound) noexcept nogil:
        cdef int64_t cur
        cdef int d
        while True:
            cur = self.c_idx(x, y, z)
            if self.visited[cur] == self.epoch:
                return cur
            d = c_bounded(6, 61, state)
            self.last_dir[cur] = <int8_t>d
            x += DX[d]
            y += DY[d]
            z += DZ[d]
            if x > bound or x < -bound or y > bound or y < -bound or z > bound or z < -bound:
                return -1

    cdef int64_t c_path_len(self, int x, int y, int z, int64_t attach) noexcept nogil:
        cdef int64_t cur, m = 0
        cdef int d
        cur = self.c_idx(x, y, z)
        while cur != attach:
            m += 1
            d = self.last_dir[cur]
            x += DX[d]
            y += DY[d]
            z += DZ[d]
            if x > self.rb or x < -self.rb or y > self.rb or y < -self.rb or z > self.rb or z < -self.rb:
                break
            cur = self.c_idx(x, y, z)
        return m

    cdef int64_t c_retrace(self, int x, int y, int z, int64_t attach, int color) except? -1:
        """Mark the loop-erased path; pathbuf holds it start->attach side.

        Returns the path length (attach itself excluded).
        """
        cdef int64_t cur, m, k, c
        cdef int d
        cdef int32_t base_depth
        m = self.c_path_len(x, y, z, attach)
        if self.path_cap < m:
            self._grow_pathbuf(m)
        cur = self.c_idx(x, y, z)
        k = 0
        while k < m:
            self.pathbuf[k] = cur
            k += 1
            d = self.last_dir[cur]
            self.parent_dir[cur] = <int8_t>d
            x += DX[d]
            y += DY[d]
            z += DZ[d]
            if x > self.rb or x < -self.rb or y > self.rb or y < -self.rb or z > self.rb or z < -self.rb:
                break
            cur = self.c_idx(x, y, z)
        if self.with_depth:
            base_depth = 0 if attach < 0 else self.depth[attach]
            for k in range(m):
                c = self.pathbuf[m - 1 - k]
                self.visited[c] = self.epoch
                self.color[c] = <uint8_t>color
                self.depth[c] = base_depth + <int32_t>(k + 1)
        else:
            for k in range(m):
                c = self.pathbuf[k]
                self.visited[c] = self.epoch
                self.color[c] = <uint8_t>color
        return m

    # ------------------------------------------------------------------
    # lazy tree session

    def tree_begin(self, state, zero_rooted=False):
        self._need_tree(True)
        self._new_epoch()
        self.sess_state = <uint64_t>(state & 0xFFFFFFFFFFFFFFFF)
        self.sess_zero = bool(zero_rooted)
        cdef int64_t o
        if zero_rooted:
            o = self.c_idx(0, 0, 0)
            self.visited[o] = self.epoch
            self.parent_dir[o] = -1
            self.color[o] = RED
            self.depth[o] = 0

    def tree_state(self):
        return int(self.sess_state)

    cdef void c_branch(self, int x, int y, int z) except *:
        cdef int64_t cur = self.c_idx(x, y, z)
        cdef int64_t attach
        cdef int col
        cdef uint64_t st
        if self.visited[cur] == self.epoch:
            return
        st = self.sess_state
        attach = self.c_walk(x, y, z, &st, self.rb)
        self.sess_state = st
        col = BLUE if attach < 0 else self.color[attach]
        self.c_retrace(x, y, z, attach, col)

    def tree_branch(self, x, y, z):
        self.c_branch(x, y, z)

    def tree_branch_all(self, sub_radius=None):
        cdef int r = self.rb if sub_radius is None else sub_radius
        cdef int x, y, z
        for x in range(-r, r + 1):
            for y in range(-r, r + 1):
                for z in range(-r, r + 1):
                    self.c_branch(x, y, z)

    def wilson_full(self, state, zero_rooted=False):
        self.tree_begin(state, zero_rooted)
        self.tree_branch_all()
        return int(self.sess_state)

    def parent_dir_array(self):
        out = np.array(self.np_parent_dir, dtype=np.int8, copy=True)
        out[np.asarray(self.np_visited) != self.epoch] = -2
        return out

    def color_array(self):
        out = np.array(self.np_color, dtype=np.uint8, copy=True)
        out[np.asarray(self.np_visited) != self.epoch] = 255
        return out

    def depth_array(self):
        out = np.array(self.np_depth, dtype=np.int32, copy=True)
        out[np.asarray(self.np_visited) != self.epoch] = -1
        return out

    # ------------------------------------------------------------------
    # burning-bijection heights

    def md_heights(self):
        if self.np_visited is None or self.np_depth is None:
            raise RuntimeError("md_heights requires a full spanning tree")
        if not bool((np.asarray(self.np_visited) == self.epoch).all()):
            raise RuntimeError("md_heights requires a full spanning tree")
        out = np.zeros(self.n, dtype=np.int16)
        cdef int16_t[::1] h = out
        cdef int L = self.L
        cdef int ix, iy, iz, d, jx, jy, jz, b, rank, pd
        cdef int64_t v
        cdef int32_t dv, td
        with nogil:
            for ix in range(L):
                for iy in range(L):
                    for iz in range(L):
                        v = (<int64_t>ix * L + iy) * L + iz
                        dv = self.depth[v]
                        b = 0
                        rank = 0
                        pd = self.parent_dir[v]
                        for d in range(6):
                            jx = ix + DX[d]
                            jy = iy + DY[d]
                            jz = iz + DZ[d]
                            if 0 <= jx < L and 0 <= jy < L and 0 <= jz < L:
                                td = self.depth[(<int64_t>jx * L + jy) * L + jz]
                            else:
                                td = 0
                            if td < dv:
                                b += 1
                            if td == dv - 1 and d < pd:
                                rank += 1
                        h[v] = <int16_t>(6 - b + rank)
        return out

    # ------------------------------------------------------------------
    # red-closure samplers (past of origin / zero-tree)

    cdef int c_red_closure(self, uint64_t* state, bint spine,
                           long long stop_r, long long stop_n, long long stop_i,
                           bint halt_on_boundary,
                           int64_t* out_diam, int64_t* out_vol, int64_t* out_dint,
                           long long* out_k) except? -9:
        """Returns the flag; red arrays hold the component on exit."""
        cdef int64_t o, attach, ni, cell, m
        cdef int cx, cy, cz, nx, ny, nz, px, py, pz, d, col
        cdef int minx = 0, maxx = 0, miny = 0, maxy = 0, minz = 0, maxz = 0
        cdef long long vol = 1, max_depth = 0, k = 1, qhead = 0, i
        cdef int32_t parent_red, dep
        cdef bint touched, exceeded = False, halt
        cdef int64_t diam
        self._need_tree(False)
        self._need_ridx()
        self._need_red()
        self._new_epoch()
        o = self.c_idx(0, 0, 0)
        if spine:
            attach = self.c_walk(0, 0, 0, state, self.rb)
            self.c_retrace(0, 0, 0, attach, BLUE)
            self.color[o] = RED
        else:
            self.visited[o] = self.epoch
            self.parent_dir[o] = -1
            self.color[o] = RED
        self.red_cells[0] = o
        self.red_parent[0] = -1
        self.red_depth[0] = 0
        self.ridx[o] = 0
        touched = self.rb == 0
        halt = touched and halt_on_boundary
        # FIFO over red cells: the queue IS the red list scanned in order
        while qhead < k and not halt:
            cell = self.red_cells[qhead]
            qhead += 1
            self.c_coords(cell, &cx, &cy, &cz)
            for d in range(6):
                nx = cx + DX[d]
                ny = cy + DY[d]
                nz = cz + DZ[d]
                if nx > self.rb or nx < -self.rb or ny > self.rb or ny < -self.rb or nz > self.rb or nz < -self.rb:
                    continue
                ni = self.c_idx(nx, ny, nz)
                if self.visited[ni] == self.epoch:
                    continue
                attach = self.c_walk(nx, ny, nz, state, self.rb)
                col = BLUE if attach < 0 else self.color[attach]
                m = self.c_retrace(nx, ny, nz, attach, col)
                if col != RED:
                    continue
                if self.red_cap < k + m:
                    self._grow_red(k + m)
                parent_red = self.ridx[attach]
                # append attach-side first so parents exist when assigned
                for i in range(m):
                    cell = self.pathbuf[m - 1 - i]
                    dep = self.red_depth[parent_red] + 1
                    self.red_cells[k + i] = cell
                    self.red_parent[k + i] = parent_red
                    self.red_depth[k + i] = dep
                    self.ridx[cell] = <int32_t>(k + i)
                    parent_red = <int32_t>(k + i)
                    self.c_coords(cell, &px, &py, &pz)
                    if px < minx: minx = px
                    if px > maxx: maxx = px
                    if py < miny: miny = py
                    if py > maxy: maxy = py
                    if pz < minz: minz = pz
                    if pz > maxz: maxz = pz
                    vol += 1
                    if dep > max_depth:
                        max_depth = dep
                    if px == self.rb or px == -self.rb or py == self.rb or py == -self.rb or pz == self.rb or pz == -self.rb:
                        touched = True
                k += m
                if touched and halt_on_boundary:
                    halt = True
                    break
                diam = maxx - minx
                if maxy - miny > diam: diam = maxy - miny
                if maxz - minz > diam: diam = maxz - minz
                if diam >= stop_r and vol >= stop_n and max_depth >= stop_i:
                    exceeded = True
                    halt = True
                    break
        diam = maxx - minx
        if maxy - miny > diam: diam = maxy - miny
        if maxz - minz > diam: diam = maxz - minz
        out_diam[0] = diam
        out_vol[0] = vol
        out_k[0] = k
        if exceeded:
            out_dint[0] = max_depth
            return FLAG_EXCEEDS
        out_dint[0] = self._red_diameter(k)
        return FLAG_BOUNDARY if touched else FLAG_COMPLETE

    cdef int64_t _red_diameter(self, long long k) except? -1:
        """Double BFS over the red tree held in the red arrays."""
        if k <= 1:
            return 0
        deg_np = np.zeros(k, dtype=np.int64)
        off_np = np.zeros(k + 1, dtype=np.int64)
        child_np = np.zeros(k - 1, dtype=np.int64)
        dist_np = np.empty(k, dtype=np.int64)
        bfs_np = np.empty(k, dtype=np.int64)
        cdef int64_t[::1] deg = deg_np
        cdef int64_t[::1] off = off_np
        cdef int64_t[::1] child = child_np
        cdef int64_t[::1] dist = dist_np
        cdef int64_t[::1] bfs = bfs_np
        cdef long long i, u, v, head, tail, far, fard, du, j, p
        cdef int pass_no
        with nogil:
            for i in range(1, k):
                deg[self.red_parent[i]] += 1
            off[0] = 0
            for i in range(k):
                off[i + 1] = off[i] + deg[i]
                deg[i] = 0
            for i in range(1, k):
                p = self.red_parent[i]
                child[off[p] + deg[p]] = i
                deg[p] += 1
            far = 0
            fard = 0
            for pass_no in range(2):
                for i in range(k):
                    dist[i] = -1
                u = far
                dist[u] = 0
                bfs[0] = u
                head = 0
                tail = 1
                far = u
                fard = 0
                while head < tail:
                    u = bfs[head]
                    head += 1
                    du = dist[u]
                    for j in range(off[u], off[u + 1]):
                        v = child[j]
                        if dist[v] < 0:
                            dist[v] = du + 1
                            if du + 1 > fard:
                                fard = du + 1
                                far = v
                            bfs[tail] = v
                            tail += 1
                    p = self.red_parent[u]
                    if p >= 0 and dist[p] < 0:
                        dist[p] = du + 1
                        if du + 1 > fard:
                            fard = du + 1
                            far = p
                        bfs[tail] = p
                        tail += 1
        return fard

    def _closure_batch(self, spine, reps, master, stream_base, stop_r, stop_n, stop_i,
                       halt_on_boundary=True):
        diam = np.empty(reps, dtype=np.int32)
        vol = np.empty(reps, dtype=np.int64)
        dint = np.empty(reps, dtype=np.int32)
        flag = np.empty(reps, dtype=np.uint8)
        cdef int32_t[::1] diam_v = diam
        cdef int64_t[::1] vol_v = vol
        cdef int32_t[::1] dint_v = dint
        cdef uint8_t[::1] flag_v = flag
        cdef long long i, reps_c = reps, k
        cdef uint64_t st, master_c = master & 0xFFFFFFFFFFFFFFFF
        cdef uint64_t base_c = stream_base & 0xFFFFFFFFFFFFFFFF
        cdef int64_t dm, vl, di
        cdef long long sr = stop_r, sn = stop_n, si = stop_i
        cdef bint spine_c = spine
        cdef bint halt_c = halt_on_boundary
        for i in range(reps_c):
            st = c_stream_state(master_c, base_c + <uint64_t>i)
            flag_v[i] = <uint8_t>self.c_red_closure(&st, spine_c, sr, sn, si, halt_c,
                                                    &dm, &vl, &di, &k)
            diam_v[i] = <int32_t>dm
            vol_v[i] = vl
            dint_v[i] = <int32_t>di
        return diam, vol, dint, flag

    def past_batch(self, reps, master, stream_base, stop_r, stop_n, stop_i,
                   halt_on_boundary=True):
        return self._closure_batch(True, reps, master, stream_base,
                                   stop_r, stop_n, stop_i, halt_on_boundary)

    def zero_tree_batch(self, reps, master, stream_base, stop_r, stop_n, stop_i,
                        halt_on_boundary=True):
        return self._closure_batch(False, reps, master, stream_base,
                                   stop_r, stop_n, stop_i, halt_on_boundary)

    def red_set_once(self, state, spine):
        cdef uint64_t st = state & 0xFFFFFFFFFFFFFFFF
        cdef int64_t dm, vl, di
        cdef long long k
        cdef int flag
        flag = self.c_red_closure(&st, spine, <long long>1 << 60, <long long>1 << 60,
                                  <long long>1 << 60, False, &dm, &vl, &di, &k)
        cells = [self.coords(int(self.red_cells[i])) for i in range(k)]
        return cells, (int(dm), int(vl), int(di), int(flag))

    # ------------------------------------------------------------------
    # one-point membership walk

    def hit_zero_batch(self, x, y, z, reps, master, stream_base):
        cdef long long hits = 0, i, reps_c = reps
        cdef uint64_t st, master_c = master & 0xFFFFFFFFFFFFFFFF
        cdef uint64_t base_c = stream_base & 0xFFFFFFFFFFFFFFFF
        cdef int cx, cy, cz, d, rb = self.rb
        cdef int x0 = x, y0 = y, z0 = z
        with nogil:
            for i in range(reps_c):
                st = c_stream_state(master_c, base_c + <uint64_t>i)
                cx = x0
                cy = y0
                cz = z0
                while True:
                    if cx == 0 and cy == 0 and cz == 0:
                        hits += 1
                        break
                    d = c_bounded(6, 61, &st)
                    cx += DX[d]
                    cy += DY[d]
                    cz += DZ[d]
                    if cx > rb or cx < -rb or cy > rb or cy < -rb or cz > rb or cz < -rb:
                        break
        return int(hits)

    # ------------------------------------------------------------------
    # LERW non-intersection / length replica

    def alpha_batch(self, r_list, walk_bound, reps, master, stream_base):
        rs_np = np.asarray(list(r_list), dtype=np.int64)
        cdef int64_t[::1] rs = rs_np
        cdef int nr = rs_np.shape[0]
        cdef int j
        if walk_bound + 1 > self.rb:
            raise ValueError("box too small for walk bound")
        for j in range(nr - 1):
            if rs[j] >= rs[j + 1]:
                raise ValueError("radii must be ascending")
        if rs[nr - 1] > walk_bound:
            raise ValueError("largest radius exceeds walk bound")
        self._need_mark()
        surv_np = np.zeros(nr, dtype=np.int64)
        lensum_np = np.zeros(nr, dtype=np.int64)
        gamlen_np = np.zeros(nr, dtype=np.int64)
        fail_np = np.zeros(nr, dtype=np.uint8)
        cdef int64_t[::1] surv = surv_np
        cdef int64_t[::1] lensum = lensum_np
        cdef int64_t[::1] gamlen = gamlen_np
        cdef uint8_t[::1] fail = fail_np
        cdef long long i, reps_c = reps
        cdef uint64_t st, master_c = master & 0xFFFFFFFFFFFFFFFF
        cdef uint64_t base_c = stream_base & 0xFFFFFFFFFFFFFFFF
        cdef uint64_t base
        cdef int x, y, z, d, nrm, ridx, wb = walk_bound
        cdef int64_t c, rank, m, rho
        for i in range(reps_c):
            st = c_stream_state(master_c, base_c + <uint64_t>i)
            if self.mark_base >= <uint64_t>0xF0000000:
                self.np_mark[:] = 0
                self.mark_base = 0
            base = self.mark_base
            rank = 0
            with nogil:
                # walk from the origin until it leaves B(0, walk_bound)
                x = 0
                y = 0
                z = 0
                while True:
                    d = c_bounded(6, 61, &st)
                    self.last_dir[self.c_idx(x, y, z)] = <int8_t>d
                    x += DX[d]
                    y += DY[d]
                    z += DZ[d]
                    if x > wb or x < -wb or y > wb or y < -wb or z > wb or z < -wb:
                        break
                # retrace and mark gamma ranks up to its first exit of B(0, rmax)
                x = 0
                y = 0
                z = 0
                ridx = 0
                while True:
                    c = self.c_idx(x, y, z)
                    self.mark[c] = <uint32_t>(base + 1 + <uint64_t>rank)
                    nrm = x if x >= 0 else -x
                    if (y if y >= 0 else -y) > nrm:
                        nrm = y if y >= 0 else -y
                    if (z if z >= 0 else -z) > nrm:
                        nrm = z if z >= 0 else -z
                    while ridx < nr and nrm > rs[ridx]:
                        gamlen[ridx] = rank
                        ridx += 1
                    if ridx >= nr:
                        break
                    d = self.last_dir[c]
                    x += DX[d]
                    y += DY[d]
                    z += DZ[d]
                    rank += 1
                # independent walk to its first exit of B(0, rmax)
                for j in range(nr):
                    fail[j] = 0
                x = 0
                y = 0
                z = 0
                ridx = 0
                while ridx < nr:
                    d = c_bounded(6, 61, &st)
                    x += DX[d]
                    y += DY[d]
                    z += DZ[d]
                    m = self.mark[self.c_idx(x, y, z)]
                    if m > <int64_t>base:
                        rho = m - <int64_t>base - 1
                        for j in range(ridx, nr):
                            if rho <= gamlen[j]:
                                fail[j] = 1
                    nrm = x if x >= 0 else -x
                    if (y if y >= 0 else -y) > nrm:
                        nrm = y if y >= 0 else -y
                    if (z if z >= 0 else -z) > nrm:
                        nrm = z if z >= 0 else -z
                    while ridx < nr and nrm > rs[ridx]:
                        if not fail[ridx]:
                            surv[ridx] += 1
                        ridx += 1
                for j in range(nr):
                    lensum[j] += gamlen[j]
            self.mark_base = base + 1 + <uint64_t>rank
        return surv_np, lensum_np

    # ------------------------------------------------------------------
    # sandpile dynamics

    def load_heights(self, h):
        self._need_sand()
        flat = np.asarray(h, dtype=np.int16).reshape(-1)
        if flat.shape[0] != self.n:
            raise ValueError("height array has wrong size")
        self.np_height[:] = flat

    def heights(self):
        return np.array(self.np_height, dtype=np.int16, copy=True)

    def _new_av_epoch(self):
        self._need_sand()
        if self.av_epoch >= 0xFFFFFFFE:
            self.np_av_stamp[:] = 0
            self.av_epoch = 0
        self.av_epoch += 1
        return self.av_epoch

    cdef void c_add_stabilize(self, int x, int y, int z,
                              int64_t* out_av, int64_t* out_cluster, int64_t* out_diam,
                              int* out_trunc, int64_t* out_lost) except *:
        cdef int64_t v, c2, ni
        cdef long long qh = 0, qt = 0
        cdef int64_t av = 0, lost = 0, cluster = 0
        cdef int cx, cy, cz, nx, ny, nz, d
        cdef int minx = 0, maxx = 0, miny = 0, maxy = 0, minz = 0, maxz = 0
        cdef bint first = True, trunc = False
        cdef int rb = self.rb
        cdef uint32_t epoch
        v = self.c_idx(x, y, z)
        self.height[v] += 1
        if self.height[v] < 6:
            out_av[0] = 0
            out_cluster[0] = 0
            out_diam[0] = -1
            out_trunc[0] = 0
            out_lost[0] = 0
            return
        epoch = self._new_av_epoch()
        self.queue[qt] = v
        qt += 1
        self.present[v] = 1
        while qh < qt:
            c2 = self.queue[qh]
            qh += 1
            self.present[c2] = 0
            if self.height[c2] < 6:
                continue
            self.c_coords(c2, &cx, &cy, &cz)
            while self.height[c2] >= 6:
                av += 1
                self.height[c2] -= 6
                for d in range(6):
                    nx = cx + DX[d]
                    ny = cy + DY[d]
                    nz = cz + DZ[d]
                    if nx > rb or nx < -rb or ny > rb or ny < -rb or nz > rb or nz < -rb:
                        lost += 1
                        continue
                    ni = self.c_idx(nx, ny, nz)
                    self.height[ni] += 1
                    if self.height[ni] >= 6 and not self.present[ni]:
                        self.present[ni] = 1
                        if qt >= self.queue_cap:
                            self.c_queue_room(&qh, &qt)
                        self.queue[qt] = ni
                        qt += 1
            if self.av_stamp[c2] != epoch:
                self.av_stamp[c2] = epoch
                cluster += 1
                if first:
                    minx = maxx = cx
                    miny = maxy = cy
                    minz = maxz = cz
                    first = False
                else:
                    if cx < minx: minx = cx
                    if cx > maxx: maxx = cx
                    if cy < miny: miny = cy
                    if cy > maxy: maxy = cy
                    if cz < minz: minz = cz
                    if cz > maxz: maxz = cz
                if cx == rb or cx == -rb or cy == rb or cy == -rb or cz == rb or cz == -rb:
                    trunc = True
        out_av[0] = av
        out_cluster[0] = cluster
        if cluster > 0:
            out_diam[0] = maxx - minx
            if maxy - miny > out_diam[0]: out_diam[0] = maxy - miny
            if maxz - minz > out_diam[0]: out_diam[0] = maxz - minz
        else:
            out_diam[0] = -1
        out_trunc[0] = 1 if trunc else 0
        out_lost[0] = lost

    def add_and_stabilize(self, x, y, z):
        self._need_sand()
        cdef int64_t av, cluster, diam, lost
        cdef int trunc
        self.c_add_stabilize(x, y, z, &av, &cluster, &diam, &trunc, &lost)
        return int(av), int(cluster), int(diam), bool(trunc), int(lost)

    def chain_batch(self, steps):
        self._need_sand()
        av = np.empty(steps, dtype=np.int64)
        avc = np.empty(steps, dtype=np.int64)
        diam = np.empty(steps, dtype=np.int32)
        trunc = np.empty(steps, dtype=np.uint8)
        cdef int64_t[::1] av_v = av
        cdef int64_t[::1] avc_v = avc
        cdef int32_t[::1] diam_v = diam
        cdef uint8_t[::1] trunc_v = trunc
        cdef long long i, steps_c = steps
        cdef int64_t a, c2, dm, lost
        cdef int tr
        for i in range(steps_c):
            self.c_add_stabilize(0, 0, 0, &a, &c2, &dm, &tr, &lost)
            av_v[i] = a
            avc_v[i] = c2
            diam_v[i] = <int32_t>dm
            trunc_v[i] = <uint8_t>tr
        return av, avc, diam, trunc

    def waves_at_origin(self, collect_sites=False):
        """Wave decomposition of one grain addition at the origin."""
        self._need_sand()
        cdef int64_t o = self.c_idx(0, 0, 0)
        cdef int rb = self.rb
        cdef int64_t c2, ni
        cdef long long qh, qt
        cdef int cx, cy, cz, nx, ny, nz, d
        cdef int minx, maxx, miny, maxy, minz, maxz
        cdef uint32_t epoch
        cdef long long total = 0, size
        cdef long long violation = 0
        cdef int64_t dm
        truncated = False
        waves = []
        self.height[o] += 1
        while self.height[o] >= 6:
            epoch = self._new_av_epoch()
            total += 1
            self.av_stamp[o] = epoch
            size = 1
            minx = maxx = miny = maxy = minz = maxz = 0
            sites = [int(o)] if collect_sites else None
            if rb == 0:
                truncated = True
            # topple the origin once, then everything unstable except it
            qh = 0
            qt = 0
            self.height[o] -= 6
            self.c_coords(o, &cx, &cy, &cz)
            for d in range(6):
                nx = cx + DX[d]
                ny = cy + DY[d]
                nz = cz + DZ[d]
                if nx > rb or nx < -rb or ny > rb or ny < -rb or nz > rb or nz < -rb:
                    continue
                ni = self.c_idx(nx, ny, nz)
                self.height[ni] += 1
                if self.height[ni] >= 6 and ni != o and not self.present[ni]:
                    self.present[ni] = 1
                    if qt >= self.queue_cap:
                        self.c_queue_room(&qh, &qt)
                    self.queue[qt] = ni
                    qt += 1
            while qh < qt:
                c2 = self.queue[qh]
                qh += 1
                self.present[c2] = 0
                if self.height[c2] < 6:
                    continue
                if self.av_stamp[c2] == epoch:
                    violation += 1
                else:
                    self.av_stamp[c2] = epoch
                    size += 1
                    self.c_coords(c2, &cx, &cy, &cz)
                    if cx < minx: minx = cx
                    if cx > maxx: maxx = cx
                    if cy < miny: miny = cy
                    if cy > maxy: maxy = cy
                    if cz < minz: minz = cz
                    if cz > maxz: maxz = cz
                    if cx == rb or cx == -rb or cy == rb or cy == -rb or cz == rb or cz == -rb:
                        truncated = True
                    if sites is not None:
                        sites.append(int(c2))
                total += 1
                self.c_coords(c2, &cx, &cy, &cz)
                self.height[c2] -= 6
                for d in range(6):
                    nx = cx + DX[d]
                    ny = cy + DY[d]
                    nz = cz + DZ[d]
                    if nx > rb or nx < -rb or ny > rb or ny < -rb or nz > rb or nz < -rb:
                        continue
                    ni = self.c_idx(nx, ny, nz)
                    self.height[ni] += 1
                    if self.height[ni] >= 6 and ni != o and not self.present[ni]:
                        self.present[ni] = 1
                        if qt >= self.queue_cap:
                            self.c_queue_room(&qh, &qt)
                        self.queue[qt] = ni
                        qt += 1
                if self.height[c2] >= 6 and not self.present[c2]:
                    self.present[c2] = 1
                    if qt >= self.queue_cap:
                        self.c_queue_room(&qh, &qt)
                    self.queue[qt] = c2
                    qt += 1
            dm = max(maxx - minx, maxy - miny, maxz - minz)
            wave = {"size": int(size), "diam": int(dm)}
            if collect_sites:
                wave["sites"] = [self.coords(s) for s in sites]
            waves.append(wave)
        return waves, int(total), bool(truncated), int(violation)

    # ------------------------------------------------------------------
    # lazy-tree diagnostics

    def intrinsic_ball(self, max_dist):
        self._need_ball()
        self._need_queue()
        cdef int64_t o = self.c_idx(0, 0, 0)
        if self.visited[o] != self.epoch:
            raise RuntimeError("origin branch missing")
        if self.ball_epoch >= 0xFFFFFFFE:
            self.np_ball_stamp[:] = 0
            self.ball_epoch = 0
        self.ball_epoch += 1
        cdef uint32_t bep = self.ball_epoch
        cdef long long md = max_dist
        cdef long long qh = 0, qt = 0, size = 1
        cdef int64_t c2, ni, pi
        cdef int cx, cy, cz, nx, ny, nz, px, py, pz, d, pd
        cdef long long dc
        cdef long long max_norm = 0
        cdef int rb = self.rb
        self.ball_stamp[o] = bep
        self.ball_dist[o] = 0
        self.queue[qt] = o
        qt += 1
        while qh < qt:
            c2 = self.queue[qh]
            qh += 1
            dc = self.ball_dist[c2]
            if dc >= md:
                continue
            self.c_coords(c2, &cx, &cy, &cz)
            pd = self.parent_dir[c2]
            if pd >= 0:
                px = cx + DX[pd]
                py = cy + DY[pd]
                pz = cz + DZ[pd]
                if px <= rb and px >= -rb and py <= rb and py >= -rb and pz <= rb and pz >= -rb:
                    pi = self.c_idx(px, py, pz)
                    if self.ball_stamp[pi] != bep:
                        self.ball_stamp[pi] = bep
                        self.ball_dist[pi] = <int32_t>(dc + 1)
                        if px < 0: px = -px
                        if py < 0: py = -py
                        if pz < 0: pz = -pz
                        if px > max_norm: max_norm = px
                        if py > max_norm: max_norm = py
                        if pz > max_norm: max_norm = pz
                        size += 1
                        if qt >= self.queue_cap:
                            self.c_queue_room(&qh, &qt)
                        self.queue[qt] = pi
                        qt += 1
            for d in range(6):
                nx = cx + DX[d]
                ny = cy + DY[d]
                nz = cz + DZ[d]
                if nx > rb or nx < -rb or ny > rb or ny < -rb or nz > rb or nz < -rb:
                    continue
                self.c_branch(nx, ny, nz)
                ni = self.c_idx(nx, ny, nz)
                pd = self.parent_dir[ni]
                if pd < 0:
                    continue
                if nx + DX[pd] == cx and ny + DY[pd] == cy and nz + DZ[pd] == cz:
                    if self.ball_stamp[ni] != bep:
                        self.ball_stamp[ni] = bep
                        self.ball_dist[ni] = <int32_t>(dc + 1)
                        px = nx if nx >= 0 else -nx
                        py = ny if ny >= 0 else -ny
                        pz = nz if nz >= 0 else -nz
                        if px > max_norm: max_norm = px
                        if py > max_norm: max_norm = py
                        if pz > max_norm: max_norm = pz
                        size += 1
                        if qt >= self.queue_cap:
                            self.c_queue_room(&qh, &qt)
                        self.queue[qt] = ni
                        qt += 1
        return int(size), int(max_norm)

    def component_stats(self, sub_radius):
        self.tree_branch_all(sub_radius)
        self._need_ball()
        self._need_queue()
        if self.ball_epoch >= 0xFFFFFFFE:
            self.np_ball_stamp[:] = 0
            self.ball_epoch = 0
        self.ball_epoch += 1
        cdef uint32_t bep = self.ball_epoch
        cdef int r = sub_radius
        cdef int64_t o = self.c_idx(0, 0, 0)
        cdef long long qh = 0, qt = 0, size = 1, max_dist = 0
        cdef int64_t c2, ni
        cdef int cx, cy, cz, nx, ny, nz, px, py, pz, d, pd, qd
        cdef long long dc
        self.ball_stamp[o] = bep
        self.ball_dist[o] = 0
        self.queue[qt] = o
        qt += 1
        while qh < qt:
            c2 = self.queue[qh]
            qh += 1
            dc = self.ball_dist[c2]
            self.c_coords(c2, &cx, &cy, &cz)
            pd = self.parent_dir[c2]
            if pd >= 0:
                px = cx + DX[pd]
                py = cy + DY[pd]
                pz = cz + DZ[pd]
                if px <= r and px >= -r and py <= r and py >= -r and pz <= r and pz >= -r:
                    ni = self.c_idx(px, py, pz)
                    if self.ball_stamp[ni] != bep:
                        self.ball_stamp[ni] = bep
                        self.ball_dist[ni] = <int32_t>(dc + 1)
                        if dc + 1 > max_dist:
                            max_dist = dc + 1
                        size += 1
                        if qt >= self.queue_cap:
                            self.c_queue_room(&qh, &qt)
                        self.queue[qt] = ni
                        qt += 1
            for d in range(6):
                nx = cx + DX[d]
                ny = cy + DY[d]
                nz = cz + DZ[d]
                if nx > r or nx < -r or ny > r or ny < -r or nz > r or nz < -r:
                    continue
                ni = self.c_idx(nx, ny, nz)
                qd = self.parent_dir[ni]
                if qd < 0:
                    continue
                if nx + DX[qd] == cx and ny + DY[qd] == cy and nz + DZ[qd] == cz:
                    if self.ball_stamp[ni] != bep:
                        self.ball_stamp[ni] = bep
                        self.ball_dist[ni] = <int32_t>(dc + 1)
                        if dc + 1 > max_dist:
                            max_dist = dc + 1
                        size += 1
                        if qt >= self.queue_cap:
                            self.c_queue_room(&qh, &qt)
                        self.queue[qt] = ni
                        qt += 1
        return int(size), int(max_dist)


# ----------------------------------------------------------------------
# small-domain (explicit site set) kernels


def tiny_wilson_batch(nbr, order, root, reps, master, stream_base):
    nbr_np = np.ascontiguousarray(np.asarray(nbr, dtype=np.int32))
    order_np = np.ascontiguousarray(np.asarray(order, dtype=np.int32))
    cdef int32_t[:, ::1] nb = nbr_np
    cdef int32_t[::1] od = order_np
    cdef int n = nbr_np.shape[0]
    cdef int two_d = nbr_np.shape[1]
    cdef int shift = 64 - c_bit_length(two_d - 1)
    cdef int m = order_np.shape[0]
    out = np.empty((reps, n), dtype=np.int8)
    cdef int8_t[:, ::1] out_v = out
    visited_np = np.zeros(n, dtype=np.uint8)
    last_np = np.zeros(n, dtype=np.int8)
    parent_np = np.zeros(n, dtype=np.int8)
    cdef uint8_t[::1] visited = visited_np
    cdef int8_t[::1] last = last_np
    cdef int8_t[::1] parent = parent_np
    cdef long long rep, reps_c = reps
    cdef uint64_t st, master_c = master & 0xFFFFFFFFFFFFFFFF
    cdef uint64_t base_c = stream_base & 0xFFFFFFFFFFFFFFFF
    cdef int root_c = root
    cdef int i, s, cur, attach, d
    with nogil:
        for rep in range(reps_c):
            st = c_stream_state(master_c, base_c + <uint64_t>rep)
            for i in range(n):
                visited[i] = 0
                parent[i] = -1
            if root_c >= 0:
                visited[root_c] = 1
            for i in range(m):
                s = od[i]
                if visited[s]:
                    continue
                cur = s
                while True:
                    if cur >= 0 and visited[cur]:
                        break
                    if cur < 0:
                        break
                    d = c_bounded(two_d, shift, &st)
                    last[cur] = <int8_t>d
                    cur = nb[cur, d]
                attach = cur
                cur = s
                while cur != attach and cur >= 0:
                    visited[cur] = 1
                    parent[cur] = last[cur]
                    cur = nb[cur, last[cur]]
            for i in range(n):
                out_v[rep, i] = parent[i]
    return out


cdef void c_tiny_depth(int32_t[:, ::1] nb, int8_t[::1] parent, int64_t[::1] depth,
                       int64_t[::1] chain, int n) noexcept nogil:
    cdef int v, cur
    cdef long long top, base
    for v in range(n):
        depth[v] = -1
    for v in range(n):
        if depth[v] >= 0:
            continue
        top = 0
        cur = v
        while cur >= 0 and depth[cur] < 0 and parent[cur] >= 0:
            chain[top] = cur
            top += 1
            cur = nb[cur, parent[cur]]
        if cur < 0:
            base = 0
        elif parent[cur] < 0:
            depth[cur] = 0
            base = 0
        else:
            base = depth[cur]
        while top > 0:
            top -= 1
            base += 1
            depth[chain[top]] = base


cdef void c_tiny_md(int32_t[:, ::1] nb, int8_t[::1] parent, int64_t[::1] depth,
                    int64_t[::1] h, int n, int two_d) noexcept nogil:
    cdef int v, d, b, rank, pd, t
    cdef int64_t dv, td
    for v in range(n):
        if parent[v] < 0:
            h[v] = 0
            continue
        dv = depth[v]
        b = 0
        rank = 0
        pd = parent[v]
        for d in range(two_d):
            t = nb[v, d]
            td = 0 if t < 0 else depth[t]
            if td < dv:
                b += 1
            if td == dv - 1 and d < pd:
                rank += 1
        h[v] = two_d - b + rank


cdef int64_t c_tiny_stabilize(int32_t[:, ::1] nb, int64_t[::1] h, int64_t[::1] od,
                              uint8_t[::1] present, int64_t[::1] queue,
                              int n, int two_d, int frozen, bint count_od) noexcept nogil:
    # ring FIFO of capacity n: the presence bitmap caps live entries at n
    cdef long long qh = 0, qt = 0
    cdef int64_t lost = 0
    cdef int i, c, d, t
    for i in range(n):
        present[i] = 0
    for i in range(n):
        if h[i] >= two_d and i != frozen:
            present[i] = 1
            queue[qt % n] = i
            qt += 1
    while qh < qt:
        c = <int>queue[qh % n]
        qh += 1
        present[c] = 0
        while h[c] >= two_d:
            h[c] -= two_d
            if count_od:
                od[c] += 1
            for d in range(two_d):
                t = nb[c, d]
                if t < 0:
                    lost += 1
                    continue
                h[t] += 1
                if h[t] >= two_d and t != frozen and not present[t]:
                    present[t] = 1
                    queue[qt % n] = t
                    qt += 1
    return lost


def tiny_md_heights(nbr, parent):
    nbr_np = np.ascontiguousarray(np.asarray(nbr, dtype=np.int32))
    parent_np = np.ascontiguousarray(np.asarray(parent, dtype=np.int8))
    cdef int n = nbr_np.shape[0]
    cdef int two_d = nbr_np.shape[1]
    depth_np = np.empty(n, dtype=np.int64)
    chain_np = np.empty(n, dtype=np.int64)
    h_np = np.zeros(n, dtype=np.int64)
    cdef int32_t[:, ::1] nb = nbr_np
    cdef int8_t[::1] par = parent_np
    cdef int64_t[::1] depth = depth_np
    cdef int64_t[::1] chain = chain_np
    cdef int64_t[::1] h = h_np
    c_tiny_depth(nb, par, depth, chain, n)
    c_tiny_md(nb, par, depth, h, n, two_d)
    return h_np.astype(np.int16)


def tiny_dhar_batch(nbr, v, xs, reps, master, stream_base):
    nbr_np = np.ascontiguousarray(np.asarray(nbr, dtype=np.int32))
    xs_np = np.ascontiguousarray(np.asarray(xs, dtype=np.int64))
    cdef int32_t[:, ::1] nb = nbr_np
    cdef int64_t[::1] xs_v = xs_np
    cdef int n = nbr_np.shape[0]
    cdef int two_d = nbr_np.shape[1]
    cdef int shift = 64 - c_bit_length(two_d - 1)
    cdef int nx = xs_np.shape[0]
    sums_np = np.zeros(nx, dtype=np.int64)
    sums2_np = np.zeros(nx, dtype=np.int64)
    cdef int64_t[::1] sums = sums_np
    cdef int64_t[::1] sums2 = sums2_np
    visited_np = np.zeros(n, dtype=np.uint8)
    last_np = np.zeros(n, dtype=np.int8)
    parent_np = np.zeros(n, dtype=np.int8)
    depth_np = np.empty(n, dtype=np.int64)
    chain_np = np.empty(n, dtype=np.int64)
    h_np = np.zeros(n, dtype=np.int64)
    od_np = np.zeros(n, dtype=np.int64)
    present_np = np.zeros(n, dtype=np.uint8)
    queue_np = np.zeros(n, dtype=np.int64)
    cdef uint8_t[::1] visited = visited_np
    cdef int8_t[::1] last = last_np
    cdef int8_t[::1] parent = parent_np
    cdef int64_t[::1] depth = depth_np
    cdef int64_t[::1] chain = chain_np
    cdef int64_t[::1] h = h_np
    cdef int64_t[::1] od = od_np
    cdef uint8_t[::1] present = present_np
    cdef int64_t[::1] queue = queue_np
    cdef long long rep, reps_c = reps
    cdef uint64_t st, master_c = master & 0xFFFFFFFFFFFFFFFF
    cdef uint64_t base_c = stream_base & 0xFFFFFFFFFFFFFFFF
    cdef int i, s, cur, attach, d, v_c = v
    cdef int64_t cnt
    with nogil:
        for rep in range(reps_c):
            st = c_stream_state(master_c, base_c + <uint64_t>rep)
            for i in range(n):
                visited[i] = 0
                parent[i] = -1
                od[i] = 0
            for s in range(n):
                if visited[s]:
                    continue
                cur = s
                while True:
                    if cur >= 0 and visited[cur]:
                        break
                    if cur < 0:
                        break
                    d = c_bounded(two_d, shift, &st)
                    last[cur] = <int8_t>d
                    cur = nb[cur, d]
                attach = cur
                cur = s
                while cur != attach and cur >= 0:
                    visited[cur] = 1
                    parent[cur] = last[cur]
                    cur = nb[cur, last[cur]]
            c_tiny_depth(nb, parent, depth, chain, n)
            c_tiny_md(nb, parent, depth, h, n, two_d)
            h[v_c] += 1
            c_tiny_stabilize(nb, h, od, present, queue, n, two_d, -1, True)
            for i in range(nx):
                cnt = od[xs_v[i]]
                sums[i] += cnt
                sums2[i] += cnt * cnt
    return sums_np, sums2_np


def tiny_first_wave_batch(nbr, coords, origin, reps, master, stream_base):
    nbr_np = np.ascontiguousarray(np.asarray(nbr, dtype=np.int32))
    coords_np = np.ascontiguousarray(np.asarray(coords, dtype=np.int64))
    cdef int32_t[:, ::1] nb = nbr_np
    cdef int64_t[:, ::1] co = coords_np
    cdef int n = nbr_np.shape[0]
    cdef int two_d = nbr_np.shape[1]
    cdef int dim = coords_np.shape[1]
    cdef int shift = 64 - c_bit_length(two_d - 1)
    out = np.empty(reps, dtype=np.int32)
    cdef int32_t[::1] out_v = out
    visited_np = np.zeros(n, dtype=np.uint8)
    last_np = np.zeros(n, dtype=np.int8)
    parent_np = np.zeros(n, dtype=np.int8)
    depth_np = np.empty(n, dtype=np.int64)
    chain_np = np.empty(n, dtype=np.int64)
    h_np = np.zeros(n, dtype=np.int64)
    od_np = np.zeros(n, dtype=np.int64)
    present_np = np.zeros(n, dtype=np.uint8)
    queue_np = np.zeros(n, dtype=np.int64)
    cdef uint8_t[::1] visited = visited_np
    cdef int8_t[::1] last = last_np
    cdef int8_t[::1] parent = parent_np
    cdef int64_t[::1] depth = depth_np
    cdef int64_t[::1] chain = chain_np
    cdef int64_t[::1] h = h_np
    cdef int64_t[::1] od = od_np
    cdef uint8_t[::1] present = present_np
    cdef int64_t[::1] queue = queue_np
    cdef long long rep, reps_c = reps
    cdef uint64_t st, master_c = master & 0xFFFFFFFFFFFFFFFF
    cdef uint64_t base_c = stream_base & 0xFFFFFFFFFFFFFFFF
    cdef int i, s, cur, attach, d, o_c = origin, k
    cdef int64_t lo, hi, dm, cval
    with nogil:
        for rep in range(reps_c):
            st = c_stream_state(master_c, base_c + <uint64_t>rep)
            for i in range(n):
                visited[i] = 0
                parent[i] = -1
                od[i] = 0
            for s in range(n):
                if visited[s]:
                    continue
                cur = s
                while True:
                    if cur >= 0 and visited[cur]:
                        break
                    if cur < 0:
                        break
                    d = c_bounded(two_d, shift, &st)
                    last[cur] = <int8_t>d
                    cur = nb[cur, d]
                attach = cur
                cur = s
                while cur != attach and cur >= 0:
                    visited[cur] = 1
                    parent[cur] = last[cur]
                    cur = nb[cur, last[cur]]
            c_tiny_depth(nb, parent, depth, chain, n)
            c_tiny_md(nb, parent, depth, h, n, two_d)
            h[o_c] += 1
            if h[o_c] < two_d:
                out_v[rep] = -1
                continue
            h[o_c] -= two_d
            for d in range(two_d):
                s = nb[o_c, d]
                if s >= 0:
                    h[s] += 1
            c_tiny_stabilize(nb, h, od, present, queue, n, two_d, o_c, True)
            od[o_c] = 1
            dm = 0
            for k in range(dim):
                lo = co[o_c, k]
                hi = co[o_c, k]
                for i in range(n):
                    if od[i] > 0:
                        cval = co[i, k]
                        if cval < lo:
                            lo = cval
                        if cval > hi:
                            hi = cval
                if hi - lo > dm:
                    dm = hi - lo
            out_v[rep] = <int32_t>dm
    return out
