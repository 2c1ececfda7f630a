"""Whitney decomposition of Q0 = [-3,5)^2 relative to the planar boundary set.

A dyadic square splits while its 3-dilate sees two or more points of
E = E1 union E2; the surviving squares partition Q0 exactly (all square
arithmetic is integer), each sees at most one point in its 1.1-dilate, and the
side lengths stay above Delta/20.  On top of the decomposition this module
builds the touching graph, the I/II/III classification with witnesses, the
basepoint pairs on the grid E1, and a C2 partition of unity subordinate to the
1.1-dilates with analytic first and second derivatives.

Conventions.  Dilates rQ are closed; point-membership predicates get a
1e-12 * side outward slack because E2 coordinates are floats, while
square-square predicates are exact in scaled integers (side * 20 makes the
1.1-dilate corners integral).  The touching relation is computed from shared
boundary (faces and corners); that it coincides with "1.1-dilates intersect"
is rechecked against a brute-force oracle on small instances.
"""

from __future__ import annotations

from dataclasses import dataclass
import csv
import math

import numpy as np

from .embedding import PlanarSet

Q0_LO = -3.0
Q0_HI = 5.0
Q0_SIDE = 8.0
REL_TOL = 1e-12
SQUARE_CAP = 5 * 10 ** 6
K0 = 50.0
MORTON_MAX_LEVEL = 31

TYPE_I, TYPE_II, TYPE_III = 1, 2, 3


class WhitneyCapError(RuntimeError):
    """Square budget exhausted; carries the size the run would need."""

    def __init__(self, needed: int, cap: int):
        super().__init__(
            f"decomposition needs more than {needed} squares (cap {cap}); "
            f"raise the cap or coarsen the tree")
        self.needed = needed
        self.cap = cap


@dataclass(frozen=True)
class DyadicSquare:
    level: int
    ix: int
    iy: int

    @property
    def delta(self) -> float:
        return Q0_SIDE * 2.0 ** -self.level

    @property
    def corner(self) -> tuple[float, float]:
        d = self.delta
        return (Q0_LO + self.ix * d, Q0_LO + self.iy * d)

    @property
    def center(self) -> tuple[float, float]:
        d = self.delta
        return (Q0_LO + (self.ix + 0.5) * d, Q0_LO + (self.iy + 0.5) * d)

    def rect(self, r: float = 1.0) -> tuple[float, float, float, float]:
        """Closed r-dilate as (x0, y0, x1, y1)."""
        cx, cy = self.center
        h = 0.5 * r * self.delta
        return (cx - h, cy - h, cx + h, cy + h)

    def parent(self) -> "DyadicSquare":
        if self.level == 0:
            raise ValueError("Q0 has no parent")
        return DyadicSquare(self.level - 1, self.ix >> 1, self.iy >> 1)

    def children(self) -> list["DyadicSquare"]:
        lv, ax, ay = self.level + 1, self.ix * 2, self.iy * 2
        return [DyadicSquare(lv, ax + dx, ay + dy)
                for dx in (0, 1) for dy in (0, 1)]

    def contains(self, x, y) -> bool:
        x0, y0 = self.corner
        d = self.delta
        return x0 <= x < x0 + d and y0 <= y < y0 + d


# -- Morton codes --------------------------------------------------------------

def _spread_bits(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.int64)
    v = (v | (v << 16)) & 0x0000FFFF0000FFFF
    v = (v | (v << 8)) & 0x00FF00FF00FF00FF
    v = (v | (v << 4)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v << 2)) & 0x3333333333333333
    v = (v | (v << 1)) & 0x5555555555555555
    return v


def _morton(ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    return _spread_bits(ix) | (_spread_bits(iy) << 1)


# -- E counting ----------------------------------------------------------------

def _e1_count_interval(ps: PlanarSet, lo: np.ndarray, hi: np.ndarray):
    """Vectorized #(E1 cap [lo,hi] x {0}) plus the first index, matching
    PlanarSet.e1_index_range bit for bit (membership judged on float k*delta)."""
    d = ps.delta
    k0 = np.maximum(0, np.ceil(lo / d).astype(np.int64) - 2)
    k1 = np.minimum(ps.e1_count - 1, np.floor(hi / d).astype(np.int64) + 2)
    for _ in range(4):
        k0 = k0 + ((k0 <= k1) & (k0 * d < lo))
    for _ in range(4):
        k1 = k1 - ((k0 <= k1) & (k1 * d > hi))
    count = np.maximum(0, k1 - k0 + 1)
    return count, k0


def _count_in_dilates(ps: PlanarSet, cx, cy, delta, r, chunk=200_000):
    """#(rQ cap E1), #(rQ cap E2) and the E2 witness row for square batches."""
    n = cx.shape[0]
    tol = REL_TOL * delta
    h = 0.5 * r * delta + tol
    n1 = np.zeros(n, dtype=np.int64)
    e1_first = np.full(n, -1, dtype=np.int64)
    hit_y = np.abs(cy) <= h
    if np.any(hit_y):
        cnt, k0 = _e1_count_interval(ps, (cx - h)[hit_y], (cx + h)[hit_y])
        n1[hit_y] = cnt
        first = np.where(cnt > 0, k0, -1)
        e1_first[hit_y] = first
    n2 = np.zeros(n, dtype=np.int64)
    e2_first = np.full(n, -1, dtype=np.int64)
    ex, ey = ps.e2[:, 0], ps.e2[:, 1]
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        hs = h[s:e, None]
        mask = (np.abs(ex[None, :] - cx[s:e, None]) <= hs) & \
               (np.abs(ey[None, :] - cy[s:e, None]) <= hs)
        n2[s:e] = mask.sum(axis=1)
        any_row = mask.any(axis=1)
        e2_first[s:e][any_row] = np.argmax(mask[any_row], axis=1)
    return n1, n2, e1_first, e2_first


# -- decomposition -------------------------------------------------------------

class WhitneyDecomposition:
    """Parallel arrays over the squares, sorted by Morton code.

    levels/ixs/iys define the squares; delta/cx/cy are derived floats;
    type_codes hold 1/2/3 with witnesses e1_witness (grid index, Type I) and
    e2_witness (E2 row, Type II); boundary marks squares touching the frame.
    neighbors_indptr/neighbors gives the touching lists (self included).
    Basepoint arrays z/w are E1 points chosen per square type.
    """

    def __init__(self, ps: PlanarSet | None, levels, ixs, iys):
        self.ps = ps
        order = np.argsort(_morton_padded(levels, ixs, iys), kind="stable")
        self.levels = levels[order].astype(np.int32)
        self.ixs = ixs[order].astype(np.int64)
        self.iys = iys[order].astype(np.int64)
        self.n = self.levels.shape[0]
        self.max_level = int(self.levels.max())
        self.delta = Q0_SIDE * np.exp2(-self.levels.astype(np.float64))
        self.cx = Q0_LO + (self.ixs + 0.5) * self.delta
        self.cy = Q0_LO + (self.iys + 0.5) * self.delta
        self.morton_starts = _morton_padded(self.levels, self.ixs, self.iys)
        # int64 arithmetic: the shift reaches 2 * max_level bits on deep grids
        span = np.int64(1) << (2 * (min(self.max_level, MORTON_MAX_LEVEL) -
                               np.minimum(self.levels.astype(np.int64),
                                          MORTON_MAX_LEVEL)))
        self.morton_ends = self.morton_starts + span
        side = 1 << (self.max_level - self.levels.astype(np.int64))
        self.x0i = self.ixs * side      # corners at the finest-level grid
        self.y0i = self.iys * side
        self.sidei = side
        self.type_codes = np.zeros(self.n, dtype=np.int8)
        self.e1_witness = np.full(self.n, -1, dtype=np.int64)
        self.e2_witness = np.full(self.n, -1, dtype=np.int64)
        top = (1 << self.levels.astype(np.int64)) - 1
        self.boundary = ((self.ixs == 0) | (self.iys == 0) |
                         (self.ixs == top) | (self.iys == top))
        self.neighbors_indptr, self.neighbors = _touching_graph(
            self.x0i, self.y0i, self.sidei)
        self.z = np.full((self.n, 2), np.nan)
        self.w = np.full((self.n, 2), np.nan)
        self.e2_anchor_z = None
        self.e2_anchor_w = None
        self._deep_lookup: dict | None = None  # only for levels beyond Morton range

    def _lookup_table(self) -> dict:
        if self._deep_lookup is None:
            self._deep_lookup = {
                (int(l), int(a), int(b)): r
                for r, (l, a, b) in enumerate(zip(self.levels, self.ixs, self.iys))}
        return self._deep_lookup

    # -- lookups ---------------------------------------------------------

    def square(self, row: int) -> DyadicSquare:
        return DyadicSquare(int(self.levels[row]), int(self.ixs[row]),
                            int(self.iys[row]))

    def row_of(self, q: DyadicSquare) -> int:
        if self.max_level > MORTON_MAX_LEVEL:
            row = self._lookup_table().get((q.level, q.ix, q.iy))
            if row is None:
                raise KeyError(f"square {q} not in the decomposition")
            return row
        code = _morton_padded(np.array([q.level]), np.array([q.ix]),
                              np.array([q.iy]), self.max_level)[0]
        row = int(np.searchsorted(self.morton_starts, code, side="right")) - 1
        if row < 0 or (self.levels[row], self.ixs[row], self.iys[row]) != \
                (q.level, q.ix, q.iy):
            raise KeyError(f"square {q} not in the decomposition")
        return row

    def locate(self, pts: np.ndarray) -> np.ndarray:
        """Row of the square containing each point (points must lie in Q0)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.max_level > MORTON_MAX_LEVEL:
            table = self._lookup_table()
            rows = np.empty(pts.shape[0], dtype=np.int64)
            for k, (x, y) in enumerate(pts):
                for lv in range(self.max_level + 1):
                    d = Q0_SIDE * 2.0 ** -lv
                    key = (lv, int((x - Q0_LO) // d), int((y - Q0_LO) // d))
                    if key in table:
                        rows[k] = table[key]
                        break
                else:
                    rows[k] = -1
            return rows
        L = self.max_level
        scale = (1 << L) / Q0_SIDE
        cx = np.clip(((pts[:, 0] - Q0_LO) * scale).astype(np.int64),
                     0, (1 << L) - 1)
        cy = np.clip(((pts[:, 1] - Q0_LO) * scale).astype(np.int64),
                     0, (1 << L) - 1)
        codes = _morton(cx, cy)
        rows = np.searchsorted(self.morton_starts, codes, side="right") - 1
        return rows

    def __len__(self) -> int:
        return self.n

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["level", "ix", "iy", "type", "boundary",
                         "z_x", "z_y", "w_x", "w_y"])
            for i in range(self.n):
                wr.writerow([self.levels[i], self.ixs[i], self.iys[i],
                             int(self.type_codes[i]), int(self.boundary[i]),
                             self.z[i, 0], self.z[i, 1],
                             self.w[i, 0], self.w[i, 1]])


def _morton_padded(levels, ixs, iys, max_level=None) -> np.ndarray:
    L = int(levels.max()) if max_level is None else max_level
    Lc = min(L, MORTON_MAX_LEVEL)
    lv = np.minimum(levels.astype(np.int64), Lc)
    shift = Lc - lv
    return _morton(ixs.astype(np.int64) << shift, iys.astype(np.int64) << shift)


def _touching_graph(x0, y0, side):
    """CSR touching lists from two exact sweeps over shared face lines.

    Two interior-disjoint axis-aligned squares intersect iff a right face
    meets a left face or a top face meets a bottom face (corner contacts show
    up in both sweeps at a single shared coordinate); intervals are closed.
    """
    n = x0.shape[0]
    pairs = [np.column_stack([np.arange(n), np.arange(n)])]
    for a_lo, a_hi, b in ((x0, x0 + side, y0), (y0, y0 + side, x0)):
        b_hi = b + side
        hi_max = int(np.max(a_hi))
        if hi_max >= (1 << 31):
            pairs.append(_sweep_lines_loop(a_hi, a_lo, b, b_hi))
            continue
        key_shift = hi_max + 1
        # faces of square i: "plus side" at coordinate a_hi, "minus side" at a_lo
        order_minus = np.argsort(a_lo * key_shift + b, kind="stable")
        minus_line = a_lo[order_minus]
        minus_b0 = b[order_minus]
        minus_b1 = b_hi[order_minus]
        # within a line the b-intervals are disjoint, so b0 and b1 are both sorted
        comp0 = minus_line * key_shift + minus_b0
        comp1 = minus_line * key_shift + minus_b1
        lo_idx = np.searchsorted(comp1, a_hi * key_shift + b, side="left")
        hi_idx = np.searchsorted(comp0, a_hi * key_shift + b_hi, side="right")
        counts = np.maximum(0, hi_idx - lo_idx)
        left = np.repeat(np.arange(n), counts)
        offs = np.arange(counts.sum()) - np.repeat(
            np.cumsum(counts) - counts, counts)
        right = order_minus[np.repeat(lo_idx, counts) + offs]
        pairs.append(np.column_stack([left, right]))
    allp = np.vstack(pairs)
    allp = np.vstack([allp, allp[:, ::-1]])
    keys = allp[:, 0] * n + allp[:, 1]
    uniq = np.unique(keys)
    src = (uniq // n).astype(np.int64)
    dst = (uniq % n).astype(np.int64)
    counts = np.bincount(src, minlength=n)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return indptr, dst


def _sweep_lines_loop(a_hi, a_lo, b, b_hi):
    # huge-coordinate fallback: group by face line in Python
    from collections import defaultdict
    by_line = defaultdict(list)
    for j in range(a_lo.shape[0]):
        by_line[int(a_lo[j])].append(j)
    out = []
    for i in range(a_hi.shape[0]):
        for j in by_line.get(int(a_hi[i]), ()):
            if b[i] <= b_hi[j] and b[j] <= b_hi[i]:
                out.append((i, j))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def decompose(ps: PlanarSet, cap: int = SQUARE_CAP) -> WhitneyDecomposition:
    """Whitney decomposition of Q0 relative to E, with types and basepoints.

    Splits while the closed 3-dilate contains two or more points of E; counts
    are arithmetic on the E1 grid plus a vectorized scan of E2.  Raises
    WhitneyCapError when the square budget runs out.
    """
    if ps.n_e2 + min(ps.e1_count, 2) < 2:
        raise ValueError("need at least 2 points in E")
    done_lv, done_ix, done_iy = [], [], []
    lv = 0
    ixs = np.zeros(1, dtype=np.int64)
    iys = np.zeros(1, dtype=np.int64)
    total = 0
    while ixs.size:
        delta = Q0_SIDE * 2.0 ** -lv
        cx = Q0_LO + (ixs + 0.5) * delta
        cy = Q0_LO + (iys + 0.5) * delta
        n1, n2, _, _ = _count_in_dilates(ps, cx, cy, np.full(ixs.shape, delta), 3.0)
        keep = (n1 + n2) <= 1
        done_lv.append(np.full(int(keep.sum()), lv, dtype=np.int32))
        done_ix.append(ixs[keep])
        done_iy.append(iys[keep])
        total += int(keep.sum())
        sx, sy = ixs[~keep], iys[~keep]
        if total + 4 * sx.size > cap:
            raise WhitneyCapError(total + 4 * sx.size, cap)
        ixs = np.repeat(sx * 2, 4) + np.tile([0, 1, 0, 1], sx.size)
        iys = np.repeat(sy * 2, 4) + np.tile([0, 0, 1, 1], sx.size)
        lv += 1
    wd = WhitneyDecomposition(ps, np.concatenate(done_lv),
                              np.concatenate(done_ix), np.concatenate(done_iy))
    _classify_all(wd)
    _assign_basepoints(wd)
    return wd


def _classify_all(wd: WhitneyDecomposition) -> None:
    n1, n2, e1f, e2f = _count_in_dilates(wd.ps, wd.cx, wd.cy, wd.delta, 1.1)
    if np.any(n1 + n2 > 1):
        bad = int(np.argmax(n1 + n2 > 1))
        raise AssertionError(
            f"square row {bad} sees {int(n1[bad] + n2[bad])} points of E in its "
            f"1.1-dilate; the stopping rule should make this impossible")
    wd.type_codes = np.where(n1 == 1, TYPE_I,
                             np.where(n2 == 1, TYPE_II, TYPE_III)).astype(np.int8)
    wd.e1_witness = np.where(n1 == 1, e1f, -1)
    wd.e2_witness = np.where(n2 == 1, e2f, -1)


def e2_anchor_indices(ps: PlanarSet) -> tuple[np.ndarray, np.ndarray]:
    """Grid indices (z, w) for every E2 point: z under the point, w offset
    sideways by about the point's height, flipped when it would leave [0,2)."""
    x, y = ps.e2[:, 0], ps.e2[:, 1]
    d = ps.delta
    kz = np.clip(np.ceil(x / d - 0.5).astype(np.int64), 0, ps.e1_count - 1)
    target = np.where(x + y < 2.0, x + y, x - y)
    kw = np.clip(np.ceil(target / d - 0.5).astype(np.int64), 0, ps.e1_count - 1)
    zp = np.column_stack([kz * d, np.zeros_like(x)])
    wp = np.column_stack([kw * d, np.zeros_like(x)])
    dzx = np.hypot(x - zp[:, 0], y)
    dwx = np.hypot(x - wp[:, 0], y)
    dzw = np.abs(zp[:, 0] - wp[:, 0])
    lo, hi = y / 4.0, 4.0 * y
    ok = (dzx >= lo) & (dzx <= hi) & (dwx >= lo) & (dwx <= hi) & \
         (dzw >= lo) & (dzw <= hi)
    if not np.all(ok):
        bad = int(np.argmax(~ok))
        raise AssertionError(
            f"anchor distances for E2 point {bad} at ({x[bad]:.6g},{y[bad]:.6g}) "
            f"leave the factor-4 window: |x-z|={dzx[bad]:.3g} |x-w|={dwx[bad]:.3g} "
            f"|z-w|={dzw[bad]:.3g}")
    return kz, kw


def e2_anchors(ps: PlanarSet, x) -> tuple[np.ndarray, np.ndarray]:
    """Anchor pair (z_x, w_x) for one E2 point."""
    x = np.asarray(x, dtype=float)
    row = np.flatnonzero((ps.e2[:, 0] == x[0]) & (ps.e2[:, 1] == x[1]))
    if row.size == 0:
        raise KeyError(f"point {x.tolist()} is not in E2")
    kz, kw = e2_anchor_indices(ps)
    j = int(row[0])
    return (np.array([kz[j] * ps.delta, 0.0]),
            np.array([kw[j] * ps.delta, 0.0]))


def _assign_basepoints(wd: WhitneyDecomposition) -> None:
    ps = wd.ps
    d = ps.delta
    n = wd.n
    kz = np.empty(n, dtype=np.int64)
    kw = np.empty(n, dtype=np.int64)
    last = ps.e1_count - 1
    # generic Type III: grid point under the center, partner ~delta_Q away
    kz[:] = np.clip(np.ceil(wd.cx / d - 0.5).astype(np.int64), 0, last)
    steps = np.maximum(1, np.rint(wd.delta / d).astype(np.int64))
    kw[:] = np.where(kz + steps <= last, kz + steps,
                     np.where(kz - steps >= 0, kz - steps,
                              np.where(kz <= last - kz, last, 0)))
    # Type I: the witness grid point plus its immediate neighbor
    m1 = wd.type_codes == TYPE_I
    kz[m1] = wd.e1_witness[m1]
    kw[m1] = np.where(kz[m1] + 1 <= last, kz[m1] + 1, kz[m1] - 1)
    # Type II: the anchors of the witness E2 point
    az, aw = e2_anchor_indices(ps)
    wd.e2_anchor_z, wd.e2_anchor_w = az, aw
    m2 = wd.type_codes == TYPE_II
    kz[m2] = az[wd.e2_witness[m2]]
    kw[m2] = aw[wd.e2_witness[m2]]
    # frame squares: the two ends of the grid
    mb = wd.boundary
    kz[mb] = 0
    kw[mb] = last
    wd.z = np.column_stack([kz * d, np.zeros(n)])
    wd.w = np.column_stack([kw * d, np.zeros(n)])


def neighbors(wd: WhitneyDecomposition, q: DyadicSquare) -> set[DyadicSquare]:
    """Touching squares of q, including q itself."""
    row = wd.row_of(q)
    lo, hi = wd.neighbors_indptr[row], wd.neighbors_indptr[row + 1]
    return {wd.square(int(r)) for r in wd.neighbors[lo:hi]}


def classify(wd: WhitneyDecomposition, q: DyadicSquare):
    """Type of q: (1, witness E1 point), (2, witness E2 point) or (3, None)."""
    row = wd.row_of(q)
    t = int(wd.type_codes[row])
    if t == TYPE_I:
        return t, np.array([wd.e1_witness[row] * wd.ps.delta, 0.0])
    if t == TYPE_II:
        return t, wd.ps.e2[wd.e2_witness[row]].copy()
    return t, None


def basepoints(wd: WhitneyDecomposition, ps: PlanarSet, q: DyadicSquare):
    row = wd.row_of(q)
    return wd.z[row].copy(), wd.w[row].copy()


# -- naive oracle ---------------------------------------------------------------

def decompose_naive(ps: PlanarSet, cap: int = 10 ** 5):
    """Independent recursive enumerator with materialized E1 and brute-force
    counting.  Returns (squares, types) sorted like the fast path."""
    pts = np.vstack([ps.e1_points(), ps.e2]) if ps.e1_count else ps.e2

    def count(q: DyadicSquare, r: float) -> int:
        x0, y0, x1, y1 = q.rect(r)
        tol = REL_TOL * q.delta
        m = (pts[:, 0] >= x0 - tol) & (pts[:, 0] <= x1 + tol) & \
            (pts[:, 1] >= y0 - tol) & (pts[:, 1] <= y1 + tol)
        return int(m.sum())

    out: list[DyadicSquare] = []
    stack = [DyadicSquare(0, 0, 0)]
    while stack:
        q = stack.pop()
        if count(q, 3.0) <= 1:
            out.append(q)
            if len(out) > cap:
                raise WhitneyCapError(len(out), cap)
        else:
            stack.extend(q.children())
    levels = np.array([q.level for q in out], dtype=np.int64)
    ixs = np.array([q.ix for q in out], dtype=np.int64)
    iys = np.array([q.iy for q in out], dtype=np.int64)
    order = np.argsort(_morton_padded(levels, ixs, iys), kind="stable")
    squares = [out[i] for i in order]
    types = []
    for q in squares:
        n1 = count(q, 1.1) - _count_e2_rect(ps, q)
        n2 = _count_e2_rect(ps, q)
        types.append(TYPE_I if n1 == 1 else TYPE_II if n2 == 1 else TYPE_III)
    return squares, types


def _count_e2_rect(ps: PlanarSet, q: DyadicSquare) -> int:
    x0, y0, x1, y1 = q.rect(1.1)
    tol = REL_TOL * q.delta
    m = (ps.e2[:, 0] >= x0 - tol) & (ps.e2[:, 0] <= x1 + tol) & \
        (ps.e2[:, 1] >= y0 - tol) & (ps.e2[:, 1] <= y1 + tol)
    return int(m.sum())


def neighbors_naive(wd: WhitneyDecomposition) -> list[set[int]]:
    """O(n^2) dilate-intersection test in scaled integers: the 1.1-dilate of a
    square has corners at (20*ix - 1, 20*ix + 21) in units of side/20."""
    L = wd.max_level
    if L > 25:
        raise ValueError("oracle limited to shallow decompositions")
    a0 = (20 * wd.ixs - 1) << (L - wd.levels.astype(np.int64))
    a1 = (20 * wd.ixs + 21) << (L - wd.levels.astype(np.int64))
    b0 = (20 * wd.iys - 1) << (L - wd.levels.astype(np.int64))
    b1 = (20 * wd.iys + 21) << (L - wd.levels.astype(np.int64))
    out = []
    for i in range(wd.n):
        hit = (a0 <= a1[i]) & (a0[i] <= a1) & (b0 <= b1[i]) & (b0[i] <= b1)
        out.append(set(np.flatnonzero(hit).tolist()))
    return out


# -- partition of unity ----------------------------------------------------------

_T0, _T1 = 0.5, 0.55
_TW = _T1 - _T0


def _profile(u: np.ndarray):
    """Even C2 bump: 1 on [0, 0.5], 0 from 0.55 on, quintic step between.
    Returns (g, g', g'')."""
    a = np.abs(u)
    s = np.clip((a - _T0) / _TW, 0.0, 1.0)
    g = 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)
    ds = np.where((a > _T0) & (a < _T1), np.sign(u) / _TW, 0.0)
    g1 = -30.0 * s ** 2 * (1.0 - s) ** 2 * ds
    g2 = -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) * ds * ds
    return g, g1, g2


def _psi_terms(wd: WhitneyDecomposition, rows: np.ndarray, pts: np.ndarray):
    """psi and derivatives for (point, square) pairs; pts aligned with rows."""
    d = wd.delta[rows]
    u = (pts[:, 0] - wd.cx[rows]) / d
    v = (pts[:, 1] - wd.cy[rows]) / d
    gu, gu1, gu2 = _profile(u)
    gv, gv1, gv2 = _profile(v)
    psi = gu * gv
    px = gu1 * gv / d
    py = gu * gv1 / d
    pxx = gu2 * gv / d ** 2
    pyy = gu * gv2 / d ** 2
    pxy = gu1 * gv1 / d ** 2
    return psi, px, py, pxx, pxy, pyy


def active_table(wd: WhitneyDecomposition, pts: np.ndarray):
    """CSR (indptr, square rows) of squares whose 1.1-dilate contains each
    point; candidates come from the touching lists of the containing square."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    home = wd.locate(pts)
    cand_ptr = wd.neighbors_indptr
    counts = cand_ptr[home + 1] - cand_ptr[home]
    pt_idx = np.repeat(np.arange(pts.shape[0]), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    sq = wd.neighbors[np.repeat(cand_ptr[home], counts) + offs]
    half = _T1 * wd.delta[sq]
    keep = (np.abs(pts[pt_idx, 0] - wd.cx[sq]) <= half) & \
           (np.abs(pts[pt_idx, 1] - wd.cy[sq]) <= half)
    pt_idx, sq = pt_idx[keep], sq[keep]
    counts_kept = np.bincount(pt_idx, minlength=pts.shape[0])
    indptr = np.concatenate([[0], np.cumsum(counts_kept)]).astype(np.int64)
    return indptr, sq


def pou_table(wd: WhitneyDecomposition, pts: np.ndarray):
    """theta and derivatives for all active (point, square) pairs.

    Returns (indptr, sq, theta, tx, ty, txx, txy, tyy) in CSR layout over the
    points.  The normalizing sum is at least 1 everywhere in Q0 because every
    point lies in some square where its own psi is 1.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    indptr, sq = active_table(wd, pts)
    reps = np.diff(indptr)
    pt_idx = np.repeat(np.arange(pts.shape[0]), reps)
    psi, px, py, pxx, pxy, pyy = _psi_terms(wd, sq, pts[pt_idx])
    m = pts.shape[0]
    S = np.bincount(pt_idx, weights=psi, minlength=m)
    Sx = np.bincount(pt_idx, weights=px, minlength=m)
    Sy = np.bincount(pt_idx, weights=py, minlength=m)
    Sxx = np.bincount(pt_idx, weights=pxx, minlength=m)
    Sxy = np.bincount(pt_idx, weights=pxy, minlength=m)
    Syy = np.bincount(pt_idx, weights=pyy, minlength=m)
    S_, Sx_, Sy_ = S[pt_idx], Sx[pt_idx], Sy[pt_idx]
    Sxx_, Sxy_, Syy_ = Sxx[pt_idx], Sxy[pt_idx], Syy[pt_idx]
    th = psi / S_
    tx = px / S_ - psi * Sx_ / S_ ** 2
    ty = py / S_ - psi * Sy_ / S_ ** 2
    txx = (pxx / S_ - 2.0 * px * Sx_ / S_ ** 2 - psi * Sxx_ / S_ ** 2
           + 2.0 * psi * Sx_ ** 2 / S_ ** 3)
    tyy = (pyy / S_ - 2.0 * py * Sy_ / S_ ** 2 - psi * Syy_ / S_ ** 2
           + 2.0 * psi * Sy_ ** 2 / S_ ** 3)
    txy = (pxy / S_ - (px * Sy_ + py * Sx_) / S_ ** 2 - psi * Sxy_ / S_ ** 2
           + 2.0 * psi * Sx_ * Sy_ / S_ ** 3)
    return indptr, sq, th, tx, ty, txx, txy, tyy


def pou_eval(wd: WhitneyDecomposition, q: DyadicSquare, x, order: int = 0):
    """theta_q at one point: value (order 0), gradient (1) or Hessian (2)."""
    x = np.asarray(x, dtype=float)
    if not (Q0_LO <= x[0] < Q0_HI and Q0_LO <= x[1] < Q0_HI):
        raise ValueError(f"point {x.tolist()} outside Q0")
    row = wd.row_of(q)
    indptr, sq, th, tx, ty, txx, txy, tyy = pou_table(wd, x[None, :])
    hit = np.flatnonzero(sq == row)
    if hit.size == 0:
        return (0.0 if order == 0 else np.zeros(2) if order == 1
                else np.zeros((2, 2)))
    j = int(hit[0])
    if order == 0:
        return float(th[j])
    if order == 1:
        return np.array([tx[j], ty[j]])
    if order == 2:
        return np.array([[txx[j], txy[j]], [txy[j], tyy[j]]])
    raise ValueError("order must be 0, 1 or 2")


# -- geometry verifiers ----------------------------------------------------------

def verify_partition(wd: WhitneyDecomposition) -> dict:
    """Exact integer check that the squares tile Q0 without overlap."""
    if wd.max_level > MORTON_MAX_LEVEL:
        area = int((wd.sidei.astype(object) ** 2).sum())
        return {"ok": area == (1 << wd.max_level) ** 2, "mode": "area-only"}
    ok_start = wd.morton_starts[0] == 0
    ok_chain = bool(np.all(wd.morton_starts[1:] == wd.morton_ends[:-1]))
    ok_end = int(wd.morton_ends[-1]) == 1 << (2 * min(wd.max_level,
                                                      MORTON_MAX_LEVEL))
    return {"ok": bool(ok_start and ok_chain and ok_end), "mode": "morton"}


def verify_cz(wd: WhitneyDecomposition) -> dict:
    """Stopping-rule and touching-graph properties with measured constants."""
    ps = wd.ps
    n1, n2, _, _ = _count_in_dilates(ps, wd.cx, wd.cy, wd.delta, 1.1)
    small = bool(np.all(n1 + n2 <= 1))
    plv = wd.levels - 1
    pdelta = wd.delta * 2.0
    pcx = Q0_LO + ((wd.ixs >> 1) + 0.5) * pdelta
    pcy = Q0_LO + ((wd.iys >> 1) + 0.5) * pdelta
    p1, p2, _, _ = _count_in_dilates(ps, pcx, pcy, pdelta, 3.0)
    has_parent = plv >= 0
    parent_big = bool(np.all((p1 + p2)[has_parent] >= 2))
    counts = np.diff(wd.neighbors_indptr)
    src = np.repeat(np.arange(wd.n), counts)
    dst = wd.neighbors
    ratio_ok = bool(np.all(np.abs(wd.levels[src] - wd.levels[dst]) <= 1))
    gap_x = np.maximum(wd.x0i[src] - (wd.x0i[dst] + wd.sidei[dst]),
                       wd.x0i[dst] - (wd.x0i[src] + wd.sidei[src]))
    gap_y = np.maximum(wd.y0i[src] - (wd.y0i[dst] + wd.sidei[dst]),
                       wd.y0i[dst] - (wd.y0i[src] + wd.sidei[src]))
    touch_ok = bool(np.all((gap_x <= 0) & (gap_y <= 0)))
    delta_floor_ok = bool(np.all(wd.delta >= ps.delta / 20.0))
    return {
        "ok": small and parent_big and ratio_ok and touch_ok and delta_floor_ok
              and int(counts.max()) <= 12,
        "dilate_count_le_1": small,
        "parent_3dilate_ge_2": parent_big,
        "neighbor_ratio_ok": ratio_ok,
        "neighbor_touch_ok": touch_ok,
        "max_neighbors": int(counts.max()),
        "min_delta_over_Delta": float((wd.delta.min()) / ps.delta),
        "delta_floor_ok": delta_floor_ok,
    }


def verify_boundary(wd: WhitneyDecomposition) -> dict:
    """Frame squares: side >= 1, Type III, E inside the 50-dilate, and the
    two touch criteria (square vs 1.1-dilate against the frame) agree."""
    ps = wd.ps
    mb = wd.boundary
    tol = REL_TOL * wd.delta
    x0 = wd.cx - 0.55 * wd.delta - tol
    x1 = wd.cx + 0.55 * wd.delta + tol
    y0 = wd.cy - 0.55 * wd.delta - tol
    y1 = wd.cy + 0.55 * wd.delta + tol
    dil_touch = (x0 <= Q0_LO) | (x1 >= Q0_HI) | (y0 <= Q0_LO) | (y1 >= Q0_HI)
    agree = bool(np.all(dil_touch == mb))
    size_ok = bool(np.all(wd.delta[mb] >= 1.0))
    type_ok = bool(np.all(wd.type_codes[mb] == TYPE_III))
    # E inside 50Q for every frame square
    e_x_max = (ps.e1_count - 1) * ps.delta
    exs = np.concatenate([[0.0, e_x_max], ps.e2[:, 0]])
    eys = np.concatenate([[0.0, 0.0], ps.e2[:, 1]])
    hw = 25.0 * wd.delta[mb] + tol[mb]
    inside = np.all(
        (np.abs(exs[None, :] - wd.cx[mb, None]) <= hw[:, None]) &
        (np.abs(eys[None, :] - wd.cy[mb, None]) <= hw[:, None]))
    return {"ok": agree and size_ok and type_ok and bool(inside),
            "touch_criteria_agree": agree, "min_side": float(wd.delta[mb].min()),
            "all_type_iii": type_ok, "e_in_50Q": bool(inside)}


def dist_to_e1(ps: PlanarSet, x0, y0, x1, y1):
    """Distance from closed rectangles to the grid points of E1."""
    d = ps.delta
    last = ps.e1_count - 1
    count, _ = _e1_count_interval(ps, np.asarray(x0, dtype=float),
                                  np.asarray(x1, dtype=float))
    ka = np.clip(np.floor(x0 / d).astype(np.int64), 0, last)
    kb = np.clip(np.ceil(x1 / d).astype(np.int64), 0, last)
    gap_a = np.maximum(0.0, np.maximum(x0 - ka * d, ka * d - x1))
    gap_b = np.maximum(0.0, np.maximum(x0 - kb * d, kb * d - x1))
    hx = np.where(count >= 1, 0.0, np.minimum(gap_a, gap_b))
    hy = np.maximum(0.0, np.maximum(y0, -y1))
    return np.hypot(hx, hy)


def verify_dist_bd(wd: WhitneyDecomposition) -> dict:
    """Extremes of side / (Delta + dist(Q, E1)) over all squares, plus
    side / dist(Q, E) over non-frame Type III squares."""
    ps = wd.ps
    h = 0.5 * wd.delta
    x0, x1 = wd.cx - h, wd.cx + h
    y0, y1 = wd.cy - h, wd.cy + h
    d1 = dist_to_e1(ps, x0, y0, x1, y1)
    r = wd.delta / (ps.delta + d1)
    dx = np.maximum(0.0, np.maximum(ps.e2[None, :, 0] - x1[:, None],
                                    x0[:, None] - ps.e2[None, :, 0]))
    dy = np.maximum(0.0, np.maximum(ps.e2[None, :, 1] - y1[:, None],
                                    y0[:, None] - ps.e2[None, :, 1]))
    d2 = np.hypot(dx, dy).min(axis=1)
    de = np.minimum(d1, d2)
    m3 = (wd.type_codes == TYPE_III) & ~wd.boundary
    out = {"ratio_min": float(r.min()), "ratio_max": float(r.max())}
    if np.any(m3):
        q = wd.delta[m3] / de[m3]
        out["type3_ratio_min"] = float(q.min())
        out["type3_ratio_max"] = float(q.max())
    out["ok"] = np.isfinite(out["ratio_max"]) and out["ratio_min"] > 0
    return out


def verify_basepoints(wd: WhitneyDecomposition, k0: float = K0) -> dict:
    """Containment z,w in K0*Q for every square and the spread |z-w|/side."""
    tol = REL_TOL * wd.delta
    hw = 0.5 * k0 * wd.delta + tol
    inz = (np.abs(wd.z[:, 0] - wd.cx) <= hw) & (np.abs(wd.z[:, 1] - wd.cy) <= hw)
    inw = (np.abs(wd.w[:, 0] - wd.cx) <= hw) & (np.abs(wd.w[:, 1] - wd.cy) <= hw)
    sep = np.hypot(wd.z[:, 0] - wd.w[:, 0], wd.z[:, 1] - wd.w[:, 1])
    distinct = bool(np.all(sep > 0))
    spread = sep / wd.delta
    return {"ok": bool(np.all(inz) and np.all(inw)) and distinct,
            "z_contained": bool(np.all(inz)), "w_contained": bool(np.all(inw)),
            "distinct": distinct,
            "spread_min": float(spread.min()), "spread_max": float(spread.max())}
