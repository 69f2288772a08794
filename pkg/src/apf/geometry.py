"""Disk geometry on the integer grid and obstructed visibility between fat robots.

Robot ``a`` sees robot ``b`` when some segment joining a boundary point of
``a`` to a boundary point of ``b`` keeps clear of every other robot's disk.
``visibility_witness`` decides this by enumerating extremal candidate lines
(common tangents of the two endpoint disks, the obstacle disks and the
contact points of touching disks) and checking each candidate segment.
The result is a concrete witness segment, so a ``True`` verdict is always
certified; ``sample_visibility_oracle`` and ``max_clearance_grid`` are
independent brute-force cross-checks.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import BlockingMode, UnknownRobotId, WorldConfig

TAU = 1e-9

Point = tuple[float, float]
Segment = tuple[Point, Point]


def point_segment_distance(c: Point, p: Point, q: Point) -> float:
    px, py = p
    dx, dy = q[0] - px, q[1] - py
    L2 = dx * dx + dy * dy
    cx, cy = c[0] - px, c[1] - py
    if L2 == 0.0:
        return math.hypot(cx, cy)
    t = (cx * dx + cy * dy) / L2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return math.hypot(cx - t * dx, cy - t * dy)


def segment_clearance(p: Point, q: Point, obstacles: Iterable[Sequence[float]], rad) -> float:
    """min over obstacles of (distance from segment pq to the obstacle center) - rad.

    Positive: strictly free; zero: grazing; negative: cuts an open disk.
    Returns +inf when there are no obstacles.
    """
    r = float(rad)
    best = math.inf
    for o in obstacles:
        d = point_segment_distance((float(o[0]), float(o[1])), p, q) - r
        if d < best:
            best = d
    return best


def is_free(clearance: float, mode: BlockingMode) -> bool:
    if mode is BlockingMode.CLOSED:
        return clearance > TAU
    return clearance >= -TAU


def corridor_obstacles(a: Sequence[int], b: Sequence[int], others: Iterable[Sequence[int]], rad) -> list:
    """Obstacles whose disk can meet some segment between the disks of a and b."""
    reach = 2 * float(rad) + 1e-7
    af = (float(a[0]), float(a[1]))
    bf = (float(b[0]), float(b[1]))
    return [tuple(o) for o in others
            if point_segment_distance((float(o[0]), float(o[1])), af, bf) < reach]


def _common_tangents(c1, r1, c2, r2):
    """Lines (nx, ny, h) with n.x = h tangent to both circles (radius 0 allowed)."""
    dx, dy = c2[0] - c1[0], c2[1] - c1[1]
    L = math.hypot(dx, dy)
    if L < 1e-12:
        return []
    phi = math.atan2(dy, dx)
    out = []
    for s1, s2 in ((1.0, 1.0), (1.0, -1.0)):
        dr = s2 * r2 - s1 * r1
        cosa = dr / L
        if cosa > 1.0 + 1e-12 or cosa < -1.0 - 1e-12:
            continue
        alpha = math.acos(max(-1.0, min(1.0, cosa)))
        for ang in (phi + alpha, phi - alpha):
            nx, ny = math.cos(ang), math.sin(ang)
            h = nx * c1[0] + ny * c1[1] - s1 * r1
            out.append((nx, ny, h))
    return out


def _circle_intersections(c1, r1, c2, r2):
    dx, dy = c2[0] - c1[0], c2[1] - c1[1]
    d = math.hypot(dx, dy)
    if d < 1e-12 or d > r1 + r2 + 1e-12 or d < abs(r1 - r2) - 1e-12:
        return []
    a = (r1 * r1 - r2 * r2 + d * d) / (2 * d)
    h2 = r1 * r1 - a * a
    h = math.sqrt(h2) if h2 > 0 else 0.0
    mx, my = c1[0] + a * dx / d, c1[1] + a * dy / d
    if h == 0.0:
        return [(mx, my)]
    ox, oy = -dy / d * h, dx / d * h
    return [(mx + ox, my + oy), (mx - ox, my - oy)]


def _inner_segment(line, a, b, r) -> Optional[Segment]:
    """The part of ``line`` running from the boundary of disk a to the boundary of disk b."""
    nx, ny, h = line
    ux, uy = -ny, nx
    if ux * (b[0] - a[0]) + uy * (b[1] - a[1]) < 0:
        ux, uy = -ux, -uy
    da = nx * a[0] + ny * a[1] - h
    db = nx * b[0] + ny * b[1] - h
    lim = r + 1e-12
    if abs(da) > lim or abs(db) > lim:
        return None
    wa = math.sqrt(max(0.0, r * r - da * da))
    wb = math.sqrt(max(0.0, r * r - db * db))
    # foot points of a and b on the line
    fax, fay = a[0] - da * nx, a[1] - da * ny
    fbx, fby = b[0] - db * nx, b[1] - db * ny
    p = (fax + wa * ux, fay + wa * uy)
    q = (fbx - wb * ux, fby - wb * uy)
    if (q[0] - p[0]) * ux + (q[1] - p[1]) * uy < -1e-12:
        return None
    return p, q


def _witness_search(a, b, obstacles, r: float, mode: BlockingMode):
    """Best candidate segment and its clearance (exhaustive over extremal lines)."""
    af = (float(a[0]), float(a[1]))
    bf = (float(b[0]), float(b[1]))
    obs = [(float(o[0]), float(o[1])) for o in obstacles]
    # the center line first: it is the answer in the vast majority of cases
    ux, uy = bf[0] - af[0], bf[1] - af[1]
    L = math.hypot(ux, uy)
    ux, uy = ux / L, uy / L
    seg = ((af[0] + r * ux, af[1] + r * uy), (bf[0] - r * ux, bf[1] - r * uy))
    best_c = segment_clearance(*seg, obs, r)
    best = seg
    if is_free(best_c, mode) and mode is BlockingMode.CLOSED:
        return best, best_c
    infl = 2 * TAU if mode is BlockingMode.CLOSED else 0.0
    circles = [(af, r), (bf, r)] + [(o, r + infl) for o in obs]
    for e in (af, bf):
        for o in obs:
            for pt in _circle_intersections(e, r, o, r + infl):
                circles.append((pt, 0.0))
    m = len(circles)
    for i in range(m):
        ci, ri = circles[i]
        for j in range(i + 1, m):
            cj, rj = circles[j]
            for line in _common_tangents(ci, ri, cj, rj):
                seg = _inner_segment(line, af, bf, r)
                if seg is None:
                    continue
                c = segment_clearance(seg[0], seg[1], obs, r)
                if c > best_c:
                    best_c, best = c, seg
                    if mode is BlockingMode.CLOSED and c > TAU:
                        return best, best_c
                    if mode is BlockingMode.OPEN and c > TAU:
                        return best, best_c
    return best, best_c


@lru_cache(maxsize=200_000)
def _cached_witness(rel_b: tuple, rel_obs: tuple, r: float, mode: BlockingMode):
    return _witness_search((0, 0), rel_b, rel_obs, r, mode)


def pair_witness(a, b, obstacles, rad, mode: BlockingMode = BlockingMode.CLOSED) -> Optional[Segment]:
    """Witness segment between the disks at grid points a and b, or None if blocked.

    ``obstacles`` may contain every other robot; only the corridor between a and
    b is consulted.
    """
    r = float(rad)
    relevant = corridor_obstacles(a, b, obstacles, r)
    ax, ay = a
    if not relevant:
        dx, dy = b[0] - ax, b[1] - ay
        L = math.hypot(dx, dy)
        return ((ax + r * dx / L, ay + r * dy / L), (b[0] - r * dx / L, b[1] - r * dy / L))
    rel_obs = tuple(sorted((o[0] - ax, o[1] - ay) for o in relevant))
    seg, c = _cached_witness((b[0] - ax, b[1] - ay), rel_obs, r, BlockingMode(mode))
    if not is_free(c, mode):
        return None
    (px, py), (qx, qy) = seg
    return ((px + ax, py + ay), (qx + ax, qy + ay))


def _pair_positions(cfg: WorldConfig, a: int, b: int):
    ra, rb = cfg.robot(a), cfg.robot(b)
    if a == b:
        raise ValueError("visibility needs two distinct robots")
    others = [r.pos for r in cfg.robots if r.id != a and r.id != b]
    return ra.pos, rb.pos, others


def visibility_witness(cfg: WorldConfig, a: int, b: int) -> Optional[Segment]:
    pa, pb, others = _pair_positions(cfg, a, b)
    return pair_witness(pa, pb, others, cfg.rad, cfg.blocking)


def visible(cfg: WorldConfig, a: int, b: int) -> bool:
    """True iff robots a and b see each other in ``cfg`` (symmetric)."""
    return visibility_witness(cfg, a, b) is not None


def sample_visibility_oracle(cfg: WorldConfig, a: int, b: int, trials: int = 10_000,
                             seed: int = 0, grid: int = 64) -> bool:
    """Brute-force check: random boundary-point pairs plus a fixed angular grid.

    One-sided: a True answer exhibits a free segment, so ``visible`` must agree.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    pa, pb, others = _pair_positions(cfg, a, b)
    r = float(cfg.rad)
    if not others:
        return True
    rng = np.random.default_rng(seed)
    th_a = rng.uniform(0.0, 2 * np.pi, trials)
    th_b = rng.uniform(0.0, 2 * np.pi, trials)
    g = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    ga, gb = np.meshgrid(g, g, indexing="ij")
    th_a = np.concatenate([th_a, ga.ravel()])
    th_b = np.concatenate([th_b, gb.ravel()])
    P = np.stack([pa[0] + r * np.cos(th_a), pa[1] + r * np.sin(th_a)], axis=1)
    Q = np.stack([pb[0] + r * np.cos(th_b), pb[1] + r * np.sin(th_b)], axis=1)
    clear = _clearance_batch(P, Q, np.asarray(others, dtype=float), r)
    if cfg.blocking is BlockingMode.CLOSED:
        return bool(np.any(clear > TAU))
    return bool(np.any(clear >= -TAU))


def _clearance_batch(P: np.ndarray, Q: np.ndarray, O: np.ndarray, r: float) -> np.ndarray:
    """Vectorised segment_clearance for segment arrays P[i]-Q[i] against all of O."""
    D = Q - P
    L2 = np.einsum("ij,ij->i", D, D)
    L2 = np.where(L2 == 0.0, 1.0, L2)
    best = np.full(len(P), np.inf)
    for o in O:
        W = o - P
        t = np.clip(np.einsum("ij,ij->i", W, D) / L2, 0.0, 1.0)
        C = P + t[:, None] * D - o
        best = np.minimum(best, np.hypot(C[:, 0], C[:, 1]) - r)
    return best


def max_clearance_grid(a, b, obstacles, rad, steps: int = 720, refine: bool = True) -> tuple[float, Segment]:
    """Maximise segment clearance over the two boundary angles by grid search + hill climbing.

    Slow; used to cross-check ``pair_witness`` on small instances.
    """
    r = float(rad)
    O = np.asarray(list(obstacles), dtype=float).reshape(-1, 2)
    g = np.linspace(0.0, 2 * np.pi, steps, endpoint=False)
    best_val, best_ij = -np.inf, (0.0, 0.0)
    P_all = np.stack([a[0] + r * np.cos(g), a[1] + r * np.sin(g)], axis=1)
    Q_all = np.stack([b[0] + r * np.cos(g), b[1] + r * np.sin(g)], axis=1)
    for i in range(steps):
        P = np.repeat(P_all[i:i + 1], steps, axis=0)
        c = _clearance_batch(P, Q_all, O, r) if len(O) else np.full(steps, np.inf)
        j = int(np.argmax(c))
        if c[j] > best_val:
            best_val, best_ij = float(c[j]), (g[i], g[j])

    def val(ta, tb):
        p = (a[0] + r * math.cos(ta), a[1] + r * math.sin(ta))
        q = (b[0] + r * math.cos(tb), b[1] + r * math.sin(tb))
        return segment_clearance(p, q, O.tolist(), r), (p, q)

    ta, tb = best_ij
    cur, seg = val(ta, tb)
    if refine and math.isfinite(cur):
        h = 2 * np.pi / steps
        while h > 1e-12:
            improved = False
            for da, db in ((h, 0), (-h, 0), (0, h), (0, -h), (h, h), (-h, -h), (h, -h), (-h, h)):
                v, s = val(ta + da, tb + db)
                if v > cur:
                    cur, seg, ta, tb = v, s, ta + da, tb + db
                    improved = True
            if not improved:
                h /= 2
    return cur, seg


class VisibilityTable:
    """Pairwise visibility for one fixed set of positions, evaluated lazily.

    Distances from every centre to every centre-centre segment are computed
    once with numpy; pairs whose centre segment clears all disks are settled
    immediately and the rest go through the exact witness search.
    """

    def __init__(self, positions: Sequence[Sequence[int]], rad, mode: BlockingMode = BlockingMode.CLOSED):
        self.pos = [(int(p[0]), int(p[1])) for p in positions]
        self.r = float(rad)
        self.mode = BlockingMode(mode)
        n = len(self.pos)
        P = np.asarray(self.pos, dtype=float).reshape(n, 2)
        D = P[None, :, :] - P[:, None, :]                      # (a, b, 2)
        L2 = np.einsum("abk,abk->ab", D, D)
        L2[L2 == 0.0] = 1.0
        W = P[None, None, :, :] - P[:, None, None, :]          # (a, -, c, 2)
        t = np.einsum("abk,ack->abc", D, W[:, 0]) / L2[:, :, None]
        np.clip(t, 0.0, 1.0, out=t)
        C = P[:, None, None, :] + t[..., None] * D[:, :, None, :] - P[None, None, :, :]
        dist = np.hypot(C[..., 0], C[..., 1])
        idx = np.arange(n)
        dist[idx, :, idx] = np.inf
        dist[:, idx, idx] = np.inf
        self._dist = dist
        near = dist < 2 * self.r + 1e-7
        # True where the pair is settled as visible without the exact search
        self._easy = (~near.any(axis=2) | (dist.min(axis=2, initial=np.inf) - self.r > TAU)).tolist()
        self._near = near
        self._cache: dict = {}

    def visible(self, a: int, b: int) -> bool:
        if self._easy[a][b]:
            return True
        key = (a, b) if a < b else (b, a)
        v = self._cache.get(key)
        if v is None:
            v = self._decide(*key)
            self._cache[key] = v
        return v

    def row(self, a: int) -> list:
        """Indices visible from ``a``."""
        easy = self._easy[a]
        return [b for b in range(len(self.pos)) if b != a and (easy[b] or self.visible(a, b))]

    def _decide(self, a: int, b: int) -> bool:
        rel = np.nonzero(self._near[a, b])[0]
        ax, ay = self.pos[a]
        bx, by = self.pos[b]
        rel_obs = tuple(sorted((self.pos[c][0] - ax, self.pos[c][1] - ay) for c in rel.tolist()))
        _, c = _cached_witness((bx - ax, by - ay), rel_obs, self.r, self.mode)
        return is_free(c, self.mode)


def visibility_matrix(cfg: WorldConfig) -> dict[int, set[int]]:
    ids = [r.id for r in cfg.robots]
    table = VisibilityTable(cfg.positions(), cfg.rad, cfg.blocking)
    out = {i: set() for i in ids}
    for x in range(len(ids)):
        for y in range(x + 1, len(ids)):
            if table.visible(x, y):
                out[ids[x]].add(ids[y])
                out[ids[y]].add(ids[x])
    return out


__all__ = [
    "TAU", "segment_clearance", "point_segment_distance", "corridor_obstacles", "pair_witness",
    "visibility_witness", "visible", "sample_visibility_oracle", "max_clearance_grid",
    "visibility_matrix", "is_free", "UnknownRobotId",
]
