"""Linear BVH over mesh triangles.

Build: Morton-code sort of triangle centroids (numpy), then an iterative
top-down split at the highest differing code bit (numba). Traversal is a
stack-based nearest-first walk. Geometry is stored float32 for bandwidth;
intersection math runs in float64. Everything is deterministic: a stable
sort fixes the triangle order and traversal results do not depend on the
thread schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class Bvh:
    """Flattened BVH. Leaves reference contiguous runs of reordered triangles."""

    tri_v0: np.ndarray      # (T, 3) float32, BVH order
    tri_e1: np.ndarray      # (T, 3) float32
    tri_e2: np.ndarray      # (T, 3) float32
    tri_index: np.ndarray   # (T,) int32, BVH order -> original triangle id
    node_bmin: np.ndarray   # (M, 3) float32
    node_bmax: np.ndarray   # (M, 3) float32
    node_left: np.ndarray   # (M,) int32, -1 for leaves
    node_right: np.ndarray  # (M,) int32
    node_start: np.ndarray  # (M,) int32, leaf range start
    node_count: np.ndarray  # (M,) int32, 0 for internal nodes


def _morton_codes(centroids: np.ndarray) -> np.ndarray:
    lo = centroids.min(axis=0)
    extent = np.maximum(centroids.max(axis=0) - lo, 1e-30)
    q = np.clip(((centroids - lo) / extent) * 1024.0, 0, 1023).astype(np.uint64)

    def expand(v: np.ndarray) -> np.ndarray:
        v = (v | (v << 16)) & np.uint64(0x030000FF)
        v = (v | (v << 8)) & np.uint64(0x0300F00F)
        v = (v | (v << 4)) & np.uint64(0x030C30C3)
        v = (v | (v << 2)) & np.uint64(0x09249249)
        return v

    return (expand(q[:, 0]) << np.uint64(2)) | (expand(q[:, 1]) << np.uint64(1)) | expand(q[:, 2])


@njit(cache=True)
def _build_nodes(codes, bmin, bmax, leaf_size,
                 node_bmin, node_bmax, node_left, node_right, node_start, node_count):
    n = codes.shape[0]
    stack = np.empty((64, 3), dtype=np.int64)  # (start, end, node index)
    node_total = 1
    stack[0] = (0, n, 0)
    top = 1
    while top > 0:
        top -= 1
        s, e, ni = stack[top]
        count = e - s
        if count <= leaf_size or codes[s] == codes[e - 1]:
            node_left[ni] = -1
            node_right[ni] = -1
            node_start[ni] = s
            node_count[ni] = count
            for a in range(3):
                mn = bmin[s, a]
                mx = bmax[s, a]
                for i in range(s + 1, e):
                    if bmin[i, a] < mn:
                        mn = bmin[i, a]
                    if bmax[i, a] > mx:
                        mx = bmax[i, a]
                node_bmin[ni, a] = mn
                node_bmax[ni, a] = mx
            continue
        # Highest bit where the range's codes differ; codes are sorted, so
        # the split is the first index whose code sets that bit.
        diff = codes[s] ^ codes[e - 1]
        bit = np.uint64(63)
        while (diff >> bit) & np.uint64(1) == np.uint64(0):
            bit -= np.uint64(1)
        lo, hi = s + 1, e - 1
        ref = (codes[s] >> bit) & np.uint64(1)
        while lo < hi:
            mid = (lo + hi) // 2
            if ((codes[mid] >> bit) & np.uint64(1)) == ref:
                lo = mid + 1
            else:
                hi = mid
        split = lo
        li = node_total
        ri = node_total + 1
        node_total += 2
        node_left[ni] = li
        node_right[ni] = ri
        node_start[ni] = 0
        node_count[ni] = 0
        stack[top] = (s, split, li)
        top += 1
        stack[top] = (split, e, ri)
        top += 1
    # Internal boxes: children always have larger indices, so one reverse
    # sweep sees both children before their parent.
    for ni in range(node_total - 1, -1, -1):
        if node_left[ni] >= 0:
            li = node_left[ni]
            ri = node_right[ni]
            for a in range(3):
                node_bmin[ni, a] = min(node_bmin[li, a], node_bmin[ri, a])
                node_bmax[ni, a] = max(node_bmax[li, a], node_bmax[ri, a])
    return node_total


def build_bvh(vertices: np.ndarray, triangles: np.ndarray, leaf_size: int = 4) -> Bvh:
    """Build a BVH; nearest-hit queries match brute-force enumeration."""
    if triangles.shape[0] == 0:
        raise ValueError("cannot build a BVH over an empty mesh")
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.int64)
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    centroids = (p0 + p1 + p2) / 3.0
    codes = _morton_codes(centroids)
    order = np.lexsort((np.arange(t.shape[0]), codes))

    p0, p1, p2 = p0[order], p1[order], p2[order]
    bmin = np.minimum(np.minimum(p0, p1), p2).astype(np.float32)
    bmax = np.maximum(np.maximum(p0, p1), p2).astype(np.float32)

    n = t.shape[0]
    cap = 2 * n + 1
    node_bmin = np.empty((cap, 3), dtype=np.float32)
    node_bmax = np.empty((cap, 3), dtype=np.float32)
    node_left = np.empty(cap, dtype=np.int32)
    node_right = np.empty(cap, dtype=np.int32)
    node_start = np.empty(cap, dtype=np.int32)
    node_count = np.empty(cap, dtype=np.int32)
    total = _build_nodes(codes[order], bmin, bmax, leaf_size,
                         node_bmin, node_bmax, node_left, node_right, node_start, node_count)
    return Bvh(
        tri_v0=np.ascontiguousarray(p0.astype(np.float32)),
        tri_e1=np.ascontiguousarray((p1 - p0).astype(np.float32)),
        tri_e2=np.ascontiguousarray((p2 - p0).astype(np.float32)),
        tri_index=np.ascontiguousarray(order.astype(np.int32)),
        node_bmin=np.ascontiguousarray(node_bmin[:total]),
        node_bmax=np.ascontiguousarray(node_bmax[:total]),
        node_left=np.ascontiguousarray(node_left[:total]),
        node_right=np.ascontiguousarray(node_right[:total]),
        node_start=np.ascontiguousarray(node_start[:total]),
        node_count=np.ascontiguousarray(node_count[:total]),
    )


@njit(cache=True, inline="always")
def intersect_triangle(tv0, te1, te2, ti, ox, oy, oz, dx, dy, dz, t_min, t_max):
    """Moeller-Trumbore; returns (t, u, v) with t = -1 on miss."""
    v0x = float(tv0[ti, 0]); v0y = float(tv0[ti, 1]); v0z = float(tv0[ti, 2])
    e1x = float(te1[ti, 0]); e1y = float(te1[ti, 1]); e1z = float(te1[ti, 2])
    e2x = float(te2[ti, 0]); e2y = float(te2[ti, 1]); e2z = float(te2[ti, 2])
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if -1e-12 < det < 1e-12:
        return -1.0, 0.0, 0.0
    inv = 1.0 / det
    sx = ox - v0x; sy = oy - v0y; sz = oz - v0z
    u = (sx * px + sy * py + sz * pz) * inv
    # Small barycentric slack keeps rays through shared edges/vertices and
    # along the mesh rim from slipping through float32 cracks.
    if u < -1e-6 or u > 1.0 + 1e-6:
        return -1.0, 0.0, 0.0
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -1e-6 or u + v > 1.0 + 1e-6:
        return -1.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= t_min or t >= t_max:
        return -1.0, 0.0, 0.0
    return t, u, v


@njit(cache=True, inline="always")
def _slab_test(bmin, bmax, ni, ox, oy, oz, ix, iy, iz, t_max):
    """Ray/AABB entry distance, or -1 when the box is missed."""
    t0 = 0.0
    t1 = t_max
    a = (float(bmin[ni, 0]) - ox) * ix
    b = (float(bmax[ni, 0]) - ox) * ix
    if a > b:
        a, b = b, a
    if a > t0:
        t0 = a
    if b < t1:
        t1 = b
    a = (float(bmin[ni, 1]) - oy) * iy
    b = (float(bmax[ni, 1]) - oy) * iy
    if a > b:
        a, b = b, a
    if a > t0:
        t0 = a
    if b < t1:
        t1 = b
    a = (float(bmin[ni, 2]) - oz) * iz
    b = (float(bmax[ni, 2]) - oz) * iz
    if a > b:
        a, b = b, a
    if a > t0:
        t0 = a
    if b < t1:
        t1 = b
    if t1 < t0:
        return -1.0
    return t0


@njit(cache=True)
def bvh_closest(tv0, te1, te2, node_bmin, node_bmax, node_left, node_right,
                node_start, node_count, stack,
                ox, oy, oz, dx, dy, dz, t_min, t_max):
    """Nearest hit; returns (t, bvh-order triangle index, u, v), index -1 on miss."""
    ix = 1.0 / dx if dx != 0.0 else (np.inf if dx >= 0 else -np.inf)
    iy = 1.0 / dy if dy != 0.0 else (np.inf if dy >= 0 else -np.inf)
    iz = 1.0 / dz if dz != 0.0 else (np.inf if dz >= 0 else -np.inf)
    best_t = t_max
    best_i = -1
    best_u = 0.0
    best_v = 0.0
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        ni = stack[top]
        if _slab_test(node_bmin, node_bmax, ni, ox, oy, oz, ix, iy, iz, best_t) < 0.0:
            continue
        cnt = node_count[ni]
        if cnt > 0:
            s = node_start[ni]
            for i in range(s, s + cnt):
                t, u, v = intersect_triangle(tv0, te1, te2, i, ox, oy, oz, dx, dy, dz, t_min, best_t)
                if t > 0.0:
                    best_t = t
                    best_i = i
                    best_u = u
                    best_v = v
        else:
            li = node_left[ni]
            ri = node_right[ni]
            tl = _slab_test(node_bmin, node_bmax, li, ox, oy, oz, ix, iy, iz, best_t)
            tr = _slab_test(node_bmin, node_bmax, ri, ox, oy, oz, ix, iy, iz, best_t)
            # Push the farther child first so the nearer one pops next.
            if tl >= 0.0 and tr >= 0.0:
                if tl <= tr:
                    stack[top] = ri; top += 1
                    stack[top] = li; top += 1
                else:
                    stack[top] = li; top += 1
                    stack[top] = ri; top += 1
            elif tl >= 0.0:
                stack[top] = li; top += 1
            elif tr >= 0.0:
                stack[top] = ri; top += 1
    if best_i < 0:
        return -1.0, -1, 0.0, 0.0
    return best_t, best_i, best_u, best_v


@njit(cache=True)
def bvh_any_hit(tv0, te1, te2, node_bmin, node_bmax, node_left, node_right,
                node_start, node_count, stack,
                ox, oy, oz, dx, dy, dz, t_min, t_max):
    """True when any triangle blocks the segment (t_min, t_max)."""
    ix = 1.0 / dx if dx != 0.0 else (np.inf if dx >= 0 else -np.inf)
    iy = 1.0 / dy if dy != 0.0 else (np.inf if dy >= 0 else -np.inf)
    iz = 1.0 / dz if dz != 0.0 else (np.inf if dz >= 0 else -np.inf)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        ni = stack[top]
        if _slab_test(node_bmin, node_bmax, ni, ox, oy, oz, ix, iy, iz, t_max) < 0.0:
            continue
        cnt = node_count[ni]
        if cnt > 0:
            s = node_start[ni]
            for i in range(s, s + cnt):
                t, _, _ = intersect_triangle(tv0, te1, te2, i, ox, oy, oz, dx, dy, dz, t_min, t_max)
                if t > 0.0:
                    return True
        else:
            stack[top] = node_left[ni]
            top += 1
            stack[top] = node_right[ni]
            top += 1
    return False


@njit(cache=True)
def brute_force_closest(tv0, te1, te2, ox, oy, oz, dx, dy, dz, t_min, t_max):
    """Reference nearest hit by full enumeration (oracle for BVH tests)."""
    best_t = t_max
    best_i = -1
    best_u = 0.0
    best_v = 0.0
    for i in range(tv0.shape[0]):
        t, u, v = intersect_triangle(tv0, te1, te2, i, ox, oy, oz, dx, dy, dz, t_min, best_t)
        if t > 0.0:
            best_t = t
            best_i = i
            best_u = u
            best_v = v
    if best_i < 0:
        return -1.0, -1, 0.0, 0.0
    return best_t, best_i, best_u, best_v
