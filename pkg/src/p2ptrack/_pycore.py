"""Pure-Python/numpy implementations of the hot kernels.

Mirrors ``_core.pyx`` operation for operation (same float expression order), so
both backends return bit-identical results. Used when the extension is not
built, or when ``P2PTRACK_PURE_PYTHON=1``.
"""
import math

import numpy as np


def farthest_point_sample(xyz, k, first):
    xyz = np.ascontiguousarray(xyz, dtype=np.float64)
    n = xyz.shape[0]
    m = min(n, k)
    out = np.empty(k, dtype=np.int64)
    mind = np.full(n, np.inf)
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    cur = first
    for s in range(m):
        out[s] = cur
        mind[cur] = -1.0
        if s == m - 1:
            break
        dx = x - x[cur]
        dy = y - y[cur]
        dz = z - z[cur]
        d = dx * dx + dy * dy + dz * dz
        live = mind >= 0.0
        np.minimum(mind, d, out=mind, where=live)
        # argmax returns the lowest index among ties
        cur = int(np.argmax(mind))
    for s in range(m, k):
        out[s] = out[s % m]
    return out


def _bev_polygon(cx, cy, w, l, yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    hl, hw = 0.5 * l, 0.5 * w
    pts = []
    for lx, ly in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
        pts.append((cx + (c * lx - s * ly), cy + (s * lx + c * ly)))
    return pts


def _clip(subject, clip):
    # Sutherland-Hodgman against a counter-clockwise convex clip polygon
    out = subject
    nc = len(clip)
    for i in range(nc):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % nc]
        ex, ey = bx - ax, by - ay
        inp = out
        out = []
        n = len(inp)
        for j in range(n):
            px, py = inp[j - 1]
            qx, qy = inp[j]
            sp = ex * (py - ay) - ey * (px - ax)
            sq = ex * (qy - ay) - ey * (qx - ax)
            if sq >= 0.0:
                if sp < 0.0:
                    t = sp / (sp - sq)
                    out.append((px + t * (qx - px), py + t * (qy - py)))
                out.append((qx, qy))
            elif sp >= 0.0:
                denom = sp - sq
                if denom != 0.0:
                    t = sp / denom
                    out.append((px + t * (qx - px), py + t * (qy - py)))
    return out


def _area(poly):
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * abs(acc)


def _iou_one(a, b):
    za0, za1 = a[2] - 0.5 * a[5], a[2] + 0.5 * a[5]
    zb0, zb1 = b[2] - 0.5 * b[5], b[2] + 0.5 * b[5]
    dz = min(za1, zb1) - max(za0, zb0)
    if dz <= 0.0:
        return 0.0
    pa = _bev_polygon(a[0], a[1], a[3], a[4], a[6])
    pb = _bev_polygon(b[0], b[1], b[3], b[4], b[6])
    inter = _area(_clip(pa, pb)) * dz
    if inter <= 0.0:
        return 0.0
    union = a[3] * a[4] * a[5] + b[3] * b[4] * b[5] - inter
    return min(1.0, inter / union)


def iou3d_pairs(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    out = np.empty(a.shape[0])
    for i in range(a.shape[0]):
        out[i] = _iou_one(tuple(a[i]), tuple(b[i]))
    return out


def voxel_counts(xyz, mins, maxs, dims):
    xyz = np.ascontiguousarray(xyz, dtype=np.float64)
    mins = np.asarray(mins, dtype=np.float64)
    maxs = np.asarray(maxs, dtype=np.float64)
    dims = np.asarray(dims, dtype=np.int64)
    counts = np.zeros(tuple(int(d) for d in dims), dtype=np.int32)
    if xyz.shape[0] == 0:
        return counts
    inside = np.all((xyz >= mins) & (xyz < maxs), axis=1)
    p = xyz[inside]
    cell = (maxs - mins) / dims
    idx = np.floor((p - mins) / cell).astype(np.int64)
    np.clip(idx, 0, dims - 1, out=idx)
    np.add.at(counts, (idx[:, 0], idx[:, 1], idx[:, 2]), 1)
    return counts
