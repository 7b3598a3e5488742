"""Slow, obviously-correct reference implementations used as test oracles."""
import math

import numpy as np


def box_contains(pts, box, eps=0.0):
    """Rotate every point into the box frame and compare against half extents."""
    cx, cy, cz, w, l, h, yaw = box
    c, s = math.cos(yaw), math.sin(yaw)
    dx, dy, dz = pts[:, 0] - cx, pts[:, 1] - cy, pts[:, 2] - cz
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (np.abs(u) <= l / 2 + eps) & (np.abs(v) <= w / 2 + eps) & (np.abs(dz) <= h / 2 + eps)


def _bev_extent(box):
    cx, cy, cz, w, l, h, yaw = box
    c, s = abs(math.cos(yaw)), abs(math.sin(yaw))
    ex = 0.5 * (l * c + w * s)
    ey = 0.5 * (l * s + w * c)
    return (cx - ex, cx + ex), (cy - ey, cy + ey), (cz - h / 2, cz + h / 2)


def monte_carlo_iou(a, b, n=1_000_000, rng=None, chunk=250_000):
    """Volume IoU estimated from ``n`` uniform samples in the union's bounding box."""
    rng = rng or np.random.default_rng(0)
    ea, eb = _bev_extent(a), _bev_extent(b)
    lo = np.array([min(ea[i][0], eb[i][0]) for i in range(3)])
    hi = np.array([max(ea[i][1], eb[i][1]) for i in range(3)])
    in_a = in_b = both = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        pts = lo + (hi - lo) * rng.random((m, 3))
        ma, mb = box_contains(pts, a), box_contains(pts, b)
        in_a += int(ma.sum())
        in_b += int(mb.sum())
        both += int((ma & mb).sum())
        done += m
    union = in_a + in_b - both
    return both / union if union else 0.0


def monte_carlo_iou_from_a(a, b, n=1_000_000, rng=None, chunk=250_000):
    """Volume IoU from ``n`` uniform samples inside box ``a``.

    The fraction landing in ``b`` estimates |a & b| / |a|; the volumes are exact.
    """
    rng = rng or np.random.default_rng(0)
    cx, cy, cz, w, l, h, yaw = a
    c, s = math.cos(yaw), math.sin(yaw)
    hits = 0
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        u = (rng.random((m, 3)) - 0.5) * np.array([l, w, h])
        pts = np.stack([cx + c * u[:, 0] - s * u[:, 1], cy + s * u[:, 0] + c * u[:, 1], cz + u[:, 2]], axis=1)
        hits += int(box_contains(pts, b).sum())
    va, vb = w * l * h, b[3] * b[4] * b[5]
    inter = va * hits / n
    return inter / (va + vb - inter)


def maximin_fps(xyz, k, first):
    """Exhaustive farthest point sampling with lowest-index ties and cyclic padding."""
    n = len(xyz)
    chosen = [first]
    while len(chosen) < min(n, k):
        best, best_d = None, -1.0
        for i in range(n):
            if i in chosen:
                continue
            d = min(sum((xyz[i][a] - xyz[j][a]) ** 2 for a in range(3)) for j in chosen)
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    m = len(chosen)
    return [chosen[s % m] for s in range(k)]


def brute_voxel_counts(pts, mins, maxs, dims):
    counts = np.zeros(dims, dtype=np.int64)
    cell = [(maxs[a] - mins[a]) / dims[a] for a in range(3)]
    for p in pts:
        if not all(mins[a] <= p[a] < maxs[a] for a in range(3)):
            continue
        idx = [min(int(math.floor((p[a] - mins[a]) / cell[a])), dims[a] - 1) for a in range(3)]
        counts[tuple(idx)] += 1
    return counts


def naive_conv2d(x, w, b, stride, pad):
    B, C, H, W = x.shape
    O, _, kh, kw = w.shape
    xp = np.zeros((B, C, H + 2 * pad, W + 2 * pad))
    xp[:, :, pad:pad + H, pad:pad + W] = x
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((B, O, Ho, Wo))
    for bi in range(B):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    patch = xp[bi, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[bi, o, i, j] = np.sum(patch * w[o]) + (b[o] if b is not None else 0.0)
    return out


def naive_conv1d(x, w, b, stride):
    B, C, L = x.shape
    O, _, k = w.shape
    Lo = (L - k) // stride + 1
    out = np.zeros((B, O, Lo))
    for bi in range(B):
        for o in range(O):
            for i in range(Lo):
                out[bi, o, i] = np.sum(x[bi, :, i * stride:i * stride + k] * w[o]) + (b[o] if b is not None else 0.0)
    return out
