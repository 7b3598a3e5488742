# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: farthest point sampling, rotated-box IoU, voxel binning.

Keep the float expressions in step with ``_pycore.py``; the test suite checks
the two backends for bit-identical output.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, floor, fabs, INFINITY

cnp.import_array()


def farthest_point_sample(xyz_in, Py_ssize_t k, Py_ssize_t first):
    cdef double[:, ::1] xyz = np.ascontiguousarray(xyz_in, dtype=np.float64)
    cdef Py_ssize_t n = xyz.shape[0]
    cdef Py_ssize_t m = n if n < k else k
    out_arr = np.empty(k, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    mind_arr = np.full(n, INFINITY)
    cdef double[::1] mind = mind_arr
    cdef Py_ssize_t s, i, cur = first, best
    cdef double cx, cy, cz, dx, dy, dz, d, bestd
    with nogil:
        for s in range(m):
            out[s] = cur
            mind[cur] = -1.0
            if s == m - 1:
                break
            cx = xyz[cur, 0]
            cy = xyz[cur, 1]
            cz = xyz[cur, 2]
            best = -1
            bestd = -INFINITY
            for i in range(n):
                if mind[i] >= 0.0:
                    dx = xyz[i, 0] - cx
                    dy = xyz[i, 1] - cy
                    dz = xyz[i, 2] - cz
                    d = dx * dx + dy * dy + dz * dz
                    if d < mind[i]:
                        mind[i] = d
                if mind[i] > bestd:
                    bestd = mind[i]
                    best = i
            cur = best
        for s in range(m, k):
            out[s] = out[s % m]
    return out_arr


cdef inline void _bev_polygon(double cx, double cy, double w, double l, double yaw,
                              double* px, double* py) nogil:
    cdef double c = cos(yaw), s = sin(yaw)
    cdef double hl = 0.5 * l, hw = 0.5 * w
    cdef double lx[4]
    cdef double ly[4]
    lx[0] = hl; ly[0] = hw
    lx[1] = -hl; ly[1] = hw
    lx[2] = -hl; ly[2] = -hw
    lx[3] = hl; ly[3] = -hw
    cdef int i
    for i in range(4):
        px[i] = cx + (c * lx[i] - s * ly[i])
        py[i] = cy + (s * lx[i] + c * ly[i])


cdef double _clipped_area(double* sx, double* sy, double* cx, double* cy) nogil:
    # Sutherland-Hodgman; each clip edge adds at most one vertex, 4 + 4 <= 16
    cdef double bufx[2][16]
    cdef double bufy[2][16]
    cdef int n = 4, nn, i, j, cur = 0
    cdef double ax, ay, ex, ey, px, py, qx, qy, sp, sq, t, denom, acc
    for j in range(4):
        bufx[0][j] = sx[j]
        bufy[0][j] = sy[j]
    for i in range(4):
        if n == 0:
            break
        ax = cx[i]
        ay = cy[i]
        ex = cx[(i + 1) % 4] - ax
        ey = cy[(i + 1) % 4] - ay
        nn = 0
        for j in range(n):
            px = bufx[cur][(j + n - 1) % n]
            py = bufy[cur][(j + n - 1) % n]
            qx = bufx[cur][j]
            qy = bufy[cur][j]
            sp = ex * (py - ay) - ey * (px - ax)
            sq = ex * (qy - ay) - ey * (qx - ax)
            if sq >= 0.0:
                if sp < 0.0:
                    t = sp / (sp - sq)
                    bufx[1 - cur][nn] = px + t * (qx - px)
                    bufy[1 - cur][nn] = py + t * (qy - py)
                    nn += 1
                bufx[1 - cur][nn] = qx
                bufy[1 - cur][nn] = qy
                nn += 1
            elif sp >= 0.0:
                denom = sp - sq
                if denom != 0.0:
                    t = sp / denom
                    bufx[1 - cur][nn] = px + t * (qx - px)
                    bufy[1 - cur][nn] = py + t * (qy - py)
                    nn += 1
        n = nn
        cur = 1 - cur
    if n < 3:
        return 0.0
    acc = 0.0
    for j in range(n):
        acc += bufx[cur][j] * bufy[cur][(j + 1) % n] - bufx[cur][(j + 1) % n] * bufy[cur][j]
    return 0.5 * fabs(acc)


cdef double _iou_one(const double[:, ::1] a, const double[:, ::1] b, Py_ssize_t i) nogil:
    cdef double za0 = a[i, 2] - 0.5 * a[i, 5], za1 = a[i, 2] + 0.5 * a[i, 5]
    cdef double zb0 = b[i, 2] - 0.5 * b[i, 5], zb1 = b[i, 2] + 0.5 * b[i, 5]
    cdef double lo = za0 if za0 > zb0 else zb0
    cdef double hi = za1 if za1 < zb1 else zb1
    cdef double dz = hi - lo
    cdef double pax[4]
    cdef double pay[4]
    cdef double pbx[4]
    cdef double pby[4]
    cdef double inter, union_
    if dz <= 0.0:
        return 0.0
    _bev_polygon(a[i, 0], a[i, 1], a[i, 3], a[i, 4], a[i, 6], pax, pay)
    _bev_polygon(b[i, 0], b[i, 1], b[i, 3], b[i, 4], b[i, 6], pbx, pby)
    inter = _clipped_area(pax, pay, pbx, pby) * dz
    if inter <= 0.0:
        return 0.0
    union_ = a[i, 3] * a[i, 4] * a[i, 5] + b[i, 3] * b[i, 4] * b[i, 5] - inter
    inter = inter / union_
    return inter if inter < 1.0 else 1.0


def iou3d_pairs(a_in, b_in):
    cdef const double[:, ::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t i, n = a.shape[0]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            out[i] = _iou_one(a, b, i)
    return out_arr


def voxel_counts(xyz_in, mins_in, maxs_in, dims_in):
    cdef double[:, ::1] xyz = np.ascontiguousarray(xyz_in, dtype=np.float64)
    cdef double[::1] mins = np.ascontiguousarray(mins_in, dtype=np.float64)
    cdef double[::1] maxs = np.ascontiguousarray(maxs_in, dtype=np.float64)
    dims_arr = np.ascontiguousarray(dims_in, dtype=np.int64)
    cdef cnp.int64_t[::1] dims = dims_arr
    counts_arr = np.zeros((dims[0], dims[1], dims[2]), dtype=np.int32)
    cdef int[:, :, ::1] counts = counts_arr
    cdef double cell[3]
    cdef Py_ssize_t idx[3]
    cdef Py_ssize_t i, a, n = xyz.shape[0]
    cdef double v
    cdef bint inside
    for a in range(3):
        cell[a] = (maxs[a] - mins[a]) / dims[a]
    with nogil:
        for i in range(n):
            inside = True
            for a in range(3):
                v = xyz[i, a]
                if not (v >= mins[a] and v < maxs[a]):
                    inside = False
                    break
                idx[a] = <Py_ssize_t>floor((v - mins[a]) / cell[a])
                if idx[a] < 0:
                    idx[a] = 0
                elif idx[a] > dims[a] - 1:
                    idx[a] = dims[a] - 1
            if inside:
                counts[idx[0], idx[1], idx[2]] += 1
    return counts_arr
