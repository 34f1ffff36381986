# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, floor

cnp.import_array()


def bilateral_filter(double[:, :, ::1] img, double sigma_s, double sigma_r, int radius):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], c = img.shape[2]
    cdef Py_ssize_t y, x, k, ny, nx
    cdef int dy, dx
    cdef double inv_s = -0.5 / (sigma_s * sigma_s)
    cdef double inv_r = -0.5 / (sigma_r * sigma_r)
    cdef double d2, diff, wgt, den
    out = np.empty((h, w, c), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef double[::1] acc = np.zeros(c, dtype=np.float64)
    cdef double[::1] spatial = np.empty((2 * radius + 1) * (2 * radius + 1), dtype=np.float64)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            spatial[(dy + radius) * (2 * radius + 1) + dx + radius] = exp((dx * dx + dy * dy) * inv_s)
    with nogil:
        for y in range(h):
            for x in range(w):
                for k in range(c):
                    acc[k] = 0.0
                den = 0.0
                for dy in range(-radius, radius + 1):
                    ny = y + dy
                    if ny < 0 or ny >= h:
                        continue
                    for dx in range(-radius, radius + 1):
                        nx = x + dx
                        if nx < 0 or nx >= w:
                            continue
                        d2 = 0.0
                        for k in range(c):
                            diff = img[ny, nx, k] - img[y, x, k]
                            d2 = d2 + diff * diff
                        wgt = spatial[(dy + radius) * (2 * radius + 1) + dx + radius] * exp(d2 * inv_r)
                        den = den + wgt
                        for k in range(c):
                            acc[k] = acc[k] + wgt * img[ny, nx, k]
                for k in range(c):
                    o[y, x, k] = acc[k] / den
    return out


def region_grow(double[:, :, ::1] img, double threshold):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], c = img.shape[2]
    cdef Py_ssize_t n = h * w
    labels = np.full((h, w), -1, dtype=np.int64)
    cdef cnp.int64_t[::1] lab = labels.reshape(-1)
    cdef cnp.int64_t[::1] queue = np.empty(n, dtype=np.int64)
    cdef double[::1] total = np.empty(c, dtype=np.float64)
    cdef double[:, ::1] flat = np.asarray(img).reshape(n, c)
    cdef double thr2 = threshold * threshold
    cdef Py_ssize_t seed, idx, nidx, y, x, ny, nx, head, tail, k, count, j
    cdef cnp.int64_t current = 0
    cdef double d2, diff
    cdef int[4] ody
    cdef int[4] odx
    ody[0] = 0; odx[0] = -1
    ody[1] = 0; odx[1] = 1
    ody[2] = -1; odx[2] = 0
    ody[3] = 1; odx[3] = 0
    with nogil:
        for seed in range(n):
            if lab[seed] >= 0:
                continue
            lab[seed] = current
            for k in range(c):
                total[k] = flat[seed, k]
            count = 1
            head = 0
            tail = 0
            queue[tail] = seed
            tail = tail + 1
            while head < tail:
                idx = queue[head]
                head = head + 1
                y = idx // w
                x = idx - y * w
                for j in range(4):
                    ny = y + ody[j]
                    nx = x + odx[j]
                    if ny < 0 or ny >= h or nx < 0 or nx >= w:
                        continue
                    nidx = ny * w + nx
                    if lab[nidx] >= 0:
                        continue
                    d2 = 0.0
                    for k in range(c):
                        diff = flat[nidx, k] - total[k] / count
                        d2 = d2 + diff * diff
                    if d2 < thr2:
                        lab[nidx] = current
                        for k in range(c):
                            total[k] = total[k] + flat[nidx, k]
                        count = count + 1
                        queue[tail] = nidx
                        tail = tail + 1
            current = current + 1
    return labels


cdef inline double _bilinear(const double[:, :, ::1] stack, Py_ssize_t v, Py_ssize_t x0,
                             Py_ssize_t y0, double ax, double ay) noexcept nogil:
    return ((1.0 - ay) * ((1.0 - ax) * stack[v, y0, x0] + ax * stack[v, y0, x0 + 1])
            + ay * ((1.0 - ax) * stack[v, y0 + 1, x0] + ax * stack[v, y0 + 1, x0 + 1]))


def photometric_costs(const double[:, :, ::1] images, const double[:, :, ::1] grads,
                      const double[:, :, :, ::1] H, const double[::1] weights,
                      const double[::1] xs, const double[::1] ys):
    cdef Py_ssize_t nk = H.shape[0], nv = H.shape[1]
    cdef Py_ssize_t h = images.shape[1], w = images.shape[2]
    cdef Py_ssize_t npx = xs.shape[0]
    cdef Py_ssize_t k, v, i, x0, y0, nvalid
    cdef double x, y, den, u, vv, ax, ay, wsum, mu_i, mu_g, var_i, var_g, d, wt
    cdef double acc_i, acc_g
    cdef cnp.int64_t bad
    psi_i = np.zeros(nk, dtype=np.float64)
    psi_g = np.zeros(nk, dtype=np.float64)
    nbad = np.zeros(nk, dtype=np.int64)
    cdef double[::1] out_i = psi_i
    cdef double[::1] out_g = psi_g
    cdef cnp.int64_t[::1] out_b = nbad
    cdef double[::1] si = np.empty(nv, dtype=np.float64)
    cdef double[::1] sg = np.empty(nv, dtype=np.float64)
    cdef double[::1] sw = np.empty(nv, dtype=np.float64)
    cdef signed char[::1] ok = np.zeros(nv, dtype=np.int8)
    with nogil:
        for k in range(nk):
            acc_i = 0.0
            acc_g = 0.0
            bad = 0
            for i in range(npx):
                x = xs[i]
                y = ys[i]
                nvalid = 0
                for v in range(nv):
                    den = H[k, v, 2, 0] * x + H[k, v, 2, 1] * y + H[k, v, 2, 2]
                    u = (H[k, v, 0, 0] * x + H[k, v, 0, 1] * y + H[k, v, 0, 2]) / den
                    vv = (H[k, v, 1, 0] * x + H[k, v, 1, 1] * y + H[k, v, 1, 2]) / den
                    if not (u >= 0 and u <= w - 1 and vv >= 0 and vv <= h - 1 and den > 0):
                        ok[v] = 0
                        continue
                    x0 = <Py_ssize_t>floor(u)
                    y0 = <Py_ssize_t>floor(vv)
                    if x0 > w - 2:
                        x0 = w - 2
                    if y0 > h - 2:
                        y0 = h - 2
                    ax = u - x0
                    ay = vv - y0
                    si[v] = _bilinear(images, v, x0, y0, ax, ay)
                    sg[v] = _bilinear(grads, v, x0, y0, ax, ay)
                    sw[v] = weights[v]
                    ok[v] = 1
                    nvalid = nvalid + 1
                if nvalid < 2:
                    bad = bad + 1
                    continue
                wsum = 0.0
                mu_i = 0.0
                mu_g = 0.0
                for v in range(nv):
                    if not ok[v]:
                        continue
                    wsum = wsum + sw[v]
                    mu_i = mu_i + sw[v] * si[v]
                    mu_g = mu_g + sw[v] * sg[v]
                mu_i = mu_i / wsum
                mu_g = mu_g / wsum
                var_i = 0.0
                var_g = 0.0
                for v in range(nv):
                    if not ok[v]:
                        continue
                    wt = sw[v]
                    d = si[v] - mu_i
                    var_i = var_i + wt * d * d
                    d = sg[v] - mu_g
                    var_g = var_g + wt * d * d
                acc_i = acc_i + var_i / wsum
                acc_g = acc_g + var_g / wsum
            out_i[k] = acc_i
            out_g[k] = acc_g
            out_b[k] = bad
    return psi_i, psi_g, nbad
