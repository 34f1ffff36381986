"""Pure numpy implementations of the hot kernels.

Semantics match ``_ckernels.pyx`` exactly; region growing is bit-identical,
the floating point kernels agree to rounding.
"""

from collections import deque

import numpy as np


def bilateral_filter(img, sigma_s, sigma_r, radius):
    h, w, c = img.shape
    num = np.zeros_like(img)
    den = np.zeros((h, w))
    inv_s = -0.5 / (sigma_s * sigma_s)
    inv_r = -0.5 / (sigma_r * sigma_r)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            ws = np.exp((dx * dx + dy * dy) * inv_s)
            # destination rows/cols whose neighbour at (dy, dx) is inside the image
            y0, y1 = max(0, -dy), min(h, h - dy)
            x0, x1 = max(0, -dx), min(w, w - dx)
            if y0 >= y1 or x0 >= x1:
                continue
            center = img[y0:y1, x0:x1]
            nb = img[y0 + dy : y1 + dy, x0 + dx : x1 + dx]
            diff = nb - center
            wgt = ws * np.exp(np.sum(diff * diff, axis=2) * inv_r)
            num[y0:y1, x0:x1] += wgt[:, :, None] * nb
            den[y0:y1, x0:x1] += wgt
    return num / den[:, :, None]


def region_grow(img, threshold):
    h, w, c = img.shape
    thr2 = threshold * threshold
    labels = np.full((h, w), -1, dtype=np.int64)
    flat = img.reshape(h * w, c)
    lab = labels.reshape(-1)
    offsets = ((0, -1), (0, 1), (-1, 0), (1, 0))
    current = 0
    for seed in range(h * w):
        if lab[seed] >= 0:
            continue
        lab[seed] = current
        total = flat[seed].copy()
        count = 1
        queue = deque([seed])
        while queue:
            idx = queue.popleft()
            y, x = divmod(idx, w)
            for dy, dx in offsets:
                ny, nx = y + dy, x + dx
                if ny < 0 or ny >= h or nx < 0 or nx >= w:
                    continue
                nidx = ny * w + nx
                if lab[nidx] >= 0:
                    continue
                mean = total / count
                diff = flat[nidx] - mean
                d2 = 0.0
                for k in range(c):
                    d2 += diff[k] * diff[k]
                if d2 < thr2:
                    lab[nidx] = current
                    total += flat[nidx]
                    count += 1
                    queue.append(nidx)
        current += 1
    return labels


def photometric_costs(images, grads, homographies, weights, xs, ys):
    """Summed weighted variance of intensity and gradient across views.

    ``homographies`` has shape ``(K, V, 3, 3)``.  Returns per-candidate
    intensity cost, gradient cost and the number of pixels skipped for
    having fewer than two in-bounds samples.
    """
    nv, h, w = images.shape
    H = homographies
    xs = xs[None, None, :]
    ys = ys[None, None, :]
    den = H[:, :, 2, 0, None] * xs + H[:, :, 2, 1, None] * ys + H[:, :, 2, 2, None]
    u = (H[:, :, 0, 0, None] * xs + H[:, :, 0, 1, None] * ys + H[:, :, 0, 2, None]) / den
    v = (H[:, :, 1, 0, None] * xs + H[:, :, 1, 1, None] * ys + H[:, :, 1, 2, None]) / den
    valid = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1) & (den > 0)
    uc = np.where(valid, u, 0.0)
    vc = np.where(valid, v, 0.0)
    x0 = np.minimum(np.floor(uc).astype(np.int64), w - 2)
    y0 = np.minimum(np.floor(vc).astype(np.int64), h - 2)
    ax = uc - x0
    ay = vc - y0
    vidx = np.arange(nv)[None, :, None]
    base = (vidx * h + y0) * w + x0

    def sample(stack):
        flat = stack.reshape(-1)
        i00 = flat[base]
        i01 = flat[base + 1]
        i10 = flat[base + w]
        i11 = flat[base + w + 1]
        return (1.0 - ay) * ((1.0 - ax) * i00 + ax * i01) + ay * ((1.0 - ax) * i10 + ax * i11)

    wv = np.where(valid, weights[None, :, None], 0.0)
    wsum = wv.sum(axis=1)
    nvalid = valid.sum(axis=1)
    ok = nvalid >= 2
    safe = np.where(ok, wsum, 1.0)
    out = []
    for stack in (images, grads):
        s = sample(stack)
        mu = (wv * s).sum(axis=1) / safe
        d = s - mu[:, None, :]
        var = (wv * d * d).sum(axis=1) / safe
        out.append(np.where(ok, var, 0.0).sum(axis=1))
    return out[0], out[1], (~ok).sum(axis=1).astype(np.int64)
