"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable.  The arithmetic
is ordered like the compiled version so both backends agree bitwise on the
same inputs.
"""

import numpy as np

N_BINS = 11
FPFH_DIM = 3 * N_BINS


def pair_features(p1, n1, p2, n2):
    """Darboux-frame angles ``(f1, f2, f3)`` for arrays of point pairs."""
    dp = p2 - p1
    f4 = np.sqrt(dp[:, 0] * dp[:, 0] + dp[:, 1] * dp[:, 1] + dp[:, 2] * dp[:, 2])
    ok = f4 > 0.0
    safe = np.where(ok, f4, 1.0)
    a1 = (n1[:, 0] * dp[:, 0] + n1[:, 1] * dp[:, 1] + n1[:, 2] * dp[:, 2]) / safe
    a2 = (n2[:, 0] * dp[:, 0] + n2[:, 1] * dp[:, 1] + n2[:, 2] * dp[:, 2]) / safe
    # acos is decreasing: the larger angle belongs to the smaller |cosine|
    swap = np.abs(a1) < np.abs(a2)
    u = np.where(swap[:, None], n2, n1)
    w2 = np.where(swap[:, None], n1, n2)
    d = np.where(swap[:, None], -dp, dp)
    f3 = np.where(swap, -a2, a1)
    v = np.empty_like(d)
    v[:, 0] = d[:, 1] * u[:, 2] - d[:, 2] * u[:, 1]
    v[:, 1] = d[:, 2] * u[:, 0] - d[:, 0] * u[:, 2]
    v[:, 2] = d[:, 0] * u[:, 1] - d[:, 1] * u[:, 0]
    vn = np.sqrt(v[:, 0] * v[:, 0] + v[:, 1] * v[:, 1] + v[:, 2] * v[:, 2])
    ok &= vn > 0.0
    v = v / np.where(vn > 0.0, vn, 1.0)[:, None]
    w = np.empty_like(v)
    w[:, 0] = u[:, 1] * v[:, 2] - u[:, 2] * v[:, 1]
    w[:, 1] = u[:, 2] * v[:, 0] - u[:, 0] * v[:, 2]
    w[:, 2] = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    f2 = v[:, 0] * w2[:, 0] + v[:, 1] * w2[:, 1] + v[:, 2] * w2[:, 2]
    f1 = np.arctan2(
        w[:, 0] * w2[:, 0] + w[:, 1] * w2[:, 1] + w[:, 2] * w2[:, 2],
        u[:, 0] * w2[:, 0] + u[:, 1] * w2[:, 1] + u[:, 2] * w2[:, 2],
    )
    f1 = np.where(ok, f1, 0.0)
    f2 = np.where(ok, f2, 0.0)
    f3 = np.where(ok, f3, 0.0)
    return f1, f2, f3


def _bins(f1, f2, f3):
    b1 = np.floor(N_BINS * (f1 + np.pi) / (2.0 * np.pi)).astype(np.intp)
    b2 = np.floor(N_BINS * (f2 + 1.0) * 0.5).astype(np.intp)
    b3 = np.floor(N_BINS * (f3 + 1.0) * 0.5).astype(np.intp)
    b1 = np.clip(b1, 0, N_BINS - 1)
    b2 = np.clip(b2, 0, N_BINS - 1)
    b3 = np.clip(b3, 0, N_BINS - 1)
    return b1, b2 + N_BINS, b3 + 2 * N_BINS


def spfh(points, normals, indptr, indices):
    """Simplified point feature histograms over CSR neighbor lists (self excluded)."""
    n = len(points)
    counts = np.diff(indptr)
    src = np.repeat(np.arange(n), counts)
    dst = indices
    hist = np.zeros((n, FPFH_DIM))
    if len(dst) == 0:
        return hist
    f1, f2, f3 = pair_features(points[src], normals[src], points[dst], normals[dst])
    incr = 100.0 / np.where(counts > 0, counts, 1).astype(np.float64)
    inc = incr[src]
    b1, b2, b3 = _bins(f1, f2, f3)
    np.add.at(hist, (src, b1), inc)
    np.add.at(hist, (src, b2), inc)
    np.add.at(hist, (src, b3), inc)
    return hist


def fpfh(points, spfh_hist, indptr, indices):
    """Distance-weighted accumulation of neighbor SPFHs onto each point."""
    n = len(points)
    counts = np.diff(indptr)
    src = np.repeat(np.arange(n), counts)
    dst = indices
    out = np.zeros((n, FPFH_DIM))
    if len(dst) > 0:
        dp = points[dst] - points[src]
        d2 = dp[:, 0] * dp[:, 0] + dp[:, 1] * dp[:, 1] + dp[:, 2] * dp[:, 2]
        keep = d2 != 0.0
        src, dst, d2 = src[keep], dst[keep], d2[keep]
        np.add.at(out, src, spfh_hist[dst] / d2[:, None])
    for g in range(3):
        block = out[:, g * N_BINS:(g + 1) * N_BINS]
        s = np.zeros(n)
        for j in range(N_BINS):
            s = s + block[:, j]
        factor = np.where(s != 0.0, 100.0 / np.where(s != 0.0, s, 1.0), 1.0)
        block *= factor[:, None]
    out += spfh_hist
    return out


def greedy_select(points, init, s_max, use_min):
    """Greedy center selection by maximal mean (or min) distance to the selected set."""
    n = len(points)
    selected = np.zeros(n, dtype=bool)
    agg = np.full(n, np.inf) if use_min else np.zeros(n)
    order = np.empty(s_max, dtype=np.intp)
    count = 0

    def add(i):
        nonlocal agg
        dp = points - points[i]
        d = np.sqrt(dp[:, 0] * dp[:, 0] + dp[:, 1] * dp[:, 1] + dp[:, 2] * dp[:, 2])
        if use_min:
            np.minimum(agg, d, out=agg)
        else:
            agg += d

    for i in init:
        order[count] = i
        count += 1
        selected[i] = True
        add(i)
    while count < s_max:
        masked = np.where(selected, -np.inf, agg)
        i = int(np.argmax(masked))
        order[count] = i
        count += 1
        selected[i] = True
        add(i)
    return order
