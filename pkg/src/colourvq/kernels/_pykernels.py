"""Pure-numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation. ``nearest_code`` in
particular accumulates squared distances in the same sequential order as the
compiled loop so both backends produce the same code assignments.
"""

import numpy as np

_POW25_7 = 25.0**7


def ciede2000(lab1, lab2):
    """CIEDE2000 colour difference for paired rows of two ``(n, 3)`` arrays."""
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    L1, a1, b1 = lab1[:, 0], lab1[:, 1], lab1[:, 2]
    L2, a2, b2 = lab2[:, 0], lab2[:, 1], lab2[:, 2]

    c_bar = 0.5 * (np.hypot(a1, b1) + np.hypot(a2, b2))
    c_bar7 = c_bar**7
    g = 0.5 * (1.0 - np.sqrt(c_bar7 / (c_bar7 + _POW25_7)))
    a1p = (1.0 + g) * a1
    a2p = (1.0 + g) * a2
    c1p = np.hypot(a1p, b1)
    c2p = np.hypot(a2p, b2)

    h1p = np.where((a1p == 0) & (b1 == 0), 0.0, np.degrees(np.arctan2(b1, a1p)) % 360.0)
    h2p = np.where((a2p == 0) & (b2 == 0), 0.0, np.degrees(np.arctan2(b2, a2p)) % 360.0)

    dLp = L2 - L1
    dCp = c2p - c1p
    chroma_prod = c1p * c2p
    dh = h2p - h1p
    dhp = np.where(dh > 180.0, dh - 360.0, np.where(dh < -180.0, dh + 360.0, dh))
    dhp = np.where(chroma_prod == 0, 0.0, dhp)
    dHp = 2.0 * np.sqrt(chroma_prod) * np.sin(np.radians(dhp) / 2.0)

    Lbp = 0.5 * (L1 + L2)
    Cbp = 0.5 * (c1p + c2p)
    hsum = h1p + h2p
    hbp = np.where(
        np.abs(h1p - h2p) <= 180.0,
        hsum / 2.0,
        np.where(hsum < 360.0, (hsum + 360.0) / 2.0, (hsum - 360.0) / 2.0),
    )
    hbp = np.where(chroma_prod == 0, hsum, hbp)

    t = (
        1.0
        - 0.17 * np.cos(np.radians(hbp - 30.0))
        + 0.24 * np.cos(np.radians(2.0 * hbp))
        + 0.32 * np.cos(np.radians(3.0 * hbp + 6.0))
        - 0.20 * np.cos(np.radians(4.0 * hbp - 63.0))
    )
    d_theta = 30.0 * np.exp(-(((hbp - 275.0) / 25.0) ** 2))
    cbp7 = Cbp**7
    rc = 2.0 * np.sqrt(cbp7 / (cbp7 + _POW25_7))
    lm = (Lbp - 50.0) ** 2
    sl = 1.0 + 0.015 * lm / np.sqrt(20.0 + lm)
    sc = 1.0 + 0.045 * Cbp
    sh = 1.0 + 0.015 * Cbp * t
    rt = -np.sin(np.radians(2.0 * d_theta)) * rc

    tl = dLp / sl
    tc = dCp / sc
    th = dHp / sh
    return np.sqrt(np.maximum(tl * tl + tc * tc + th * th + rt * tc * th, 0.0))


def nearest_code(z, codebook, lesioned):
    """Index of the nearest non-lesioned codebook row for each row of ``z``.

    Ties resolve to the lowest index. Returns int64 indices; -1 never occurs
    because callers guarantee at least one live vector.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    codebook = np.ascontiguousarray(codebook, dtype=np.float64)
    dist = np.zeros((z.shape[0], codebook.shape[0]))
    for d in range(z.shape[1]):
        diff = z[:, d, None] - codebook[None, :, d]
        dist += diff * diff
    dist[:, np.asarray(lesioned, dtype=bool)] = np.inf
    # argmin returns the first occurrence of the minimum
    return np.argmin(dist, axis=1).astype(np.int64)
