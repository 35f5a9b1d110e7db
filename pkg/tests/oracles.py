"""Reference computations that share no code with the package.

Each oracle works on plain dense arrays and uses the most direct formula
available, so agreement with the package is evidence of correctness rather
than of a shared bug.
"""
import numpy as np


def dense_tikhonov(A, L, b, lam, w=None):
    """Solve ``(A^T A + lam L^T W^2 L) x = A^T b`` by a dense factorization."""
    A = np.asarray(A, dtype=float)
    L = np.asarray(L, dtype=float)
    w2 = np.ones(L.shape[0]) if w is None else np.asarray(w, dtype=float) ** 2
    lhs = A.T @ A + lam * L.T @ (w2[:, None] * L)
    return np.linalg.solve(lhs, A.T @ b)


def half_objective(A, L, b, x, lam, w):
    r = A @ x - b
    s = w * (L @ x)
    return 0.5 * (r @ r + lam * s @ s)


def central_difference_gradient(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def projected_residual(A, L, b, V, w, lam):
    """``||A V z - b||`` with ``z`` from the projected normal equations."""
    AV = A @ V
    WLV = w[:, None] * (L @ V)
    z = np.linalg.solve(AV.T @ AV + lam * WLV.T @ WLV, AV.T @ b)
    return float(np.linalg.norm(AV @ z - b))


def gaussian_row(n, i, sigma, halfwidth):
    """Row ``i`` of the truncated, renormalized Gaussian blur, built entry by entry."""
    row = np.zeros(n)
    for j in range(max(0, i - halfwidth), min(n, i + halfwidth + 1)):
        row[j] = np.exp(-((j - i) ** 2) / (2.0 * sigma**2))
    return row / row.sum()


def sampled_chord_lengths(n, start, end, samples=400_000):
    """Approximate pixel intersection lengths by dense midpoint sampling along the ray.

    Pixels are unit squares covering ``[-n/2, n/2]^2``, indexed column-major
    with row 0 at the top.
    """
    p0 = np.asarray(start, dtype=float)
    p1 = np.asarray(end, dtype=float)
    t = (np.arange(samples) + 0.5) / samples
    pts = p0 + t[:, None] * (p1 - p0)
    step = np.linalg.norm(p1 - p0) / samples
    half = n / 2.0
    inside = (np.abs(pts[:, 0]) < half) & (np.abs(pts[:, 1]) < half)
    col = np.floor(pts[inside, 0] + half).astype(int)
    row = np.floor(half - pts[inside, 1]).astype(int)
    out = np.zeros(n * n)
    np.add.at(out, row + n * col, step)
    return out


def difference_matrix_2d_by_hand(n_x, n_y):
    """Horizontal then vertical forward differences, looping over pixels.

    Pixel ``(row, col)`` has index ``row + n_y * col``; the difference past
    the last column (row) is zero.
    """
    N = n_x * n_y
    L = np.zeros((2 * N, N))
    for col in range(n_x):
        for row in range(n_y):
            k = row + n_y * col
            if col + 1 < n_x:
                L[k, k] = -1.0
                L[k, row + n_y * (col + 1)] = 1.0
            if row + 1 < n_y:
                L[N + k, k] = -1.0
                L[N + k, row + 1 + n_y * col] = 1.0
    return L
