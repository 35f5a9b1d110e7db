"""Explicit linear operators: blur, discrete gradients and fan-beam projectors.

Every operator is materialized as a matrix, either a dense ``ndarray`` or a
CSR matrix, and wrapped in :class:`LinearOperator` which exposes forward and
transpose application.

Images are vectorized column-major: an image with ``n_x`` columns and ``n_y``
rows is stored as an array of shape ``(n_y, n_x)`` and flattened in Fortran
order, so pixel ``(row, col)`` has index ``row + n_y * col``.  Row 0 is the
top of the image.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

__all__ = [
    "LinearOperator",
    "GradientOperator",
    "build_gradient_1d",
    "build_gradient_2d",
    "build_gaussian_blur",
    "build_radon_fanbeam",
    "ray_pixel_intersections",
    "image_to_vector",
    "vector_to_image",
    "DENSE_ENTRY_BUDGET",
]

# operators with more entries than this are stored sparse
DENSE_ENTRY_BUDGET = 500 * 500


class LinearOperator:
    """A real ``rows x cols`` matrix, stored dense or as CSR."""

    def __init__(self, matrix, description: str = ""):
        if sp.issparse(matrix):
            matrix = sp.csr_matrix(matrix, dtype=float)
            matrix.sort_indices()
        else:
            matrix = np.ascontiguousarray(matrix, dtype=float)
            if matrix.ndim != 2:
                raise ValueError("operator matrix must be two-dimensional")
        self._matrix = matrix
        self.description = description

    @classmethod
    def auto(cls, matrix, description: str = "") -> "LinearOperator":
        """Pick dense or sparse storage according to ``DENSE_ENTRY_BUDGET``."""
        rows, cols = matrix.shape
        if rows * cols <= DENSE_ENTRY_BUDGET:
            if sp.issparse(matrix):
                matrix = matrix.toarray()
        elif not sp.issparse(matrix):
            matrix = sp.csr_matrix(matrix)
        return cls(matrix, description)

    @property
    def matrix(self):
        return self._matrix

    @property
    def shape(self) -> tuple[int, int]:
        return self._matrix.shape

    @property
    def rows(self) -> int:
        return self._matrix.shape[0]

    @property
    def cols(self) -> int:
        return self._matrix.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self._matrix)

    @property
    def nnz(self) -> int:
        if self.is_sparse:
            return int(self._matrix.nnz)
        return int(np.count_nonzero(self._matrix))

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.cols:
            raise ValueError(f"expected leading dimension {self.cols}, got {x.shape[0]}")
        return np.asarray(self._matrix @ x)

    def apply_transpose(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.rows:
            raise ValueError(f"expected leading dimension {self.rows}, got {y.shape[0]}")
        return np.asarray(self._matrix.T @ y)

    def __matmul__(self, x):
        return self.apply(x)

    @property
    def T(self) -> "LinearOperator":
        return LinearOperator(self._matrix.T, description=f"transpose of {self.description}")

    def row_scaled(self, d: np.ndarray) -> "LinearOperator":
        """Return ``diag(d) @ self`` with the same storage kind."""
        d = np.asarray(d, dtype=float)
        if d.shape != (self.rows,):
            raise ValueError("row scaling vector has wrong length")
        if self.is_sparse:
            scaled = sp.diags(d, format="csr") @ self._matrix
        else:
            scaled = d[:, None] * self._matrix
        return LinearOperator(scaled, description=self.description)

    def to_dense(self) -> "LinearOperator":
        if self.is_sparse:
            return LinearOperator(self._matrix.toarray(), self.description)
        return self

    def to_sparse(self) -> "LinearOperator":
        if self.is_sparse:
            return self
        return LinearOperator(sp.csr_matrix(self._matrix), self.description)

    def toarray(self) -> np.ndarray:
        if self.is_sparse:
            return self._matrix.toarray()
        return self._matrix.copy()

    def write_matrix_market(self, path: str | Path) -> None:
        """Write the operator as a coordinate Matrix Market file."""
        scipy.io.mmwrite(
            str(path),
            sp.coo_matrix(self._matrix),
            comment=self.description,
            field="real",
            symmetry="general",
        )

    def __repr__(self) -> str:
        kind = "sparse" if self.is_sparse else "dense"
        return f"LinearOperator({self.rows}x{self.cols}, {kind}, {self.description!r})"


class GradientOperator(LinearOperator):
    """Forward-difference operator for a 1D signal or a 2D image.

    ``geometry`` is ``(n,)`` for signals and ``(n_x, n_y)`` for images.
    """

    def __init__(self, matrix, geometry: tuple[int, ...], description: str = ""):
        super().__init__(matrix, description)
        self.geometry = tuple(int(g) for g in geometry)


def _difference_matrix(n: int, square: bool) -> sp.csr_matrix:
    main = -np.ones(n)
    upper = np.ones(n - 1)
    D = sp.diags([main, upper], [0, 1], shape=(n, n), format="lil")
    # homogeneous Neumann: the ghost sample past the end equals the last one
    D[n - 1, n - 1] = 0.0
    D = D.tocsr()
    D.eliminate_zeros()
    if not square:
        D = D[: n - 1]
    return D


def build_gradient_1d(n: int) -> GradientOperator:
    """Return the ``(n-1) x n`` forward difference, ``(Lx)_i = x[i+1] - x[i]``."""
    if n < 2:
        raise ValueError(f"gradient needs at least 2 samples, got n={n}")
    D = _difference_matrix(n, square=False)
    return GradientOperator(
        LinearOperator.auto(D).matrix, geometry=(n,), description=f"1D forward difference, n={n}"
    )


def build_gradient_2d(n_x: int, n_y: int) -> GradientOperator:
    """Stacked horizontal and vertical forward differences of an ``n_y x n_x`` image.

    Each 1D factor is the square ``n x n`` difference whose last row is zero
    (Neumann boundary), so the operator has ``2 * n_x * n_y`` rows.  The first
    block differences along columns (x direction), the second along rows.
    """
    if n_x < 2 or n_y < 2:
        raise ValueError(f"gradient needs a grid of at least 2x2, got {n_x}x{n_y}")
    Dx = _difference_matrix(n_x, square=True)
    Dy = _difference_matrix(n_y, square=True)
    horizontal = sp.kron(Dx, sp.identity(n_y), format="csr")
    vertical = sp.kron(sp.identity(n_x), Dy, format="csr")
    L = sp.vstack([horizontal, vertical], format="csr")
    L.eliminate_zeros()
    return GradientOperator(
        LinearOperator.auto(L).matrix,
        geometry=(n_x, n_y),
        description=f"2D forward difference, {n_x}x{n_y}",
    )


def default_blur_halfwidth(sigma: float) -> int:
    return max(1, int(math.ceil(4.0 * sigma)))


def build_gaussian_blur(n: int, sigma: float, kernel_halfwidth: int | None = None) -> LinearOperator:
    """Banded Gaussian convolution matrix with rows normalized to sum to one.

    The kernel ``exp(-k^2 / (2 sigma^2))`` is truncated at ``|k| <= kernel_halfwidth``
    and at the signal ends; each row is divided by the mass of its in-range
    support.
    """
    if sigma <= 0:
        raise ValueError(f"blur width must be positive, got sigma={sigma}")
    if kernel_halfwidth is None:
        kernel_halfwidth = default_blur_halfwidth(sigma)
    if kernel_halfwidth < 1:
        raise ValueError("kernel_halfwidth must be at least 1")
    if n < 1:
        raise ValueError("n must be positive")

    offsets = np.arange(-kernel_halfwidth, kernel_halfwidth + 1)
    kernel = np.exp(-(offsets.astype(float) ** 2) / (2.0 * sigma**2))
    rows, cols, vals = [], [], []
    for i in range(n):
        j = i + offsets
        keep = (j >= 0) & (j < n)
        k = kernel[keep]
        rows.append(np.full(k.size, i))
        cols.append(j[keep])
        vals.append(k / k.sum())
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    A.eliminate_zeros()
    return LinearOperator.auto(
        A, description=f"Gaussian blur, n={n}, sigma={sigma:g}, halfwidth={kernel_halfwidth}"
    )


def ray_pixel_intersections(
    n: int, start: Sequence[float], end: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    """Exact intersection lengths of a segment with the pixels of an ``n x n`` grid.

    The grid covers ``[-n/2, n/2]^2`` with unit pixels.  Returns pixel indices
    (column-major, row 0 at the top) and the chord length inside each pixel.
    A segment that misses the grid yields two empty arrays.
    """
    p0 = np.asarray(start, dtype=float)
    p1 = np.asarray(end, dtype=float)
    delta = p1 - p0
    length = float(np.hypot(*delta))
    empty = (np.empty(0, dtype=np.int64), np.empty(0))
    if length == 0.0:
        return empty

    half = n / 2.0
    a_lo, a_hi = 0.0, 1.0
    # clip the parameter range to the grid box
    for k in range(2):
        if delta[k] == 0.0:
            if not (-half <= p0[k] <= half):
                return empty
            continue
        ta = (-half - p0[k]) / delta[k]
        tb = (half - p0[k]) / delta[k]
        a_lo = max(a_lo, min(ta, tb))
        a_hi = min(a_hi, max(ta, tb))
    if a_hi <= a_lo:
        return empty

    planes = np.arange(n + 1, dtype=float) - half
    alphas = [np.array([a_lo, a_hi])]
    for k in range(2):
        if delta[k] != 0.0:
            a = (planes - p0[k]) / delta[k]
            alphas.append(a[(a > a_lo) & (a < a_hi)])
    alpha = np.unique(np.concatenate(alphas))
    seg = np.diff(alpha) * length
    mid = 0.5 * (alpha[:-1] + alpha[1:])
    px = p0[0] + mid * delta[0]
    py = p0[1] + mid * delta[1]
    col = np.floor(px + half).astype(np.int64)
    row = np.floor(half - py).astype(np.int64)
    np.clip(col, 0, n - 1, out=col)
    np.clip(row, 0, n - 1, out=row)
    keep = seg > 0.0
    idx = row[keep] + n * col[keep]
    return idx, seg[keep]


def fanbeam_rays(n: int, angles_deg: Sequence[float], detectors_per_angle: int):
    """Yield ``(start, end)`` segments for every ray, angle-major.

    Sources sit on a circle of radius ``n`` (twice the image half-width).  Each
    source emits an equiangular fan whose edge rays are tangent to the circle
    circumscribing the image; every ray ends on the far side of that circle.
    """
    radius = float(n)
    half_diag = n / math.sqrt(2.0)
    half_fan = math.asin(half_diag / radius)
    if detectors_per_angle == 1:
        gammas = np.zeros(1)
    else:
        gammas = np.linspace(-half_fan, half_fan, detectors_per_angle)
    reach = 2.0 * radius
    for theta in np.deg2rad(np.asarray(angles_deg, dtype=float)):
        source = radius * np.array([math.cos(theta), math.sin(theta)])
        for g in gammas:
            phi = theta + math.pi + g
            end = source + reach * np.array([math.cos(phi), math.sin(phi)])
            yield source, end


def build_radon_fanbeam(
    n: int, angles_deg: Sequence[float], detectors_per_angle: int = 181
) -> LinearOperator:
    """Fan-beam projection matrix of an ``n x n`` image by exact ray tracing.

    Row ``a * detectors_per_angle + k`` holds the intersection lengths of ray
    ``k`` from source angle ``angles_deg[a]`` with every pixel.
    """
    if isinstance(n, tuple):
        if n[0] != n[1]:
            raise ValueError("only square grids are supported")
        n = n[0]
    if n < 2:
        raise ValueError("grid must be at least 2x2")
    angles = list(angles_deg)
    if not angles:
        raise ValueError("angle list is empty")
    if detectors_per_angle < 1:
        raise ValueError("detectors_per_angle must be at least 1")

    indptr = [0]
    indices, data = [], []
    for start, end in fanbeam_rays(n, angles, detectors_per_angle):
        idx, seg = ray_pixel_intersections(n, start, end)
        order = np.argsort(idx, kind="stable")
        indices.append(idx[order])
        data.append(seg[order])
        indptr.append(indptr[-1] + idx.size)
    A = sp.csr_matrix(
        (np.concatenate(data), np.concatenate(indices), np.asarray(indptr)),
        shape=(len(angles) * detectors_per_angle, n * n),
    )
    return LinearOperator(
        A,
        description=(
            f"fan-beam projector, {n}x{n} grid, {len(angles)} angles "
            f"in [{min(angles):g}, {max(angles):g}] deg, {detectors_per_angle} detectors"
        ),
    )


def image_to_vector(image: np.ndarray) -> np.ndarray:
    return np.asarray(image, dtype=float).ravel(order="F")


def vector_to_image(x: np.ndarray, n_x: int, n_y: int | None = None) -> np.ndarray:
    if n_y is None:
        n_y = n_x
    return np.asarray(x).reshape((n_y, n_x), order="F")
